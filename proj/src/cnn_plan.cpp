#include "mcml/cnn_plan.hpp"

#include <algorithm>

namespace mcml {

namespace {

// Dependency count of each input pixel: how many output windows contain it.
std::vector<int> dependency_counts(int in_h, int in_w, int out_h, int out_w, int kernel,
                                   int stride) {
    std::vector<int> deps(static_cast<std::size_t>(in_h) * in_w, 0);
    for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j)
            for (int dy = 0; dy < kernel; ++dy)
                for (int dx = 0; dx < kernel; ++dx)
                    deps[(i * stride + dy) * in_w + (j * stride + dx)] += 1;
    return deps;
}

// Fill stale_after by replaying the visit order against the counters.
// Pixels no output reads (pool leftovers on odd dims) retire on step 0.
void attach_staleness(TraversalPlan& plan) {
    std::vector<int> deps =
        dependency_counts(plan.in_h, plan.in_w, plan.out_h, plan.out_w, plan.kernel, plan.stride);
    if (!plan.steps.empty())
        for (std::size_t p = 0; p < deps.size(); ++p)
            if (deps[p] == 0) plan.steps[0].stale_after.push_back(static_cast<std::uint32_t>(p));
    for (PlanStep& step : plan.steps) {
        for (int dy = 0; dy < plan.kernel; ++dy)
            for (int dx = 0; dx < plan.kernel; ++dx) {
                int r = step.out_r * plan.stride + dy;
                int c = step.out_c * plan.stride + dx;
                std::uint32_t id = static_cast<std::uint32_t>(r * plan.in_w + c);
                if (--deps[id] == 0) step.stale_after.push_back(id);
            }
        std::sort(step.stale_after.begin(), step.stale_after.end());
    }
}

} // namespace

TraversalPlan plan_herringbone(int in_h, int in_w, int in_c, int out_c, int kernel) {
    MCML_CHECK(kernel >= 1 && in_h >= kernel && in_w >= kernel, "invalid dims for plan");
    MCML_CHECK(out_c > in_c, "herringbone plan is for channel-growing layers");
    TraversalPlan plan;
    plan.in_h = in_h;
    plan.in_w = in_w;
    plan.kernel = kernel;
    plan.stride = 1;
    plan.out_h = in_h - kernel + 1;
    plan.out_w = in_w - kernel + 1;
    int r0 = 0, r1 = plan.out_h - 1, c0 = 0, c1 = plan.out_w - 1;
    while (r0 <= r1 && c0 <= c1) {
        for (int j = c0; j <= c1; ++j) plan.steps.push_back({r0, j, {}});
        ++r0;
        if (r0 > r1) break;
        for (int i = r0; i <= r1; ++i) plan.steps.push_back({i, c0, {}});
        ++c0;
    }
    attach_staleness(plan);
    return plan;
}

TraversalPlan plan_rowmajor(int in_h, int in_w, int kernel, int stride) {
    MCML_CHECK(kernel >= 1 && stride >= 1 && in_h >= kernel && in_w >= kernel,
               "invalid dims for plan");
    TraversalPlan plan;
    plan.in_h = in_h;
    plan.in_w = in_w;
    plan.kernel = kernel;
    plan.stride = stride;
    plan.out_h = (in_h - kernel) / stride + 1;
    plan.out_w = (in_w - kernel) / stride + 1;
    for (int i = 0; i < plan.out_h; ++i)
        for (int j = 0; j < plan.out_w; ++j) plan.steps.push_back({i, j, {}});
    attach_staleness(plan);
    return plan;
}

std::uint64_t plan_peak_elems(const TraversalPlan& plan, int in_c, int out_c) {
    std::uint64_t live_in = static_cast<std::uint64_t>(plan.in_h) * plan.in_w;
    std::uint64_t written = 0;
    std::uint64_t peak = live_in * in_c;
    for (const PlanStep& step : plan.steps) {
        live_in -= step.stale_after.size();
        written += 1;
        peak = std::max(peak, live_in * in_c + written * out_c);
    }
    return peak;
}

} // namespace mcml

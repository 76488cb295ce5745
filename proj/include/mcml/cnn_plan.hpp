#pragma once

#include <cstdint>
#include <vector>

#include "mcml/common.hpp"

namespace mcml {

// One step computes every output channel of one output pixel. stale_after
// lists the input pixels (flat r*in_w+c ids) whose last dependent output is
// this step; their storage is reusable once the step completes.
struct PlanStep {
    int out_r = 0;
    int out_c = 0;
    std::vector<std::uint32_t> stale_after;
};

struct TraversalPlan {
    int in_h = 0, in_w = 0;
    int out_h = 0, out_w = 0;
    int kernel = 0;  // window side; pools use window 2 with stride 2
    int stride = 1;
    std::vector<PlanStep> steps;
};

// Herringbone order for channel-growing stride-1 valid convolutions: the
// top row of the untouched output region, then the left column of what
// remains, alternating until the region is exhausted. Requires
// out_c > in_c; pass the channel counts so the precondition is checked.
TraversalPlan plan_herringbone(int in_h, int in_w, int in_c, int out_c, int kernel);

// Row-major order; valid whenever out_c <= in_c (outputs reuse the pixel
// they retire). Window/stride cover both convolutions and 2x2 pools.
TraversalPlan plan_rowmajor(int in_h, int in_w, int kernel, int stride);

// Peak live element count while executing the plan with in_c input channels
// and out_c output channels: max over steps of
//   live input pixels * in_c + written output pixels * out_c,
// including the all-inputs-live state before the first step.
std::uint64_t plan_peak_elems(const TraversalPlan& plan, int in_c, int out_c);

} // namespace mcml

#include "mcml/cnn_inplace.hpp"

#include <algorithm>
#include <limits>

namespace mcml {

namespace {

// Element-granular arena. Slots hold one activation; the free list reuses
// retired input slots before the arena grows, so the arena high-water mark
// equals the peak live count.
class Arena {
public:
    explicit Arena(std::vector<float> initial)
        : values_(std::move(initial)), live_(values_.size(), true) {
        live_count_ = values_.size();
        peak_ = live_count_;
    }

    float read(std::uint32_t slot) const {
        MCML_ASSERT(live_[slot], "read of a retired slot");
        return values_[slot];
    }

    void free_slot(std::uint32_t slot) {
        MCML_ASSERT(live_[slot], "double free of a slot");
        live_[slot] = false;
        free_.push_back(slot);
        --live_count_;
    }

    std::uint32_t store(float v) {
        std::uint32_t slot;
        if (!free_.empty()) {
            slot = free_.back();
            free_.pop_back();
        } else {
            slot = static_cast<std::uint32_t>(values_.size());
            values_.push_back(0.0f);
            live_.push_back(false);
        }
        MCML_ASSERT(!live_[slot], "write to a live slot");
        values_[slot] = v;
        live_[slot] = true;
        ++live_count_;
        peak_ = std::max(peak_, live_count_);
        return slot;
    }

    std::uint64_t peak() const { return peak_; }
    std::uint64_t size() const { return values_.size(); }

private:
    std::vector<float> values_;
    std::vector<bool> live_;
    std::vector<std::uint32_t> free_;
    std::uint64_t live_count_ = 0;
    std::uint64_t peak_ = 0;
};

// Slot ids of the current feature map, h,w,c interleaved like the dense
// executors so flatten order agrees.
using SlotMap = std::vector<std::uint32_t>;

void run_windowed(Arena& arena, SlotMap& map, Shape3& s, const LayerSpec& l,
                  const std::vector<float>& w, const std::vector<float>& b) {
    bool is_pool = l.kind == LayerKind::AvgPool || l.kind == LayerKind::MaxPool;
    int k = is_pool ? 2 : l.kernel;
    int stride = is_pool ? 2 : 1;
    int out_c = l.kind == LayerKind::Conv ? l.output_dim : s.c;
    TraversalPlan plan = (!is_pool && out_c > s.c)
                             ? plan_herringbone(s.h, s.w, s.c, out_c, k)
                             : plan_rowmajor(s.h, s.w, k, stride);
    SlotMap out_map(static_cast<std::size_t>(plan.out_h) * plan.out_w * out_c);
    std::vector<float> reg(static_cast<std::size_t>(out_c));
    for (const PlanStep& step : plan.steps) {
        int i = step.out_r, j = step.out_c;
        switch (l.kind) {
        case LayerKind::AvgPool:
        case LayerKind::MaxPool:
            for (int ch = 0; ch < s.c; ++ch) {
                float acc = l.kind == LayerKind::MaxPool
                                ? -std::numeric_limits<float>::infinity()
                                : 0.0f;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        float v = arena.read(
                            map[(static_cast<std::size_t>(2 * i + dy) * s.w + (2 * j + dx)) * s.c +
                                ch]);
                        acc = l.kind == LayerKind::MaxPool ? std::max(acc, v) : acc + v;
                    }
                reg[ch] = l.kind == LayerKind::MaxPool ? acc : acc * 0.25f;
            }
            break;
        case LayerKind::Conv:
            for (int co = 0; co < out_c; ++co) reg[co] = b[co];
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    std::size_t base = (static_cast<std::size_t>(i + dy) * s.w + (j + dx)) * s.c;
                    std::size_t wbase = (static_cast<std::size_t>(dy) * k + dx) * s.c * out_c;
                    for (int ci = 0; ci < s.c; ++ci) {
                        float v = arena.read(map[base + ci]);
                        const float* wrow = &w[wbase + static_cast<std::size_t>(ci) * out_c];
                        for (int co = 0; co < out_c; ++co) reg[co] += v * wrow[co];
                    }
                }
            break;
        case LayerKind::DepthwiseConv:
            for (int ch = 0; ch < s.c; ++ch) reg[ch] = b[ch];
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    std::size_t base = (static_cast<std::size_t>(i + dy) * s.w + (j + dx)) * s.c;
                    const float* wk = &w[(static_cast<std::size_t>(dy) * k + dx) * s.c];
                    for (int ch = 0; ch < s.c; ++ch) reg[ch] += arena.read(map[base + ch]) * wk[ch];
                }
            for (int ch = 0; ch < s.c; ++ch) reg[ch] = reg[ch] > 0.0f ? reg[ch] : 0.0f;
            break;
        default:
            MCML_ASSERT(false, "run_windowed on a non-windowed layer");
        }
        // retire inputs whose last reader was this step, then store
        for (std::uint32_t px : step.stale_after)
            for (int ch = 0; ch < s.c; ++ch)
                arena.free_slot(map[static_cast<std::size_t>(px) * s.c + ch]);
        std::size_t obase = (static_cast<std::size_t>(i) * plan.out_w + j) * out_c;
        for (int co = 0; co < out_c; ++co) out_map[obase + co] = arena.store(reg[co]);
    }
    map.swap(out_map);
    s = {plan.out_h, plan.out_w, out_c};
}

void run_dense(Arena& arena, SlotMap& map, Shape3& s, const LayerSpec& l,
               const std::vector<float>& w, const std::vector<float>& b) {
    int out_dim = l.output_dim;
    std::size_t in_n = map.size();
    SlotMap out_map(static_cast<std::size_t>(out_dim));
    float last = 0.0f;
    for (int o = 0; o < out_dim; ++o) {
        float acc = b[o];
        for (std::size_t i = 0; i < in_n; ++i)
            acc += arena.read(map[i]) * w[i * static_cast<std::size_t>(out_dim) + o];
        if (l.kind == LayerKind::DenseReLU && acc < 0.0f) acc = 0.0f;
        if (o + 1 < out_dim)
            out_map[o] = arena.store(acc);
        else
            last = acc; // inputs retire before the final unit lands
    }
    for (std::uint32_t slot : map) arena.free_slot(slot);
    out_map[static_cast<std::size_t>(out_dim) - 1] = arena.store(last);
    map.swap(out_map);
    s = {1, 1, out_dim};
}

} // namespace

InplaceResult forward_inplace(const CnnModel& model, const ImageTensor& image) {
    MCML_CHECK(image.height == kImageHeight && image.width == kImageWidth &&
                   image.channels == kImageChannels,
               "forward_inplace: image must be 32x32x3");
    std::size_t input_elems = image.data.size();
    Arena arena(image.data);
    SlotMap map(input_elems);
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = static_cast<std::uint32_t>(i);
    Shape3 s{image.height, image.width, image.channels};
    for (std::size_t li = 0; li < model.arch.layers.size(); ++li) {
        const LayerSpec& l = model.arch.layers[li];
        switch (l.kind) {
        case LayerKind::AvgPool:
        case LayerKind::MaxPool:
        case LayerKind::Conv:
        case LayerKind::DepthwiseConv:
            run_windowed(arena, map, s, l, model.weights[li], model.biases[li]);
            break;
        case LayerKind::DenseReLU:
        case LayerKind::DenseLinear:
            run_dense(arena, map, s, l, model.weights[li], model.biases[li]);
            break;
        case LayerKind::Dropout:
            break; // identity at inference
        }
    }
    InplaceResult res;
    res.logits.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) res.logits[i] = arena.read(map[i]);
    res.measured_peak_bytes = arena.peak();
    res.aux_bytes = arena.size() > input_elems ? arena.size() - input_elems : 0;
    return res;
}

} // namespace mcml

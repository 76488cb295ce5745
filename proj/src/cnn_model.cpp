#include "mcml/cnn_model.hpp"

#include "mcml/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <tuple>

namespace mcml {

namespace {

std::size_t weight_count(const LayerSpec& l, const Shape3& in) {
    switch (l.kind) {
    case LayerKind::Conv:
        return static_cast<std::size_t>(l.kernel) * l.kernel * in.c * l.output_dim;
    case LayerKind::DepthwiseConv:
        return static_cast<std::size_t>(l.kernel) * l.kernel * in.c;
    case LayerKind::DenseReLU:
    case LayerKind::DenseLinear:
        return in.elems() * static_cast<std::size_t>(l.output_dim);
    default:
        return 0;
    }
}

std::size_t bias_count(const LayerSpec& l, const Shape3& in) {
    switch (l.kind) {
    case LayerKind::Conv:
        return static_cast<std::size_t>(l.output_dim);
    case LayerKind::DepthwiseConv:
        return static_cast<std::size_t>(in.c);
    case LayerKind::DenseReLU:
    case LayerKind::DenseLinear:
        return static_cast<std::size_t>(l.output_dim);
    default:
        return 0;
    }
}

std::size_t fan_in(const LayerSpec& l, const Shape3& in) {
    switch (l.kind) {
    case LayerKind::Conv:
        return static_cast<std::size_t>(l.kernel) * l.kernel * in.c;
    case LayerKind::DepthwiseConv:
        return static_cast<std::size_t>(l.kernel) * l.kernel;
    case LayerKind::DenseReLU:
    case LayerKind::DenseLinear:
        return in.elems();
    default:
        return 1;
    }
}

} // namespace

CnnModel init_cnn(const ArchSpec& arch, Rng& rng) {
    CnnModel model;
    model.arch = arch;
    std::vector<Shape3> shapes = shape_chain(arch);
    model.weights.resize(arch.layers.size());
    model.biases.resize(arch.layers.size());
    for (std::size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& l = arch.layers[i];
        std::size_t nw = weight_count(l, shapes[i]);
        std::size_t nb = bias_count(l, shapes[i]);
        model.weights[i].resize(nw);
        model.biases[i].assign(nb, 0.0f);
        float s = std::sqrt(6.0f / static_cast<float>(fan_in(l, shapes[i])));
        for (float& w : model.weights[i]) w = rng.uniform_f(-s, s);
    }
    return model;
}

namespace {

// Conv weight layout: [(dy*k + dx)*in_c + ci]*out_c + co. Depthwise:
// (dy*k + dx)*c + ch. Dense: i*out + o. Feature maps are h,w,c interleaved.

void conv_forward(const std::vector<float>& in, Shape3 s, const std::vector<float>& w,
                  const std::vector<float>& b, int k, int out_c, std::vector<float>& out) {
    int oh = s.h - k + 1, ow = s.w - k + 1;
    out.assign(static_cast<std::size_t>(oh) * ow * out_c, 0.0f);
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            float* o = &out[(static_cast<std::size_t>(i) * ow + j) * out_c];
            for (int co = 0; co < out_c; ++co) o[co] = b[co];
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    const float* src = &in[(static_cast<std::size_t>(i + dy) * s.w + (j + dx)) * s.c];
                    const float* wk = &w[(static_cast<std::size_t>(dy) * k + dx) * s.c * out_c];
                    for (int ci = 0; ci < s.c; ++ci) {
                        float v = src[ci];
                        const float* wrow = wk + static_cast<std::size_t>(ci) * out_c;
                        for (int co = 0; co < out_c; ++co) o[co] += v * wrow[co];
                    }
                }
        }
}

void depthwise_forward(const std::vector<float>& in, Shape3 s, const std::vector<float>& w,
                       const std::vector<float>& b, int k, std::vector<float>& out) {
    int oh = s.h - k + 1, ow = s.w - k + 1;
    out.assign(static_cast<std::size_t>(oh) * ow * s.c, 0.0f);
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
            float* o = &out[(static_cast<std::size_t>(i) * ow + j) * s.c];
            for (int ch = 0; ch < s.c; ++ch) o[ch] = b[ch];
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    const float* src = &in[(static_cast<std::size_t>(i + dy) * s.w + (j + dx)) * s.c];
                    const float* wk = &w[(static_cast<std::size_t>(dy) * k + dx) * s.c];
                    for (int ch = 0; ch < s.c; ++ch) o[ch] += src[ch] * wk[ch];
                }
            for (int ch = 0; ch < s.c; ++ch) o[ch] = o[ch] > 0.0f ? o[ch] : 0.0f; // ReLU
        }
}

void pool_forward(const std::vector<float>& in, Shape3 s, bool is_max, std::vector<float>& out,
                  std::vector<int>* argmax) {
    int oh = s.h / 2, ow = s.w / 2;
    out.assign(static_cast<std::size_t>(oh) * ow * s.c, 0.0f);
    if (argmax) argmax->assign(out.size(), 0);
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            for (int ch = 0; ch < s.c; ++ch) {
                std::size_t oi = (static_cast<std::size_t>(i) * ow + j) * s.c + ch;
                if (is_max) {
                    float best = -std::numeric_limits<float>::infinity();
                    int best_id = 0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            std::size_t ii =
                                (static_cast<std::size_t>(2 * i + dy) * s.w + (2 * j + dx)) * s.c +
                                ch;
                            if (in[ii] > best) {
                                best = in[ii];
                                best_id = static_cast<int>(ii);
                            }
                        }
                    out[oi] = best;
                    if (argmax) (*argmax)[oi] = best_id;
                } else {
                    float sum = 0.0f;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            sum += in[(static_cast<std::size_t>(2 * i + dy) * s.w + (2 * j + dx)) *
                                          s.c +
                                      ch];
                    out[oi] = sum * 0.25f;
                }
            }
}

void dense_forward(const std::vector<float>& in, const std::vector<float>& w,
                   const std::vector<float>& b, int out_dim, bool relu,
                   std::vector<float>& out) {
    out.assign(static_cast<std::size_t>(out_dim), 0.0f);
    for (int o = 0; o < out_dim; ++o) out[o] = b[o];
    for (std::size_t i = 0; i < in.size(); ++i) {
        float v = in[i];
        const float* wrow = &w[i * static_cast<std::size_t>(out_dim)];
        for (int o = 0; o < out_dim; ++o) out[o] += v * wrow[o];
    }
    if (relu)
        for (float& v : out) v = v > 0.0f ? v : 0.0f;
}

} // namespace

std::vector<float> cnn_forward(const CnnModel& model, const std::vector<float>& input,
                               bool train, Rng* dropout_rng, CnnCache* cache) {
    std::vector<Shape3> shapes = shape_chain(model.arch);
    MCML_CHECK(input.size() == shapes[0].elems(), "cnn_forward: input shape mismatch");
    if (cache) {
        cache->acts.assign(model.arch.layers.size() + 1, {});
        cache->pool_argmax.assign(model.arch.layers.size(), {});
        cache->dropout_mask.assign(model.arch.layers.size(), {});
        cache->acts[0] = input;
    }
    std::vector<float> cur = input;
    std::vector<float> next;
    for (std::size_t li = 0; li < model.arch.layers.size(); ++li) {
        const LayerSpec& l = model.arch.layers[li];
        const Shape3& s = shapes[li];
        switch (l.kind) {
        case LayerKind::AvgPool:
            pool_forward(cur, s, false, next, nullptr);
            break;
        case LayerKind::MaxPool: {
            std::vector<int> argmax;
            pool_forward(cur, s, true, next, &argmax);
            if (cache) cache->pool_argmax[li] = std::move(argmax);
            break;
        }
        case LayerKind::Conv:
            conv_forward(cur, s, model.weights[li], model.biases[li], l.kernel, l.output_dim,
                         next);
            break;
        case LayerKind::DepthwiseConv:
            depthwise_forward(cur, s, model.weights[li], model.biases[li], l.kernel, next);
            break;
        case LayerKind::DenseReLU:
            dense_forward(cur, model.weights[li], model.biases[li], l.output_dim, true, next);
            break;
        case LayerKind::DenseLinear:
            dense_forward(cur, model.weights[li], model.biases[li], l.output_dim, false, next);
            break;
        case LayerKind::Dropout:
            if (train && dropout_rng) {
                const float rate = 0.1f;
                std::vector<float> mask(cur.size());
                for (float& m : mask)
                    m = dropout_rng->uniform() < rate ? 0.0f : 1.0f / (1.0f - rate);
                next.resize(cur.size());
                for (std::size_t i = 0; i < cur.size(); ++i) next[i] = cur[i] * mask[i];
                if (cache) cache->dropout_mask[li] = std::move(mask);
            } else {
                next = cur;
            }
            break;
        }
        cur.swap(next);
        if (cache) cache->acts[li + 1] = cur;
    }
    return cur;
}

std::vector<float> forward_naive(const CnnModel& model, const ImageTensor& image) {
    MCML_CHECK(image.height == kImageHeight && image.width == kImageWidth &&
                   image.channels == kImageChannels,
               "forward_naive: image must be 32x32x3");
    return cnn_forward(model, image.data, false, nullptr, nullptr);
}

CnnGrads zero_grads(const CnnModel& model) {
    CnnGrads g;
    g.weights.resize(model.weights.size());
    g.biases.resize(model.biases.size());
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        g.weights[i].assign(model.weights[i].size(), 0.0f);
        g.biases[i].assign(model.biases[i].size(), 0.0f);
    }
    return g;
}

void CnnGrads::add(const CnnGrads& other) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
        for (std::size_t j = 0; j < weights[i].size(); ++j) weights[i][j] += other.weights[i][j];
        for (std::size_t j = 0; j < biases[i].size(); ++j) biases[i][j] += other.biases[i][j];
    }
}

void CnnGrads::scale(float s) {
    for (auto& w : weights)
        for (float& v : w) v *= s;
    for (auto& b : biases)
        for (float& v : b) v *= s;
}

std::vector<float> cnn_backward(const CnnModel& model, const CnnCache& cache,
                                const std::vector<float>& dlogits, CnnGrads& grads) {
    std::vector<Shape3> shapes = shape_chain(model.arch);
    std::vector<float> dcur = dlogits;
    std::vector<float> dprev;
    for (std::size_t li = model.arch.layers.size(); li-- > 0;) {
        const LayerSpec& l = model.arch.layers[li];
        const Shape3& s = shapes[li];
        const std::vector<float>& in = cache.acts[li];
        const std::vector<float>& out = cache.acts[li + 1];
        switch (l.kind) {
        case LayerKind::AvgPool: {
            dprev.assign(in.size(), 0.0f);
            int oh = s.h / 2, ow = s.w / 2;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j)
                    for (int ch = 0; ch < s.c; ++ch) {
                        float g =
                            dcur[(static_cast<std::size_t>(i) * ow + j) * s.c + ch] * 0.25f;
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                dprev[(static_cast<std::size_t>(2 * i + dy) * s.w +
                                       (2 * j + dx)) *
                                          s.c +
                                      ch] += g;
                    }
            break;
        }
        case LayerKind::MaxPool: {
            dprev.assign(in.size(), 0.0f);
            const std::vector<int>& argmax = cache.pool_argmax[li];
            for (std::size_t oi = 0; oi < dcur.size(); ++oi)
                dprev[static_cast<std::size_t>(argmax[oi])] += dcur[oi];
            break;
        }
        case LayerKind::Conv: {
            int k = l.kernel, out_c = l.output_dim;
            int ow = s.w - k + 1;
            dprev.assign(in.size(), 0.0f);
            for (int i = 0; i < s.h - k + 1; ++i)
                for (int j = 0; j < ow; ++j) {
                    const float* dout = &dcur[(static_cast<std::size_t>(i) * ow + j) * out_c];
                    for (int co = 0; co < out_c; ++co) grads.biases[li][co] += dout[co];
                    for (int dy = 0; dy < k; ++dy)
                        for (int dx = 0; dx < k; ++dx) {
                            std::size_t base =
                                (static_cast<std::size_t>(i + dy) * s.w + (j + dx)) * s.c;
                            std::size_t wbase =
                                (static_cast<std::size_t>(dy) * k + dx) * s.c * out_c;
                            for (int ci = 0; ci < s.c; ++ci) {
                                float v = in[base + ci];
                                float acc = 0.0f;
                                const float* wrow =
                                    &model.weights[li][wbase + static_cast<std::size_t>(ci) * out_c];
                                float* gw =
                                    &grads.weights[li][wbase + static_cast<std::size_t>(ci) * out_c];
                                for (int co = 0; co < out_c; ++co) {
                                    gw[co] += v * dout[co];
                                    acc += wrow[co] * dout[co];
                                }
                                dprev[base + ci] += acc;
                            }
                        }
                }
            break;
        }
        case LayerKind::DepthwiseConv: {
            int k = l.kernel;
            int oh = s.h - k + 1, ow = s.w - k + 1;
            dprev.assign(in.size(), 0.0f);
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    std::size_t obase = (static_cast<std::size_t>(i) * ow + j) * s.c;
                    for (int ch = 0; ch < s.c; ++ch) {
                        float g = dcur[obase + ch];
                        if (out[obase + ch] <= 0.0f) continue; // ReLU gate
                        grads.biases[li][ch] += g;
                        for (int dy = 0; dy < k; ++dy)
                            for (int dx = 0; dx < k; ++dx) {
                                std::size_t ii =
                                    (static_cast<std::size_t>(i + dy) * s.w + (j + dx)) * s.c + ch;
                                std::size_t wi = (static_cast<std::size_t>(dy) * k + dx) * s.c + ch;
                                grads.weights[li][wi] += in[ii] * g;
                                dprev[ii] += model.weights[li][wi] * g;
                            }
                    }
                }
            break;
        }
        case LayerKind::DenseReLU:
        case LayerKind::DenseLinear: {
            int out_dim = l.output_dim;
            std::vector<float> dpre = dcur;
            if (l.kind == LayerKind::DenseReLU)
                for (int o = 0; o < out_dim; ++o)
                    if (out[static_cast<std::size_t>(o)] <= 0.0f) dpre[o] = 0.0f;
            for (int o = 0; o < out_dim; ++o) grads.biases[li][o] += dpre[o];
            dprev.assign(in.size(), 0.0f);
            for (std::size_t i = 0; i < in.size(); ++i) {
                float v = in[i];
                const float* wrow = &model.weights[li][i * static_cast<std::size_t>(out_dim)];
                float* gw = &grads.weights[li][i * static_cast<std::size_t>(out_dim)];
                float acc = 0.0f;
                for (int o = 0; o < out_dim; ++o) {
                    gw[o] += v * dpre[o];
                    acc += wrow[o] * dpre[o];
                }
                dprev[i] = acc;
            }
            break;
        }
        case LayerKind::Dropout: {
            if (!cache.dropout_mask[li].empty()) {
                dprev.resize(dcur.size());
                for (std::size_t i = 0; i < dcur.size(); ++i)
                    dprev[i] = dcur[i] * cache.dropout_mask[li][i];
            } else {
                dprev = dcur;
            }
            break;
        }
        }
        dcur.swap(dprev);
    }
    return dcur;
}

namespace {

struct LayerKey {
    int kind, h, w, c, out_c, k;
    bool operator<(const LayerKey& o) const {
        return std::tie(kind, h, w, c, out_c, k) < std::tie(o.kind, o.h, o.w, o.c, o.out_c, o.k);
    }
};

std::uint64_t layer_peak_elems(const LayerSpec& l, const Shape3& in) {
    static std::map<LayerKey, std::uint64_t> cache;
    static std::mutex mu;
    LayerKey key{static_cast<int>(l.kind), in.h, in.w, in.c, l.output_dim, l.kernel};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    std::uint64_t peak = 0;
    switch (l.kind) {
    case LayerKind::AvgPool:
    case LayerKind::MaxPool: {
        TraversalPlan plan = plan_rowmajor(in.h, in.w, 2, 2);
        peak = plan_peak_elems(plan, in.c, in.c);
        break;
    }
    case LayerKind::Conv:
    case LayerKind::DepthwiseConv: {
        int out_c = l.kind == LayerKind::Conv ? l.output_dim : in.c;
        TraversalPlan plan = out_c > in.c ? plan_herringbone(in.h, in.w, in.c, out_c, l.kernel)
                                          : plan_rowmajor(in.h, in.w, l.kernel, 1);
        peak = plan_peak_elems(plan, in.c, out_c);
        break;
    }
    case LayerKind::DenseReLU:
    case LayerKind::DenseLinear:
        // Inputs stay live until the last unit is computed; every unit but
        // the last needs a fresh slot.
        peak = in.elems() + static_cast<std::uint64_t>(l.output_dim) - 1;
        break;
    case LayerKind::Dropout:
        peak = in.elems();
        break;
    }
    std::lock_guard<std::mutex> lock(mu);
    cache[key] = peak;
    return peak;
}

} // namespace

std::uint64_t cnn_activation_peak_elems(const ArchSpec& arch) {
    std::vector<Shape3> shapes = shape_chain(arch);
    std::uint64_t peak = shapes[0].elems(); // input buffer resident
    for (std::size_t i = 0; i < arch.layers.size(); ++i)
        peak = std::max(peak, layer_peak_elems(arch.layers[i], shapes[i]));
    return peak;
}

Footprint cnn_footprint(const ArchSpec& arch) {
    std::uint64_t params = arch_param_count(arch);
    std::uint64_t act = cnn_activation_peak_elems(arch); // 1 byte per live element
    return footprint_bytes(params, 0, act);
}

std::vector<std::uint8_t> cnn_serialize(const CnnModel& model) {
    ByteWriter w;
    w.u8('C');
    w.i32(static_cast<std::int32_t>(model.arch.layers.size()));
    for (const LayerSpec& l : model.arch.layers) {
        w.i32(static_cast<std::int32_t>(l.kind));
        w.i32(l.output_dim);
        w.i32(l.kernel);
    }
    for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
        w.dense_block(model.weights[i]);
        w.dense_block(model.biases[i]);
    }
    return w.bytes();
}

CnnModel cnn_deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    MCML_CHECK(r.u8() == 'C', "not a cnn model file");
    CnnModel model;
    int n = r.i32();
    for (int i = 0; i < n; ++i) {
        LayerSpec l;
        l.kind = static_cast<LayerKind>(r.i32());
        l.output_dim = r.i32();
        l.kernel = r.i32();
        model.arch.layers.push_back(l);
    }
    std::vector<Shape3> shapes = shape_chain(model.arch);
    model.weights.resize(model.arch.layers.size());
    model.biases.resize(model.arch.layers.size());
    for (std::size_t i = 0; i < model.arch.layers.size(); ++i) {
        r.dense_block(model.weights[i], weight_count(model.arch.layers[i], shapes[i]));
        r.dense_block(model.biases[i], bias_count(model.arch.layers[i], shapes[i]));
    }
    MCML_CHECK(r.done(), "trailing bytes in cnn model file");
    return model;
}

} // namespace mcml

#include "mcml/protonn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcml/adam.hpp"
#include "mcml/mathutil.hpp"
#include "mcml/parallel.hpp"

namespace mcml {

LabeledVectors to_vectors(const Dataset& data) {
    LabeledVectors out;
    out.dims = data.empty() ? kFlatImageDim : static_cast<int>(data[0].image.data.size());
    out.x.reserve(data.size());
    out.y.reserve(data.size());
    for (const LabeledImage& li : data) {
        out.x.push_back(li.image.data);
        out.y.push_back(li.label);
    }
    return out;
}

std::vector<float> protonn_scores(const ProtonnModel& model, const std::vector<float>& x) {
    MCML_CHECK(static_cast<int>(x.size()) == model.input_dim,
               "protonn: input dimension mismatch");
    std::vector<float> p(static_cast<std::size_t>(model.d), 0.0f);
    for (int r = 0; r < model.d; ++r) {
        const float* wrow = &model.W.data[static_cast<std::size_t>(r) * model.input_dim];
        float acc = 0.0f;
        for (int i = 0; i < model.input_dim; ++i) acc += wrow[i] * x[i];
        p[r] = acc;
    }
    const float g2 = model.gamma * model.gamma;
    std::vector<float> scores(kNumClasses, 0.0f);
    for (int j = 0; j < model.m; ++j) {
        float dist2 = 0.0f;
        for (int r = 0; r < model.d; ++r) {
            float diff = p[r] - model.B.at(r, j);
            dist2 += diff * diff;
        }
        float kj = std::exp(-g2 * dist2);
        for (int c = 0; c < kNumClasses; ++c) scores[c] += kj * model.Z.at(c, j);
    }
    return scores;
}

int protonn_predict(const ProtonnModel& model, const std::vector<float>& x) {
    std::vector<float> s = protonn_scores(model, x);
    return argmax_lowest(s);
}

Footprint protonn_footprint(int d, int m, double rho_w, int input_dim) {
    MCML_CHECK(d >= 1 && m >= 1, "protonn spec: d and m must be >= 1");
    MCML_CHECK(rho_w > 0.0 && rho_w <= 1.0, "protonn spec: rho_w out of range");
    std::uint64_t w_elems = static_cast<std::uint64_t>(d) * input_dim;
    std::uint64_t dense = static_cast<std::uint64_t>(d) * m  // B
                          + static_cast<std::uint64_t>(kNumClasses) * m // Z
                          + 1;                                          // gamma
    std::uint64_t nnz = 0;
    if (rho_w < 1.0)
        nnz = threshold_count(rho_w, w_elems);
    else
        dense += w_elems;
    return footprint_bytes(dense, nnz, 0);
}

float protonn_accuracy(const ProtonnModel& model, const LabeledVectors& data) {
    std::vector<std::size_t> hits(par::chunk_count(data.x.size()), 0);
    par::for_chunks(data.x.size(), [&](std::size_t c, std::size_t lo, std::size_t hi) {
        std::size_t h = 0;
        for (std::size_t i = lo; i < hi; ++i)
            if (protonn_predict(model, data.x[i]) == data.y[i]) ++h;
        hits[c] = h;
    });
    std::size_t total = 0;
    for (std::size_t h : hits) total += h;
    return data.x.empty() ? 0.0f : static_cast<float>(total) / static_cast<float>(data.x.size());
}

namespace {

std::vector<float> project(const ProtonnModel& model, const std::vector<float>& x) {
    std::vector<float> p(static_cast<std::size_t>(model.d), 0.0f);
    for (int r = 0; r < model.d; ++r) {
        const float* wrow = &model.W.data[static_cast<std::size_t>(r) * model.input_dim];
        float acc = 0.0f;
        for (int i = 0; i < model.input_dim; ++i) acc += wrow[i] * x[i];
        p[r] = acc;
    }
    return p;
}

// Per-class k-means in projected space; m/L prototypes per class with the
// remainder going to the earliest classes. Z starts one-hot per prototype.
void init_prototypes(ProtonnModel& model, const LabeledVectors& train, Rng& rng) {
    int base = model.m / kNumClasses;
    int rem = model.m % kNumClasses;
    int col = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        int k = base + (c < rem ? 1 : 0);
        if (k == 0) continue;
        std::vector<std::vector<float>> pts;
        for (std::size_t i = 0; i < train.x.size(); ++i)
            if (train.y[i] == c) pts.push_back(project(model, train.x[i]));
        std::vector<std::vector<float>> centers;
        if (pts.empty()) {
            for (int j = 0; j < k; ++j) {
                std::vector<float> z(static_cast<std::size_t>(model.d));
                for (float& v : z) v = rng.uniform_f(-1.0f, 1.0f);
                centers.push_back(std::move(z));
            }
        } else {
            for (int j = 0; j < k; ++j) centers.push_back(pts[rng.below(pts.size())]);
            std::vector<int> assign(pts.size(), 0);
            for (int iter = 0; iter < 10; ++iter) {
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    float best = std::numeric_limits<float>::max();
                    for (int j = 0; j < k; ++j) {
                        float dd = 0.0f;
                        for (int r = 0; r < model.d; ++r) {
                            float diff = pts[i][r] - centers[j][r];
                            dd += diff * diff;
                        }
                        if (dd < best) {
                            best = dd;
                            assign[i] = j;
                        }
                    }
                }
                for (int j = 0; j < k; ++j) {
                    std::vector<float> sum(static_cast<std::size_t>(model.d), 0.0f);
                    int n = 0;
                    for (std::size_t i = 0; i < pts.size(); ++i)
                        if (assign[i] == j) {
                            for (int r = 0; r < model.d; ++r) sum[r] += pts[i][r];
                            ++n;
                        }
                    if (n > 0)
                        for (int r = 0; r < model.d; ++r) centers[j][r] = sum[r] / static_cast<float>(n);
                }
            }
        }
        for (int j = 0; j < k; ++j, ++col) {
            for (int r = 0; r < model.d; ++r) model.B.at(r, col) = centers[j][r];
            model.Z.at(c, col) = 1.0f;
        }
    }
}

struct SampleGrads {
    std::vector<float> dW, dB, dZ;
    void init(const ProtonnModel& m) {
        dW.assign(m.W.size(), 0.0f);
        dB.assign(m.B.size(), 0.0f);
        dZ.assign(m.Z.size(), 0.0f);
    }
    void add(const SampleGrads& o) {
        for (std::size_t i = 0; i < dW.size(); ++i) dW[i] += o.dW[i];
        for (std::size_t i = 0; i < dB.size(); ++i) dB[i] += o.dB[i];
        for (std::size_t i = 0; i < dZ.size(); ++i) dZ[i] += o.dZ[i];
    }
};

// Gradient of the squared error |scores - onehot|^2 for one sample.
// which: 0 -> W only, 1 -> B only, 2 -> Z only, 3 -> all (gradient checks).
float sample_grad(const ProtonnModel& model, const std::vector<float>& x, int label,
                  int which, SampleGrads& g) {
    std::vector<float> p = project(model, x);
    const float g2 = model.gamma * model.gamma;
    std::vector<float> kj(static_cast<std::size_t>(model.m));
    std::vector<float> scores(kNumClasses, 0.0f);
    for (int j = 0; j < model.m; ++j) {
        float dist2 = 0.0f;
        for (int r = 0; r < model.d; ++r) {
            float diff = p[r] - model.B.at(r, j);
            dist2 += diff * diff;
        }
        kj[j] = std::exp(-g2 * dist2);
        for (int c = 0; c < kNumClasses; ++c) scores[c] += kj[j] * model.Z.at(c, j);
    }
    float loss = 0.0f;
    std::vector<float> e2(kNumClasses);
    for (int c = 0; c < kNumClasses; ++c) {
        float diff = scores[c] - (c == label ? 1.0f : 0.0f);
        loss += diff * diff;
        e2[c] = 2.0f * diff;
    }
    if (which == 2 || which == 3)
        for (int c = 0; c < kNumClasses; ++c)
            for (int j = 0; j < model.m; ++j) g.dZ[static_cast<std::size_t>(c) * model.m + j] += e2[c] * kj[j];
    if (which == 2) return loss;

    std::vector<float> alpha(static_cast<std::size_t>(model.m), 0.0f);
    for (int j = 0; j < model.m; ++j) {
        float a = 0.0f;
        for (int c = 0; c < kNumClasses; ++c) a += e2[c] * model.Z.at(c, j);
        alpha[j] = a;
    }
    std::vector<float> dp(static_cast<std::size_t>(model.d), 0.0f);
    for (int j = 0; j < model.m; ++j) {
        float coef = -g2 * kj[j] * alpha[j]; // dL/d(dist2)
        for (int r = 0; r < model.d; ++r) {
            float diff = p[r] - model.B.at(r, j);
            if (which == 1 || which == 3)
                g.dB[static_cast<std::size_t>(r) * model.m + j] += coef * (-2.0f) * diff;
            if (which == 0 || which == 3) dp[r] += coef * 2.0f * diff;
        }
    }
    if (which == 0 || which == 3)
        for (int r = 0; r < model.d; ++r) {
            float v = dp[r];
            float* row = &g.dW[static_cast<std::size_t>(r) * model.input_dim];
            for (int i = 0; i < model.input_dim; ++i) row[i] += v * x[i];
        }
    return loss;
}

} // namespace

// Exposed for the gradient-check suite.
float protonn_loss_and_grads(const ProtonnModel& model, const std::vector<float>& x, int label,
                             std::vector<float>& dW, std::vector<float>& dB,
                             std::vector<float>& dZ) {
    SampleGrads g;
    g.init(model);
    float loss = sample_grad(model, x, label, 3, g);
    dW = std::move(g.dW);
    dB = std::move(g.dB);
    dZ = std::move(g.dZ);
    return loss;
}

ProtonnTrainResult protonn_train(const LabeledVectors& train, const LabeledVectors& val,
                                 int d, int m, double rho_w, float gamma, float lr,
                                 const ProtonnTrainOptions& opt) {
    MCML_CHECK(d >= 1 && m >= 1, "protonn spec: d and m must be >= 1");
    MCML_CHECK(rho_w > 0.0 && rho_w <= 1.0, "protonn spec: rho_w out of range");
    ProtonnModel model;
    model.d = d;
    model.m = m;
    model.input_dim = train.dims;
    model.rho_w = rho_w;
    model.gamma = gamma;
    model.W = DenseMatrix(d, train.dims);
    model.B = DenseMatrix(d, m);
    model.Z = DenseMatrix(kNumClasses, m);
    Rng rng(opt.seed);
    float s = std::sqrt(3.0f / static_cast<float>(train.dims));
    for (float& w : model.W.data) w = rng.uniform_f(-s, s);
    if (rho_w < 1.0) hard_threshold_inplace(model.W.data, rho_w);
    init_prototypes(model, train, rng);

    const LabeledVectors& sel_val = opt.selection_val ? *opt.selection_val : val;
    // The projection feeds on input_dim-wide sums, so a raw Adam step of lr
    // per coordinate shifts Wx by ~lr*input_dim and the kernels collapse
    // before B and Z can follow. Its pass runs at a fan-in-scaled rate.
    AdamOpt adam_w(lr / static_cast<float>(train.dims));
    AdamOpt adam_bz(lr);
    ProtonnTrainResult result;
    result.model = model;
    float best = -1.0f;
    int since_best = 0;
    std::vector<std::size_t> order(train.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        // W pass, then B, then Z
        for (int which = 0; which < 3; ++which) {
            rng.shuffle(order);
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(opt.batch_size)) {
                std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
                std::size_t bsz = end - start;
                std::size_t nchunks = par::chunk_count(bsz);
                std::vector<SampleGrads> cg(nchunks);
                std::vector<float> closs(nchunks, 0.0f);
                par::for_chunks(bsz, [&](std::size_t c, std::size_t lo, std::size_t hi) {
                    cg[c].init(model);
                    float acc = 0.0f;
                    for (std::size_t t = lo; t < hi; ++t)
                        acc += sample_grad(model, train.x[order[start + t]],
                                           train.y[order[start + t]], which, cg[c]);
                    closs[c] = acc;
                });
                SampleGrads grads;
                grads.init(model);
                float loss = 0.0f;
                for (std::size_t c = 0; c < nchunks; ++c) {
                    grads.add(cg[c]);
                    loss += closs[c];
                }
                float inv = 1.0f / static_cast<float>(bsz);
                MCML_CHECK(std::isfinite(loss), "protonn_train: non-finite loss");
                if (which == 0) {
                    for (float& v : grads.dW) v *= inv;
                    adam_w.update(0, model.W.data, grads.dW);
                } else if (which == 1) {
                    for (float& v : grads.dB) v *= inv;
                    adam_bz.update(0, model.B.data, grads.dB);
                } else {
                    for (float& v : grads.dZ) v *= inv;
                    adam_bz.update(1, model.Z.data, grads.dZ);
                }
            }
        }
        if (rho_w < 1.0) hard_threshold_inplace(model.W.data, rho_w);
        float acc = protonn_accuracy(model, sel_val);
        result.val_history.push_back(acc);
        if (acc > best) {
            best = acc;
            result.model = model;
            since_best = 0;
        } else if (opt.patience > 0 && ++since_best >= opt.patience) {
            break;
        }
    }
    result.best_val_accuracy = best < 0.0f ? 0.0f : best;
    return result;
}

std::vector<ProtonnGridCell> protonn_grid() {
    static const std::vector<int> dims = {2, 4, 8, 16, 32, 64};
    static const std::vector<float> lrs = {0.1f, 0.01f, 0.001f};
    std::vector<ProtonnGridCell> grid;
    for (int d : dims)
        for (int m : dims)
            for (int n = -4; n <= 4; ++n)
                for (float lr : lrs)
                    grid.push_back({d, m, static_cast<float>(1.5 * std::pow(10.0, n)), lr});
    return grid;
}

std::optional<ProtonnSearchResult> protonn_grid_search(int budget_kb,
                                                       const LabeledVectors& train,
                                                       const LabeledVectors& val,
                                                       const ProtonnSearchOptions& opt) {
    const std::uint64_t budget_bytes = static_cast<std::uint64_t>(budget_kb) * 1024;
    std::vector<ProtonnGridCell> feasible;
    for (const ProtonnGridCell& cell : protonn_grid())
        if (protonn_footprint(cell.d, cell.m, 1.0, train.dims).total_bytes <= budget_bytes)
            feasible.push_back(cell);
    if (feasible.empty()) return std::nullopt;
    if (opt.max_cells > 0 && static_cast<int>(feasible.size()) > opt.max_cells) {
        Rng rng(opt.seed);
        for (int i = 0; i < opt.max_cells; ++i) {
            std::size_t j = static_cast<std::size_t>(i) +
                            static_cast<std::size_t>(rng.below(feasible.size() - i));
            std::swap(feasible[static_cast<std::size_t>(i)], feasible[j]);
        }
        feasible.resize(static_cast<std::size_t>(opt.max_cells));
    }
    std::optional<ProtonnSearchResult> best;
    for (std::size_t i = 0; i < feasible.size(); ++i) {
        const ProtonnGridCell& cell = feasible[i];
        ProtonnTrainOptions topt = opt.train;
        topt.seed = opt.seed ^ (i * 0x9e3779b9ULL + 7);
        ProtonnTrainResult r =
            protonn_train(train, val, cell.d, cell.m, 1.0, cell.gamma, cell.lr, topt);
        if (!best || r.best_val_accuracy > best->val_accuracy) {
            best = ProtonnSearchResult{cell, std::move(r.model),
                                       protonn_footprint(cell.d, cell.m, 1.0, train.dims),
                                       r.best_val_accuracy};
        }
    }
    return best;
}

std::vector<std::uint8_t> protonn_serialize(const ProtonnModel& model) {
    ByteWriter w;
    w.u8('P');
    w.i32(model.d);
    w.i32(model.m);
    w.i32(model.input_dim);
    w.i32(static_cast<std::int32_t>(std::llround(model.rho_w * 1000.0)));
    if (model.rho_w < 1.0)
        w.sparse_block(hard_threshold(model.W, model.rho_w));
    else
        w.dense_block(model.W.data);
    w.dense_block(model.B.data);
    w.dense_block(model.Z.data);
    w.f32(model.gamma);
    return w.bytes();
}

ProtonnModel protonn_deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    MCML_CHECK(r.u8() == 'P', "not a protonn model file");
    ProtonnModel model;
    model.d = r.i32();
    model.m = r.i32();
    model.input_dim = r.i32();
    model.rho_w = static_cast<double>(r.i32()) / 1000.0;
    std::uint64_t w_elems = static_cast<std::uint64_t>(model.d) * model.input_dim;
    if (model.rho_w < 1.0) {
        SparseMatrix sp =
            r.sparse_block(model.d, model.input_dim, threshold_count(model.rho_w, w_elems));
        model.W = densify(sp);
    } else {
        model.W = DenseMatrix(model.d, model.input_dim);
        r.dense_block(model.W.data, w_elems);
    }
    model.B = DenseMatrix(model.d, model.m);
    r.dense_block(model.B.data, static_cast<std::size_t>(model.d) * model.m);
    model.Z = DenseMatrix(kNumClasses, model.m);
    r.dense_block(model.Z.data, static_cast<std::size_t>(kNumClasses) * model.m);
    model.gamma = r.f32();
    MCML_CHECK(r.done(), "trailing bytes in protonn model file");
    return model;
}

} // namespace mcml

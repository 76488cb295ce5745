#include "mcml/bonsai.hpp"

#include <algorithm>
#include <cmath>

#include "mcml/adam.hpp"
#include "mcml/mathutil.hpp"
#include "mcml/parallel.hpp"
#include "mcml/serialize.hpp"

namespace mcml {

namespace {

std::vector<float> project(const BonsaiModel& m, const std::vector<float>& x) {
    std::vector<float> xhat(static_cast<std::size_t>(m.spec.dim), 0.0f);
    for (int r = 0; r < m.spec.dim; ++r) {
        const float* row = &m.Z.data[static_cast<std::size_t>(r) * m.input_dim];
        float acc = 0.0f;
        for (int i = 0; i < m.input_dim; ++i) acc += row[i] * x[i];
        xhat[r] = acc;
    }
    return xhat;
}

// Path indicators for all nodes. Soft mode multiplies branch probabilities
// down the tree; hard mode walks by sign(theta . x^) with ties going right.
std::vector<float> node_indicators(const BonsaiModel& m, const std::vector<float>& xhat,
                                   BonsaiMode mode) {
    int n = m.spec.nodes();
    std::vector<float> ind(static_cast<std::size_t>(n), 0.0f);
    if (mode == BonsaiMode::Soft) {
        ind[0] = 1.0f;
        for (int k = 0; k < m.spec.internal_nodes(); ++k) {
            float t = 0.0f;
            for (int r = 0; r < m.spec.dim; ++r) t += m.Theta.at(k, r) * xhat[r];
            float pl = sigmoidf(m.sigma_b * t);
            ind[2 * k + 1] = ind[k] * pl;
            ind[2 * k + 2] = ind[k] * (1.0f - pl);
        }
    } else {
        int k = 0;
        while (true) {
            ind[k] = 1.0f;
            if (k >= m.spec.internal_nodes()) break;
            float t = 0.0f;
            for (int r = 0; r < m.spec.dim; ++r) t += m.Theta.at(k, r) * xhat[r];
            k = t > 0.0f ? 2 * k + 1 : 2 * k + 2;
        }
    }
    return ind;
}

void add_node_scores(const BonsaiModel& m, const std::vector<float>& xhat, int k, float weight,
                     std::vector<float>& scores) {
    for (int l = 0; l < kNumClasses; ++l) {
        int row = k * kNumClasses + l;
        float u = 0.0f, v = 0.0f;
        for (int r = 0; r < m.spec.dim; ++r) {
            u += m.W.at(row, r) * xhat[r];
            v += m.V.at(row, r) * xhat[r];
        }
        scores[l] += weight * u * std::tanh(m.sigma_s * v);
    }
}

} // namespace

std::vector<float> bonsai_scores(const BonsaiModel& model, const std::vector<float>& x,
                                 BonsaiMode mode) {
    MCML_CHECK(static_cast<int>(x.size()) == model.input_dim, "bonsai: input dimension mismatch");
    std::vector<float> xhat = project(model, x);
    std::vector<float> ind = node_indicators(model, xhat, mode);
    std::vector<float> scores(kNumClasses, 0.0f);
    for (int k = 0; k < model.spec.nodes(); ++k)
        if (ind[k] != 0.0f) add_node_scores(model, xhat, k, ind[k], scores);
    return scores;
}

int bonsai_predict(const BonsaiModel& model, const std::vector<float>& x, BonsaiMode mode) {
    std::vector<float> s = bonsai_scores(model, x, mode);
    return argmax_lowest(s);
}

std::vector<int> bonsai_hard_path(const BonsaiModel& model, const std::vector<float>& x) {
    std::vector<float> xhat = project(model, x);
    std::vector<int> path;
    int k = 0;
    while (true) {
        path.push_back(k);
        if (k >= model.spec.internal_nodes()) break;
        float t = 0.0f;
        for (int r = 0; r < model.spec.dim; ++r) t += model.Theta.at(k, r) * xhat[r];
        k = t > 0.0f ? 2 * k + 1 : 2 * k + 2;
    }
    return path;
}

Footprint bonsai_footprint(const BonsaiSpec& spec, int input_dim) {
    MCML_CHECK(spec.depth >= 1 && spec.depth <= 8, "bonsai spec: depth must be in [1, 8]");
    MCML_CHECK(spec.dim >= 1, "bonsai spec: dim must be >= 1");
    std::uint64_t z_elems = static_cast<std::uint64_t>(spec.dim) * input_dim;
    std::uint64_t wv_elems =
        static_cast<std::uint64_t>(spec.nodes()) * kNumClasses * spec.dim;
    std::uint64_t th_elems = static_cast<std::uint64_t>(spec.internal_nodes()) * spec.dim;
    std::uint64_t nnz = threshold_count(kBonsaiDensityZ, z_elems) +
                        2 * threshold_count(kBonsaiDensityWV, wv_elems) +
                        threshold_count(kBonsaiDensityTheta, th_elems);
    return footprint_bytes(0, nnz, 0);
}

float bonsai_accuracy(const BonsaiModel& model, const LabeledVectors& data, BonsaiMode mode) {
    std::vector<std::size_t> hits(par::chunk_count(data.x.size()), 0);
    par::for_chunks(data.x.size(), [&](std::size_t c, std::size_t lo, std::size_t hi) {
        std::size_t h = 0;
        for (std::size_t i = lo; i < hi; ++i)
            if (bonsai_predict(model, data.x[i], mode) == data.y[i]) ++h;
        hits[c] = h;
    });
    std::size_t total = 0;
    for (std::size_t h : hits) total += h;
    return data.x.empty() ? 0.0f : static_cast<float>(total) / static_cast<float>(data.x.size());
}

namespace {

struct BonsaiGrads {
    std::vector<float> dZ, dW, dV, dTheta;
    void init(const BonsaiModel& m) {
        dZ.assign(m.Z.size(), 0.0f);
        dW.assign(m.W.size(), 0.0f);
        dV.assign(m.V.size(), 0.0f);
        dTheta.assign(m.Theta.size(), 0.0f);
    }
    void add(const BonsaiGrads& o) {
        for (std::size_t i = 0; i < dZ.size(); ++i) dZ[i] += o.dZ[i];
        for (std::size_t i = 0; i < dW.size(); ++i) dW[i] += o.dW[i];
        for (std::size_t i = 0; i < dV.size(); ++i) dV[i] += o.dV[i];
        for (std::size_t i = 0; i < dTheta.size(); ++i) dTheta[i] += o.dTheta[i];
    }
};

// Cross-entropy over soft scores for one sample (no regularizer).
float sample_grad(const BonsaiModel& m, const std::vector<float>& x, int label,
                  BonsaiGrads& g) {
    int dim = m.spec.dim;
    int n = m.spec.nodes();
    std::vector<float> xhat = project(m, x);
    // branch activations
    std::vector<float> tvals(static_cast<std::size_t>(m.spec.internal_nodes()), 0.0f);
    std::vector<float> pls(tvals.size(), 0.0f);
    std::vector<float> ind(static_cast<std::size_t>(n), 0.0f);
    ind[0] = 1.0f;
    for (int k = 0; k < m.spec.internal_nodes(); ++k) {
        float t = 0.0f;
        for (int r = 0; r < dim; ++r) t += m.Theta.at(k, r) * xhat[r];
        tvals[k] = t;
        float pl = sigmoidf(m.sigma_b * t);
        pls[k] = pl;
        ind[2 * k + 1] = ind[k] * pl;
        ind[2 * k + 2] = ind[k] * (1.0f - pl);
    }
    // node outputs
    std::vector<float> u(static_cast<std::size_t>(n) * kNumClasses, 0.0f);
    std::vector<float> v(static_cast<std::size_t>(n) * kNumClasses, 0.0f);
    std::vector<float> scores(kNumClasses, 0.0f);
    for (int k = 0; k < n; ++k)
        for (int l = 0; l < kNumClasses; ++l) {
            int row = k * kNumClasses + l;
            float uu = 0.0f, vv = 0.0f;
            for (int r = 0; r < dim; ++r) {
                uu += m.W.at(row, r) * xhat[r];
                vv += m.V.at(row, r) * xhat[r];
            }
            u[row] = uu;
            v[row] = std::tanh(m.sigma_s * vv);
            scores[l] += ind[k] * uu * v[row];
        }
    std::vector<float> dlogits = scores;
    float loss = softmax_ce_grad_inplace(dlogits, label);

    std::vector<float> dxhat(static_cast<std::size_t>(dim), 0.0f);
    std::vector<float> dind(static_cast<std::size_t>(n), 0.0f);
    for (int k = 0; k < n; ++k) {
        float dik = 0.0f;
        for (int l = 0; l < kNumClasses; ++l) {
            int row = k * kNumClasses + l;
            float gl = dlogits[l];
            dik += gl * u[row] * v[row];
            float du = gl * ind[k] * v[row];
            float dv = gl * ind[k] * u[row] * (1.0f - v[row] * v[row]) * m.sigma_s;
            for (int r = 0; r < dim; ++r) {
                g.dW[static_cast<std::size_t>(row) * dim + r] += du * xhat[r];
                g.dV[static_cast<std::size_t>(row) * dim + r] += dv * xhat[r];
                dxhat[r] += du * m.W.at(row, r) + dv * m.V.at(row, r);
            }
        }
        dind[k] = dik;
    }
    // path products, leaves upward
    for (int k = n - 1; k >= 1; --k) {
        int parent = (k - 1) / 2;
        bool left = k == 2 * parent + 1;
        float edge = left ? pls[parent] : 1.0f - pls[parent];
        dind[parent] += dind[k] * edge;
        float dpl = dind[k] * ind[parent] * (left ? 1.0f : -1.0f);
        float dt = dpl * pls[parent] * (1.0f - pls[parent]) * m.sigma_b;
        for (int r = 0; r < dim; ++r) {
            g.dTheta[static_cast<std::size_t>(parent) * dim + r] += dt * xhat[r];
            dxhat[r] += dt * m.Theta.at(parent, r);
        }
    }
    for (int r = 0; r < dim; ++r) {
        float dr = dxhat[r];
        float* row = &g.dZ[static_cast<std::size_t>(r) * m.input_dim];
        for (int i = 0; i < m.input_dim; ++i) row[i] += dr * x[i];
    }
    return loss;
}

void add_reg(const BonsaiModel& m, float reg_wvtheta, float reg_z, BonsaiGrads& g) {
    for (std::size_t i = 0; i < m.W.size(); ++i) g.dW[i] += 2.0f * reg_wvtheta * m.W.data[i];
    for (std::size_t i = 0; i < m.V.size(); ++i) g.dV[i] += 2.0f * reg_wvtheta * m.V.data[i];
    for (std::size_t i = 0; i < m.Theta.size(); ++i)
        g.dTheta[i] += 2.0f * reg_wvtheta * m.Theta.data[i];
    for (std::size_t i = 0; i < m.Z.size(); ++i) g.dZ[i] += 2.0f * reg_z * m.Z.data[i];
}

float reg_loss(const BonsaiModel& m, float reg_wvtheta, float reg_z) {
    double acc = 0.0;
    for (float w : m.W.data) acc += reg_wvtheta * w * w;
    for (float w : m.V.data) acc += reg_wvtheta * w * w;
    for (float w : m.Theta.data) acc += reg_wvtheta * w * w;
    for (float w : m.Z.data) acc += reg_z * w * w;
    return static_cast<float>(acc);
}

void threshold_model(BonsaiModel& m) {
    hard_threshold_inplace(m.Z.data, kBonsaiDensityZ);
    hard_threshold_inplace(m.W.data, kBonsaiDensityWV);
    hard_threshold_inplace(m.V.data, kBonsaiDensityWV);
    hard_threshold_inplace(m.Theta.data, kBonsaiDensityTheta);
}

void mask_to_support(std::vector<float>& grads, const std::vector<float>& params) {
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (params[i] == 0.0f) grads[i] = 0.0f;
}

void remask(std::vector<float>& params, const std::vector<bool>& support) {
    for (std::size_t i = 0; i < params.size(); ++i)
        if (!support[i]) params[i] = 0.0f;
}

} // namespace

float bonsai_loss_and_grads(const BonsaiModel& model, const std::vector<float>& x, int label,
                            float reg_wvtheta, float reg_z, std::vector<float>& dZ,
                            std::vector<float>& dW, std::vector<float>& dV,
                            std::vector<float>& dTheta) {
    BonsaiGrads g;
    g.init(model);
    float loss = sample_grad(model, x, label, g);
    add_reg(model, reg_wvtheta, reg_z, g);
    loss += reg_loss(model, reg_wvtheta, reg_z);
    dZ = std::move(g.dZ);
    dW = std::move(g.dW);
    dV = std::move(g.dV);
    dTheta = std::move(g.dTheta);
    return loss;
}

BonsaiTrainResult bonsai_train(const LabeledVectors& train, const LabeledVectors& val,
                               const BonsaiSpec& spec, const BonsaiTrainOptions& opt) {
    BonsaiModel model;
    model.spec = spec;
    model.input_dim = train.dims;
    Rng rng(opt.seed);
    model.Z = DenseMatrix(spec.dim, train.dims);
    model.W = DenseMatrix(spec.nodes() * kNumClasses, spec.dim);
    model.V = DenseMatrix(spec.nodes() * kNumClasses, spec.dim);
    model.Theta = DenseMatrix(spec.internal_nodes(), spec.dim);
    float sz = std::sqrt(3.0f / static_cast<float>(train.dims));
    float sn = std::sqrt(3.0f / static_cast<float>(spec.dim));
    for (float& w : model.Z.data) w = rng.uniform_f(-sz, sz);
    for (float& w : model.W.data) w = rng.uniform_f(-sn, sn);
    for (float& w : model.V.data) w = rng.uniform_f(-sn, sn);
    for (float& w : model.Theta.data) w = rng.uniform_f(-sn, sn);

    const LabeledVectors& sel_val = opt.selection_val ? *opt.selection_val : val;
    AdamOpt adam(opt.lr);
    BonsaiTrainResult result;
    result.best_model = model;
    float best = -1.0f;
    std::vector<std::size_t> order(train.x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    int phase1 = opt.epochs / 3;
    int phase2 = 2 * opt.epochs / 3;
    std::vector<bool> suppZ, suppW, suppV, suppT;
    auto capture_support = [&]() {
        auto cap = [](const std::vector<float>& p) {
            std::vector<bool> s(p.size());
            for (std::size_t i = 0; i < p.size(); ++i) s[i] = p[i] != 0.0f;
            return s;
        };
        suppZ = cap(model.Z.data);
        suppW = cap(model.W.data);
        suppV = cap(model.V.data);
        suppT = cap(model.Theta.data);
    };

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        bool iht_phase = epoch >= phase1 && epoch < phase2;
        bool frozen_phase = epoch >= phase2;
        if (frozen_phase && epoch == phase2) {
            threshold_model(model);
            capture_support();
        }
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            std::size_t bsz = end - start;
            std::size_t nchunks = par::chunk_count(bsz);
            std::vector<BonsaiGrads> cg(nchunks);
            std::vector<float> closs(nchunks, 0.0f);
            par::for_chunks(bsz, [&](std::size_t c, std::size_t lo, std::size_t hi) {
                cg[c].init(model);
                float acc = 0.0f;
                for (std::size_t t = lo; t < hi; ++t)
                    acc += sample_grad(model, train.x[order[start + t]],
                                       train.y[order[start + t]], cg[c]);
                closs[c] = acc;
            });
            BonsaiGrads grads;
            grads.init(model);
            float loss = 0.0f;
            for (std::size_t c = 0; c < nchunks; ++c) {
                grads.add(cg[c]);
                loss += closs[c];
            }
            float inv = 1.0f / static_cast<float>(bsz);
            for (float& g : grads.dZ) g *= inv;
            for (float& g : grads.dW) g *= inv;
            for (float& g : grads.dV) g *= inv;
            for (float& g : grads.dTheta) g *= inv;
            MCML_CHECK(std::isfinite(loss), "bonsai_train: non-finite loss");
            add_reg(model, opt.reg_wvtheta, opt.reg_z, grads);
            if (frozen_phase) {
                mask_to_support(grads.dZ, model.Z.data);
                mask_to_support(grads.dW, model.W.data);
                mask_to_support(grads.dV, model.V.data);
                mask_to_support(grads.dTheta, model.Theta.data);
            }
            adam.update(0, model.Z.data, grads.dZ);
            adam.update(1, model.W.data, grads.dW);
            adam.update(2, model.V.data, grads.dV);
            adam.update(3, model.Theta.data, grads.dTheta);
            if (iht_phase) threshold_model(model);
            if (frozen_phase) {
                remask(model.Z.data, suppZ);
                remask(model.W.data, suppW);
                remask(model.V.data, suppV);
                remask(model.Theta.data, suppT);
            }
        }
        float acc = bonsai_accuracy(model, sel_val, BonsaiMode::Hard);
        result.val_history.push_back(acc);
        if (acc > best) {
            best = acc;
            result.best_model = model;
        }
    }
    // Deployment form keeps the exact densities regardless of phase count.
    threshold_model(model);
    result.final_model = model;
    threshold_model(result.best_model);
    result.best_val_accuracy = best < 0.0f ? 0.0f : best;
    return result;
}

std::vector<BonsaiSpec> bonsai_sweep_specs(int max_kb, int input_dim) {
    std::vector<BonsaiSpec> specs;
    const std::uint64_t cap = static_cast<std::uint64_t>(max_kb) * 1024;
    for (int h = 1; h <= 8; ++h)
        for (int d = 1;; ++d) {
            BonsaiSpec s{h, d};
            if (bonsai_footprint(s, input_dim).total_bytes > cap) break;
            specs.push_back(s);
        }
    return specs;
}

BonsaiSearchResult bonsai_search(int budget_kb, const LabeledVectors& train,
                                 const LabeledVectors& val, const BonsaiSearchOptions& opt) {
    const std::uint64_t budget_bytes = static_cast<std::uint64_t>(budget_kb) * 1024;
    std::vector<BonsaiSpec> specs = bonsai_sweep_specs(128, train.dims);
    std::vector<BonsaiSpec> feasible;
    for (const BonsaiSpec& s : specs) {
        if (bonsai_footprint(s, train.dims).total_bytes > budget_bytes) continue;
        if (opt.desk && (s.dim & (s.dim - 1)) != 0) continue; // powers of two only
        if (opt.desk && !(s.depth == 2 || s.depth == 3 || s.depth == 5)) continue;
        feasible.push_back(s);
    }
    if (feasible.empty()) {
        // d = 1 at small depth always fits the smallest budget
        feasible.push_back({1, 1});
    }
    BonsaiSearchResult best;
    bool have = false;
    for (std::size_t i = 0; i < feasible.size(); ++i) {
        BonsaiTrainOptions topt = opt.train;
        topt.seed = opt.train.seed ^ (i * 0x9e3779b9ULL + 3);
        BonsaiTrainResult r = bonsai_train(train, val, feasible[i], topt);
        if (!have || r.best_val_accuracy > best.val_accuracy) {
            have = true;
            best.spec = feasible[i];
            best.model = std::move(r.best_model);
            best.footprint = bonsai_footprint(feasible[i], train.dims);
            best.val_accuracy = r.best_val_accuracy;
        }
    }
    return best;
}

std::vector<std::uint8_t> bonsai_serialize(const BonsaiModel& model) {
    ByteWriter w;
    w.u8('B');
    w.i32(model.spec.depth);
    w.i32(model.spec.dim);
    w.i32(model.input_dim);
    w.i32(static_cast<std::int32_t>(std::llround(model.sigma_s * 1000.0f)));
    w.sparse_block(hard_threshold(model.Z, kBonsaiDensityZ));
    w.sparse_block(hard_threshold(model.W, kBonsaiDensityWV));
    w.sparse_block(hard_threshold(model.V, kBonsaiDensityWV));
    w.sparse_block(hard_threshold(model.Theta, kBonsaiDensityTheta));
    return w.bytes();
}

BonsaiModel bonsai_deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    MCML_CHECK(r.u8() == 'B', "not a bonsai model file");
    BonsaiModel model;
    model.spec.depth = r.i32();
    model.spec.dim = r.i32();
    model.input_dim = r.i32();
    model.sigma_s = static_cast<float>(r.i32()) / 1000.0f;
    int nodes = model.spec.nodes();
    auto read_sparse = [&](int rows, int cols, double density) {
        std::uint64_t elems = static_cast<std::uint64_t>(rows) * cols;
        return densify(r.sparse_block(rows, cols, threshold_count(density, elems)));
    };
    model.Z = read_sparse(model.spec.dim, model.input_dim, kBonsaiDensityZ);
    model.W = read_sparse(nodes * kNumClasses, model.spec.dim, kBonsaiDensityWV);
    model.V = read_sparse(nodes * kNumClasses, model.spec.dim, kBonsaiDensityWV);
    model.Theta = read_sparse(model.spec.internal_nodes(), model.spec.dim, kBonsaiDensityTheta);
    MCML_CHECK(r.done(), "trailing bytes in bonsai model file");
    return model;
}

} // namespace mcml

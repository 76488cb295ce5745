#include "mcml/fastgrnn.hpp"

#include <algorithm>
#include <cmath>

#include "mcml/adam.hpp"
#include "mcml/mathutil.hpp"
#include "mcml/parallel.hpp"
#include "mcml/serialize.hpp"

namespace mcml {

const char* seq_mode_name(SeqMode mode) {
    switch (mode) {
    case SeqMode::RowMajor: return "row";
    case SeqMode::ChannelMajor: return "channel";
    case SeqMode::Multi: return "multi";
    }
    return "?";
}

SeqMode seq_mode_from_name(const std::string& name) {
    if (name == "row") return SeqMode::RowMajor;
    if (name == "channel") return SeqMode::ChannelMajor;
    if (name == "multi") return SeqMode::Multi;
    MCML_CHECK(false, "unknown sequencing mode: " + name);
    return SeqMode::RowMajor;
}

SequencePlan sequence_plan(SeqMode mode) {
    SequencePlan plan;
    switch (mode) {
    case SeqMode::RowMajor: {
        plan.cells.resize(1);
        for (int ch = 0; ch < kImageChannels; ++ch)
            for (int r = 0; r < kImageHeight; ++r) plan.cells[0].push_back({ch, r});
        break;
    }
    case SeqMode::ChannelMajor: {
        plan.cells.resize(1);
        for (int r = 0; r < kImageHeight; ++r)
            for (int ch = 0; ch < kImageChannels; ++ch) plan.cells[0].push_back({ch, r});
        break;
    }
    case SeqMode::Multi: {
        plan.cells.resize(kImageChannels);
        for (int ch = 0; ch < kImageChannels; ++ch)
            for (int r = 0; r < kImageHeight; ++r) plan.cells[ch].push_back({ch, r});
        break;
    }
    }
    return plan;
}

std::vector<std::vector<std::vector<float>>> sequence_image(const ImageTensor& image,
                                                            SeqMode mode) {
    MCML_CHECK(image.height == kImageHeight && image.width == kImageWidth &&
                   image.channels == kImageChannels,
               "sequence_image: image must be 32x32x3");
    SequencePlan plan = sequence_plan(mode);
    std::vector<std::vector<std::vector<float>>> out(plan.cells.size());
    for (std::size_t cell = 0; cell < plan.cells.size(); ++cell) {
        out[cell].reserve(plan.cells[cell].size());
        for (auto [ch, r] : plan.cells[cell]) {
            std::vector<float> step(kImageWidth);
            for (int c = 0; c < kImageWidth; ++c) step[c] = image.at(r, c, ch);
            out[cell].push_back(std::move(step));
        }
    }
    return out;
}

std::vector<float> cell_step(const FastGrnnCell& cell, const std::vector<float>& x,
                             const std::vector<float>& h_prev) {
    MCML_CHECK(static_cast<int>(x.size()) == cell.input &&
                   static_cast<int>(h_prev.size()) == cell.hidden,
               "cell_step: shape mismatch");
    std::vector<float> h(static_cast<std::size_t>(cell.hidden));
    for (int i = 0; i < cell.hidden; ++i) {
        float pre = 0.0f;
        const float* wrow = &cell.W[static_cast<std::size_t>(i) * cell.input];
        for (int j = 0; j < cell.input; ++j) pre += wrow[j] * x[j];
        const float* urow = &cell.U[static_cast<std::size_t>(i) * cell.hidden];
        for (int j = 0; j < cell.hidden; ++j) pre += urow[j] * h_prev[j];
        float z = sigmoidf(pre + cell.bz[i]);
        float ht = std::tanh(pre + cell.bh[i]);
        h[i] = (cell.zeta * (1.0f - z) + cell.nu) * ht + z * h_prev[i];
    }
    return h;
}

std::vector<float> fastgrnn_classify(const FastGrnnClassifier& model, const ImageTensor& image) {
    auto seqs = sequence_image(image, model.spec.mode);
    MCML_CHECK(seqs.size() == model.cells.size(), "fastgrnn: cell count mismatch");
    std::vector<float> concat;
    for (std::size_t cell = 0; cell < model.cells.size(); ++cell) {
        std::vector<float> h(static_cast<std::size_t>(model.cells[cell].hidden), 0.0f);
        for (const std::vector<float>& x : seqs[cell]) h = cell_step(model.cells[cell], x, h);
        concat.insert(concat.end(), h.begin(), h.end());
    }
    std::vector<float> logits(kNumClasses);
    for (int o = 0; o < kNumClasses; ++o) logits[o] = model.head_b[o];
    for (std::size_t i = 0; i < concat.size(); ++i) {
        const float* wrow = &model.head_w[i * kNumClasses];
        for (int o = 0; o < kNumClasses; ++o) logits[o] += concat[i] * wrow[o];
    }
    return logits;
}

int fastgrnn_predict(const FastGrnnClassifier& model, const ImageTensor& image) {
    std::vector<float> logits = fastgrnn_classify(model, image);
    return argmax_lowest(logits);
}

Footprint fastgrnn_footprint(const FastGrnnSpec& spec) {
    MCML_CHECK(spec.hidden >= 1, "fastgrnn spec: hidden must be >= 1");
    MCML_CHECK(spec.rho_w > 0.0 && spec.rho_w <= 1.0 && spec.rho_u > 0.0 && spec.rho_u <= 1.0,
               "fastgrnn spec: densities out of range");
    const int cells = spec.mode == SeqMode::Multi ? kImageChannels : 1;
    const std::uint64_t h = static_cast<std::uint64_t>(spec.hidden);
    const std::uint64_t w_elems = h * kImageWidth;
    const std::uint64_t u_elems = h * h;
    std::uint64_t dense = 0, nnz = 0;
    if (spec.rho_w < 1.0)
        nnz += threshold_count(spec.rho_w, w_elems);
    else
        dense += w_elems;
    if (spec.rho_u < 1.0)
        nnz += threshold_count(spec.rho_u, u_elems);
    else
        dense += u_elems;
    dense += 2 * h + 2; // biases, zeta, nu
    dense *= cells;
    nnz *= cells;
    dense += cells * h * kNumClasses + kNumClasses; // head
    return footprint_bytes(dense, nnz, 0);
}

FastGrnnClassifier init_fastgrnn(const FastGrnnSpec& spec, Rng& rng) {
    FastGrnnClassifier model;
    model.spec = spec;
    const int cells = spec.mode == SeqMode::Multi ? kImageChannels : 1;
    for (int c = 0; c < cells; ++c) {
        FastGrnnCell cell;
        cell.hidden = spec.hidden;
        cell.input = kImageWidth;
        cell.W.resize(static_cast<std::size_t>(spec.hidden) * kImageWidth);
        cell.U.resize(static_cast<std::size_t>(spec.hidden) * spec.hidden);
        cell.bz.assign(static_cast<std::size_t>(spec.hidden), 0.0f);
        cell.bh.assign(static_cast<std::size_t>(spec.hidden), 0.0f);
        float sw = std::sqrt(3.0f / static_cast<float>(kImageWidth));
        float su = std::sqrt(3.0f / static_cast<float>(spec.hidden));
        for (float& w : cell.W) w = rng.uniform_f(-sw, sw);
        for (float& w : cell.U) w = rng.uniform_f(-su, su);
        // small-leak start: zeta 1, nu at sigmoid(-4); both train as raw
        // scalars from here
        cell.zeta = 1.0f;
        cell.nu = 0.018f;
        model.cells.push_back(std::move(cell));
    }
    model.head_w.resize(static_cast<std::size_t>(cells) * spec.hidden * kNumClasses);
    model.head_b.assign(kNumClasses, 0.0f);
    float sh = std::sqrt(3.0f / static_cast<float>(cells * spec.hidden));
    for (float& w : model.head_w) w = rng.uniform_f(-sh, sh);
    return model;
}

std::vector<FastGrnnSpec> build_candidates(int budget_kb, SeqMode mode) {
    const std::uint64_t budget_bytes = static_cast<std::uint64_t>(budget_kb) * 1024;
    std::vector<FastGrnnSpec> pool;
    if (mode == SeqMode::Multi) {
        const double rhos[] = {0.1, 0.2, 0.3, 1.0};
        for (int h = 5; h <= 100; h += 5)
            for (double rw : rhos) pool.push_back({mode, h, rw, 1.0});
        if (budget_kb == 8) {
            pool.push_back({mode, 12, 1.0, 1.0});
            pool.push_back({mode, 14, 0.1, 1.0});
        }
    } else {
        const double rhos[] = {0.1, 0.2, 0.3};
        for (int h = 15; h <= 225; h += 15) {
            for (double rw : rhos)
                for (double ru : rhos) pool.push_back({mode, h, rw, ru});
            pool.push_back({mode, h, 1.0, 1.0});
        }
    }
    std::vector<std::pair<std::uint64_t, FastGrnnSpec>> feasible;
    for (const FastGrnnSpec& s : pool) {
        std::uint64_t bytes = fastgrnn_footprint(s).total_bytes;
        if (bytes <= budget_bytes) feasible.push_back({bytes, s});
    }
    std::sort(feasible.begin(), feasible.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first; // closest to budget first
        if (a.second.hidden != b.second.hidden) return a.second.hidden < b.second.hidden;
        if (a.second.rho_w != b.second.rho_w) return a.second.rho_w < b.second.rho_w;
        return a.second.rho_u < b.second.rho_u;
    });
    std::vector<FastGrnnSpec> out;
    for (std::size_t i = 0; i < feasible.size() && out.size() < 3; ++i) {
        bool dup = false;
        for (const FastGrnnSpec& s : out)
            dup |= s.hidden == feasible[i].second.hidden &&
                   s.rho_w == feasible[i].second.rho_w && s.rho_u == feasible[i].second.rho_u;
        if (!dup) out.push_back(feasible[i].second);
    }
    return out;
}

namespace {

struct CellTape {
    // per step: z, htld, h (hidden each); inputs come from the sequence
    std::vector<std::vector<float>> z, htld, h;
    std::vector<float> h0;
};

std::vector<float> run_cell_taped(const FastGrnnCell& cell,
                                  const std::vector<std::vector<float>>& seq, CellTape& tape,
                                  std::vector<float> h0 = {}) {
    std::size_t T = seq.size();
    tape.z.resize(T);
    tape.htld.resize(T);
    tape.h.resize(T);
    std::vector<float> h = h0.empty() ? std::vector<float>(cell.hidden, 0.0f) : std::move(h0);
    tape.h0 = h;
    for (std::size_t t = 0; t < T; ++t) {
        const std::vector<float>& x = seq[t];
        std::vector<float>& zt = tape.z[t];
        std::vector<float>& ht = tape.htld[t];
        zt.resize(static_cast<std::size_t>(cell.hidden));
        ht.resize(static_cast<std::size_t>(cell.hidden));
        std::vector<float> hn(static_cast<std::size_t>(cell.hidden));
        for (int i = 0; i < cell.hidden; ++i) {
            float pre = 0.0f;
            const float* wrow = &cell.W[static_cast<std::size_t>(i) * cell.input];
            for (int j = 0; j < cell.input; ++j) pre += wrow[j] * x[j];
            const float* urow = &cell.U[static_cast<std::size_t>(i) * cell.hidden];
            for (int j = 0; j < cell.hidden; ++j) pre += urow[j] * h[j];
            zt[i] = sigmoidf(pre + cell.bz[i]);
            ht[i] = std::tanh(pre + cell.bh[i]);
            hn[i] = (cell.zeta * (1.0f - zt[i]) + cell.nu) * ht[i] + zt[i] * h[i];
        }
        h.swap(hn);
        tape.h[t] = h;
    }
    return h;
}

// Returns the gradient wrt the initial hidden state.
std::vector<float> backprop_cell(const FastGrnnCell& cell,
                                 const std::vector<std::vector<float>>& seq,
                                 const CellTape& tape, std::vector<float> dh,
                                 std::vector<float>& dW, std::vector<float>& dU,
                                 std::vector<float>& dbz, std::vector<float>& dbh, float& dzeta,
                                 float& dnu) {
    std::size_t T = seq.size();
    const int H = cell.hidden;
    std::vector<float> dpre(static_cast<std::size_t>(H));
    for (std::size_t t = T; t-- > 0;) {
        const std::vector<float>& h_prev_vec = t == 0 ? tape.h0 : tape.h[t - 1];
        std::vector<float> dh_next(static_cast<std::size_t>(H), 0.0f);
        for (int i = 0; i < H; ++i) {
            float z = tape.z[t][i];
            float ht = tape.htld[t][i];
            float g = dh[i];
            dzeta += g * (1.0f - z) * ht;
            dnu += g * ht;
            float dz = g * (-cell.zeta * ht + h_prev_vec[i]);
            float dht = g * (cell.zeta * (1.0f - z) + cell.nu);
            float da_z = dz * z * (1.0f - z);
            float da_h = dht * (1.0f - ht * ht);
            dbz[i] += da_z;
            dbh[i] += da_h;
            dpre[i] = da_z + da_h;
            dh_next[i] = g * z;
        }
        const std::vector<float>& x = seq[t];
        for (int i = 0; i < H; ++i) {
            float dp = dpre[i];
            float* gw = &dW[static_cast<std::size_t>(i) * cell.input];
            for (int j = 0; j < cell.input; ++j) gw[j] += dp * x[j];
            float* gu = &dU[static_cast<std::size_t>(i) * H];
            for (int j = 0; j < H; ++j) gu[j] += dp * h_prev_vec[j];
        }
        // dh_prev += U^T dpre
        for (int i = 0; i < H; ++i) {
            float dp = dpre[i];
            const float* urow = &cell.U[static_cast<std::size_t>(i) * H];
            for (int j = 0; j < H; ++j) dh_next[j] += urow[j] * dp;
        }
        dh.swap(dh_next);
    }
    return dh;
}

FastGrnnGrads zero_grads(const FastGrnnClassifier& model) {
    FastGrnnGrads g;
    for (const FastGrnnCell& c : model.cells) {
        g.dW.push_back(std::vector<float>(c.W.size(), 0.0f));
        g.dU.push_back(std::vector<float>(c.U.size(), 0.0f));
        g.dbz.push_back(std::vector<float>(c.bz.size(), 0.0f));
        g.dbh.push_back(std::vector<float>(c.bh.size(), 0.0f));
    }
    g.dzeta.assign(model.cells.size(), 0.0f);
    g.dnu.assign(model.cells.size(), 0.0f);
    g.dhead_w.assign(model.head_w.size(), 0.0f);
    g.dhead_b.assign(model.head_b.size(), 0.0f);
    return g;
}

void grads_add(FastGrnnGrads& a, const FastGrnnGrads& b) {
    for (std::size_t c = 0; c < a.dW.size(); ++c) {
        for (std::size_t i = 0; i < a.dW[c].size(); ++i) a.dW[c][i] += b.dW[c][i];
        for (std::size_t i = 0; i < a.dU[c].size(); ++i) a.dU[c][i] += b.dU[c][i];
        for (std::size_t i = 0; i < a.dbz[c].size(); ++i) a.dbz[c][i] += b.dbz[c][i];
        for (std::size_t i = 0; i < a.dbh[c].size(); ++i) a.dbh[c][i] += b.dbh[c][i];
        a.dzeta[c] += b.dzeta[c];
        a.dnu[c] += b.dnu[c];
    }
    for (std::size_t i = 0; i < a.dhead_w.size(); ++i) a.dhead_w[i] += b.dhead_w[i];
    for (std::size_t i = 0; i < a.dhead_b.size(); ++i) a.dhead_b[i] += b.dhead_b[i];
}

void grads_scale(FastGrnnGrads& g, float s) {
    for (auto& v : g.dW)
        for (float& x : v) x *= s;
    for (auto& v : g.dU)
        for (float& x : v) x *= s;
    for (auto& v : g.dbz)
        for (float& x : v) x *= s;
    for (auto& v : g.dbh)
        for (float& x : v) x *= s;
    for (float& x : g.dzeta) x *= s;
    for (float& x : g.dnu) x *= s;
    for (float& x : g.dhead_w) x *= s;
    for (float& x : g.dhead_b) x *= s;
}

float sample_loss_grads(const FastGrnnClassifier& model, const ImageTensor& image, int label,
                        FastGrnnGrads& g) {
    auto seqs = sequence_image(image, model.spec.mode);
    std::vector<CellTape> tapes(model.cells.size());
    std::vector<float> concat;
    for (std::size_t c = 0; c < model.cells.size(); ++c) {
        std::vector<float> h = run_cell_taped(model.cells[c], seqs[c], tapes[c]);
        concat.insert(concat.end(), h.begin(), h.end());
    }
    std::vector<float> logits(kNumClasses);
    for (int o = 0; o < kNumClasses; ++o) logits[o] = model.head_b[o];
    for (std::size_t i = 0; i < concat.size(); ++i)
        for (int o = 0; o < kNumClasses; ++o)
            logits[o] += concat[i] * model.head_w[i * kNumClasses + o];
    float loss = softmax_ce_grad_inplace(logits, label);
    for (int o = 0; o < kNumClasses; ++o) g.dhead_b[o] += logits[o];
    std::vector<float> dconcat(concat.size(), 0.0f);
    for (std::size_t i = 0; i < concat.size(); ++i) {
        for (int o = 0; o < kNumClasses; ++o) {
            g.dhead_w[i * kNumClasses + o] += concat[i] * logits[o];
            dconcat[i] += model.head_w[i * kNumClasses + o] * logits[o];
        }
    }
    std::size_t off = 0;
    for (std::size_t c = 0; c < model.cells.size(); ++c) {
        std::vector<float> dh(dconcat.begin() + off, dconcat.begin() + off + model.cells[c].hidden);
        off += model.cells[c].hidden;
        backprop_cell(model.cells[c], seqs[c], tapes[c], std::move(dh), g.dW[c], g.dU[c],
                      g.dbz[c], g.dbh[c], g.dzeta[c], g.dnu[c]);
    }
    return loss;
}

std::vector<bool> support_of(const std::vector<float>& v) {
    std::vector<bool> s(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] != 0.0f;
    return s;
}

} // namespace

float fastgrnn_loss_and_grads(const FastGrnnClassifier& model, const ImageTensor& image,
                              int label, FastGrnnGrads& grads) {
    grads = zero_grads(model);
    return sample_loss_grads(model, image, label, grads);
}

float cell_sequence_grads(const FastGrnnCell& cell, const std::vector<std::vector<float>>& seq,
                          const std::vector<float>& h0, const std::vector<float>& readout,
                          std::vector<float>& dW, std::vector<float>& dU,
                          std::vector<float>& dbz, std::vector<float>& dbh, float& dzeta,
                          float& dnu, std::vector<float>& dh0) {
    CellTape tape;
    std::vector<float> hT = run_cell_taped(cell, seq, tape, h0);
    float loss = 0.0f;
    for (int i = 0; i < cell.hidden; ++i) loss += readout[i] * hT[i];
    dW.assign(cell.W.size(), 0.0f);
    dU.assign(cell.U.size(), 0.0f);
    dbz.assign(cell.bz.size(), 0.0f);
    dbh.assign(cell.bh.size(), 0.0f);
    dzeta = 0.0f;
    dnu = 0.0f;
    dh0 = backprop_cell(cell, seq, tape, readout, dW, dU, dbz, dbh, dzeta, dnu);
    return loss;
}

float fastgrnn_accuracy(const FastGrnnClassifier& model, const Dataset& data) {
    std::vector<std::size_t> hits(par::chunk_count(data.size()), 0);
    par::for_chunks(data.size(), [&](std::size_t c, std::size_t lo, std::size_t hi) {
        std::size_t h = 0;
        for (std::size_t i = lo; i < hi; ++i)
            if (fastgrnn_predict(model, data[i].image) == data[i].label) ++h;
        hits[c] = h;
    });
    std::size_t total = 0;
    for (std::size_t h : hits) total += h;
    return data.empty() ? 0.0f : static_cast<float>(total) / static_cast<float>(data.size());
}

FastGrnnTrainResult fastgrnn_train(const DatasetSplit& split, const FastGrnnSpec& spec,
                                   const FastGrnnTrainOptions& opt) {
    Rng rng(opt.seed);
    FastGrnnClassifier model = init_fastgrnn(spec, rng);
    const Dataset& sel_val = opt.selection_val ? *opt.selection_val : split.validation;
    AdamOpt adam(opt.lr, opt.weight_decay);
    FastGrnnTrainResult result;
    result.model = model;
    float best = -1.0f;

    const int stage1 = opt.epochs / 3;
    const int stage2 = 2 * opt.epochs / 3;
    const int decay_epoch = 2 * opt.epochs / 3; // epoch 100 of the 150-epoch recipe
    bool sparse = spec.rho_w < 1.0 || spec.rho_u < 1.0;
    std::vector<std::vector<bool>> supp_w(model.cells.size()), supp_u(model.cells.size());
    bool support_frozen = false;

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        float lr = opt.lr;
        if (opt.decay_at_two_thirds && epoch >= decay_epoch) lr = opt.lr * 0.1f;
        adam.set_learning_rate(lr);
        bool frozen_stage = sparse && epoch >= stage2;
        if (frozen_stage && !support_frozen) {
            for (std::size_t c = 0; c < model.cells.size(); ++c) {
                if (spec.rho_w < 1.0) hard_threshold_inplace(model.cells[c].W, spec.rho_w);
                if (spec.rho_u < 1.0) hard_threshold_inplace(model.cells[c].U, spec.rho_u);
                supp_w[c] = support_of(model.cells[c].W);
                supp_u[c] = support_of(model.cells[c].U);
            }
            result.stage3_support_w = supp_w;
            result.stage3_support_u = supp_u;
            support_frozen = true;
        }
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(opt.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
            std::size_t bsz = end - start;
            std::size_t nchunks = par::chunk_count(bsz);
            std::vector<FastGrnnGrads> cg(nchunks);
            std::vector<float> closs(nchunks, 0.0f);
            par::for_chunks(bsz, [&](std::size_t c, std::size_t lo, std::size_t hi) {
                cg[c] = zero_grads(model);
                float acc = 0.0f;
                for (std::size_t t = lo; t < hi; ++t)
                    acc += sample_loss_grads(model, split.train[order[start + t]].image,
                                             split.train[order[start + t]].label, cg[c]);
                closs[c] = acc;
            });
            FastGrnnGrads grads = zero_grads(model);
            float loss = 0.0f;
            for (std::size_t c = 0; c < nchunks; ++c) {
                grads_add(grads, cg[c]);
                loss += closs[c];
            }
            grads_scale(grads, 1.0f / static_cast<float>(bsz));
            MCML_CHECK(std::isfinite(loss), "fastgrnn_train: non-finite loss");
            if (frozen_stage) {
                for (std::size_t c = 0; c < model.cells.size(); ++c) {
                    if (spec.rho_w < 1.0)
                        for (std::size_t i = 0; i < grads.dW[c].size(); ++i)
                            if (!supp_w[c][i]) grads.dW[c][i] = 0.0f;
                    if (spec.rho_u < 1.0)
                        for (std::size_t i = 0; i < grads.dU[c].size(); ++i)
                            if (!supp_u[c][i]) grads.dU[c][i] = 0.0f;
                }
            }
            std::size_t block = 0;
            for (std::size_t c = 0; c < model.cells.size(); ++c) {
                adam.update(block++, model.cells[c].W, grads.dW[c]);
                adam.update(block++, model.cells[c].U, grads.dU[c]);
                adam.update(block++, model.cells[c].bz, grads.dbz[c]);
                adam.update(block++, model.cells[c].bh, grads.dbh[c]);
                std::vector<float> zeta{model.cells[c].zeta}, gz{grads.dzeta[c]};
                adam.update(block++, zeta, gz);
                model.cells[c].zeta = zeta[0];
                std::vector<float> nu{model.cells[c].nu}, gn{grads.dnu[c]};
                adam.update(block++, nu, gn);
                model.cells[c].nu = nu[0];
            }
            adam.update(block++, model.head_w, grads.dhead_w);
            adam.update(block++, model.head_b, grads.dhead_b);
            if (frozen_stage) {
                for (std::size_t c = 0; c < model.cells.size(); ++c) {
                    if (spec.rho_w < 1.0)
                        for (std::size_t i = 0; i < model.cells[c].W.size(); ++i)
                            if (!supp_w[c][i]) model.cells[c].W[i] = 0.0f;
                    if (spec.rho_u < 1.0)
                        for (std::size_t i = 0; i < model.cells[c].U.size(); ++i)
                            if (!supp_u[c][i]) model.cells[c].U[i] = 0.0f;
                }
            }
        }
        bool iht_stage = sparse && epoch >= stage1 && epoch < stage2;
        if (iht_stage) {
            for (std::size_t c = 0; c < model.cells.size(); ++c) {
                if (spec.rho_w < 1.0) hard_threshold_inplace(model.cells[c].W, spec.rho_w);
                if (spec.rho_u < 1.0) hard_threshold_inplace(model.cells[c].U, spec.rho_u);
            }
        }
        float acc = fastgrnn_accuracy(model, sel_val);
        result.val_history.push_back(acc);
        // Rollback pool: epochs after compression starts (all epochs for a
        // dense spec).
        bool post_compression = !sparse || epoch >= stage1;
        if (post_compression && acc > best) {
            best = acc;
            result.model = model;
        }
    }
    result.best_val_accuracy = best < 0.0f ? 0.0f : best;
    if (!support_frozen && sparse) {
        // degenerate short runs: make the returned model honor the densities
        for (std::size_t c = 0; c < result.model.cells.size(); ++c) {
            if (spec.rho_w < 1.0) hard_threshold_inplace(result.model.cells[c].W, spec.rho_w);
            if (spec.rho_u < 1.0) hard_threshold_inplace(result.model.cells[c].U, spec.rho_u);
        }
    }
    return result;
}

std::vector<std::uint8_t> fastgrnn_serialize(const FastGrnnClassifier& model) {
    ByteWriter w;
    w.u8('F');
    switch (model.spec.mode) {
    case SeqMode::RowMajor: w.u8('R'); break;
    case SeqMode::ChannelMajor: w.u8('C'); break;
    case SeqMode::Multi: w.u8('M'); break;
    }
    w.i32(model.spec.hidden);
    w.i32(static_cast<std::int32_t>(std::llround(model.spec.rho_w * 1000.0)));
    w.i32(static_cast<std::int32_t>(std::llround(model.spec.rho_u * 1000.0)));
    for (const FastGrnnCell& cell : model.cells) {
        DenseMatrix W(cell.hidden, cell.input);
        W.data = cell.W;
        DenseMatrix U(cell.hidden, cell.hidden);
        U.data = cell.U;
        if (model.spec.rho_w < 1.0)
            w.sparse_block(hard_threshold(W, model.spec.rho_w));
        else
            w.dense_block(cell.W);
        if (model.spec.rho_u < 1.0)
            w.sparse_block(hard_threshold(U, model.spec.rho_u));
        else
            w.dense_block(cell.U);
        w.dense_block(cell.bz);
        w.dense_block(cell.bh);
        w.f32(cell.zeta);
        w.f32(cell.nu);
    }
    w.dense_block(model.head_w);
    w.dense_block(model.head_b);
    return w.bytes();
}

FastGrnnClassifier fastgrnn_deserialize(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    MCML_CHECK(r.u8() == 'F', "not a fastgrnn model file");
    FastGrnnClassifier model;
    std::uint8_t mode = r.u8();
    model.spec.mode = mode == 'R'   ? SeqMode::RowMajor
                      : mode == 'C' ? SeqMode::ChannelMajor
                                    : SeqMode::Multi;
    MCML_CHECK(mode == 'R' || mode == 'C' || mode == 'M', "bad fastgrnn mode byte");
    model.spec.hidden = r.i32();
    model.spec.rho_w = static_cast<double>(r.i32()) / 1000.0;
    model.spec.rho_u = static_cast<double>(r.i32()) / 1000.0;
    const int cells = model.spec.mode == SeqMode::Multi ? kImageChannels : 1;
    const int h = model.spec.hidden;
    for (int c = 0; c < cells; ++c) {
        FastGrnnCell cell;
        cell.hidden = h;
        cell.input = kImageWidth;
        std::uint64_t w_elems = static_cast<std::uint64_t>(h) * kImageWidth;
        std::uint64_t u_elems = static_cast<std::uint64_t>(h) * h;
        if (model.spec.rho_w < 1.0)
            cell.W = densify(r.sparse_block(h, kImageWidth,
                                            threshold_count(model.spec.rho_w, w_elems)))
                         .data;
        else
            r.dense_block(cell.W, w_elems);
        if (model.spec.rho_u < 1.0)
            cell.U =
                densify(r.sparse_block(h, h, threshold_count(model.spec.rho_u, u_elems))).data;
        else
            r.dense_block(cell.U, u_elems);
        r.dense_block(cell.bz, static_cast<std::size_t>(h));
        r.dense_block(cell.bh, static_cast<std::size_t>(h));
        cell.zeta = r.f32();
        cell.nu = r.f32();
        model.cells.push_back(std::move(cell));
    }
    r.dense_block(model.head_w, static_cast<std::size_t>(cells) * h * kNumClasses);
    r.dense_block(model.head_b, kNumClasses);
    MCML_CHECK(r.done(), "trailing bytes in fastgrnn model file");
    return model;
}

} // namespace mcml

#include "mcml/cnn_train.hpp"

#include <algorithm>
#include <cmath>

#include "mcml/adam.hpp"
#include "mcml/mathutil.hpp"
#include "mcml/parallel.hpp"

namespace mcml {

namespace {

float batch_pass(const CnnModel& model, const Dataset& data,
                 const std::vector<std::size_t>& idx, std::size_t lo, std::size_t hi,
                 std::uint64_t dropout_salt, CnnGrads& grads) {
    float loss_sum = 0.0f;
    for (std::size_t t = lo; t < hi; ++t) {
        const LabeledImage& sample = data[idx[t]];
        Rng drop_rng(dropout_salt ^ (0x9e37ULL * (idx[t] + 1)));
        CnnCache cache;
        std::vector<float> logits =
            cnn_forward(model, sample.image.data, true, &drop_rng, &cache);
        loss_sum += softmax_ce_grad_inplace(logits, sample.label);
        cnn_backward(model, cache, logits, grads);
    }
    return loss_sum;
}

} // namespace

float cnn_dataset_loss(const CnnModel& model, const Dataset& data) {
    std::vector<double> chunk_loss(par::chunk_count(data.size()), 0.0);
    par::for_chunks(data.size(), [&](std::size_t c, std::size_t lo, std::size_t hi) {
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            std::vector<float> logits = cnn_forward(model, data[i].image.data, false, nullptr, nullptr);
            acc += softmax_ce_grad_inplace(logits, data[i].label);
        }
        chunk_loss[c] = acc;
    });
    double total = 0.0;
    for (double v : chunk_loss) total += v;
    return static_cast<float>(total / static_cast<double>(data.size()));
}

float cnn_accuracy(const CnnModel& model, const Dataset& data) {
    std::vector<std::size_t> chunk_hits(par::chunk_count(data.size()), 0);
    par::for_chunks(data.size(), [&](std::size_t c, std::size_t lo, std::size_t hi) {
        std::size_t hits = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            std::vector<float> logits = cnn_forward(model, data[i].image.data, false, nullptr, nullptr);
            if (argmax_lowest(logits) == data[i].label) ++hits;
        }
        chunk_hits[c] = hits;
    });
    std::size_t hits = 0;
    for (std::size_t v : chunk_hits) hits += v;
    return static_cast<float>(hits) / static_cast<float>(data.size());
}

CnnTrainResult train_cnn(CnnModel model, const DatasetSplit& split, const CnnTrainOptions& opt) {
    const Dataset& sel_val = opt.selection_val ? *opt.selection_val : split.validation;
    Rng rng(opt.seed);
    AdamOpt adam(opt.lr_init);
    CnnTrainResult result;
    result.model = model;
    float best_acc = -1.0f;
    int since_best = 0;
    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        adam.set_learning_rate(opt.lr_init * std::pow(opt.lr_decay, static_cast<float>(epoch)));
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            std::size_t end = std::min(order.size(), start + opt.batch_size);
            std::size_t bsz = end - start;
            std::size_t nchunks = par::chunk_count(bsz);
            std::vector<CnnGrads> chunk_grads(nchunks);
            std::vector<float> chunk_loss(nchunks, 0.0f);
            par::for_chunks(bsz, [&](std::size_t c, std::size_t lo, std::size_t hi) {
                chunk_grads[c] = zero_grads(model);
                chunk_loss[c] =
                    batch_pass(model, split.train, order, start + lo, start + hi,
                               opt.seed * 1315423911ULL + static_cast<std::uint64_t>(epoch),
                               chunk_grads[c]);
            });
            CnnGrads grads = zero_grads(model);
            float loss = 0.0f;
            for (std::size_t c = 0; c < nchunks; ++c) {
                grads.add(chunk_grads[c]);
                loss += chunk_loss[c];
            }
            grads.scale(1.0f / static_cast<float>(bsz));
            loss /= static_cast<float>(bsz);
            MCML_CHECK(std::isfinite(loss),
                       "train_cnn: non-finite loss at epoch " + std::to_string(epoch));
            for (std::size_t li = 0; li < model.weights.size(); ++li) {
                if (!model.weights[li].empty())
                    adam.update(2 * li, model.weights[li], grads.weights[li]);
                if (!model.biases[li].empty())
                    adam.update(2 * li + 1, model.biases[li], grads.biases[li]);
            }
            epoch_loss += loss;
            ++batches;
        }
        result.history.train_loss.push_back(
            static_cast<float>(epoch_loss / static_cast<double>(batches ? batches : 1)));
        float acc = cnn_accuracy(model, sel_val);
        result.history.val_accuracy.push_back(acc);
        if (acc > best_acc) {
            best_acc = acc;
            result.model = model;
            since_best = 0;
        } else if (opt.patience > 0 && ++since_best >= opt.patience) {
            break;
        }
    }
    result.best_val_accuracy = best_acc < 0.0f ? 0.0f : best_acc;
    return result;
}

const std::vector<ArchSpec>& all_models() {
    static const std::vector<ArchSpec> models = enumerate_models();
    return models;
}

const std::vector<ArchSpec>& all_valid_models() {
    static const std::vector<ArchSpec> models = [] {
        std::vector<ArchSpec> out;
        for (const ArchSpec& a : all_models()) {
            try {
                shape_chain(a);
            } catch (const Error&) {
                continue;
            }
            out.push_back(a);
        }
        return out;
    }();
    return models;
}

CnnSearchResult sampling_search(int budget_kb, const DatasetSplit& split,
                                const CnnSearchOptions& opt) {
    const std::uint64_t budget_bytes = static_cast<std::uint64_t>(budget_kb) * 1024;
    const std::vector<ArchSpec>& models = all_valid_models();
    std::vector<std::size_t> feasible;
    for (std::size_t i = 0; i < models.size(); ++i)
        if (cnn_footprint(models[i]).total_bytes <= budget_bytes) feasible.push_back(i);
    MCML_CHECK(!feasible.empty(),
               "no feasible model for budget " + std::to_string(budget_kb) + "KB");

    Rng rng(opt.seed);
    std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(opt.n_samples),
                                             feasible.size());
    // partial Fisher-Yates: draw `take` without replacement
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(feasible.size() - i));
        std::swap(feasible[i], feasible[j]);
    }
    feasible.resize(take);

    CnnSearchResult result;
    float best_partial = -1.0f;
    std::string best_key;
    std::size_t best_idx = 0;
    for (std::size_t t = 0; t < take; ++t) {
        const ArchSpec& arch = models[feasible[t]];
        Rng init_rng = rng.fork(t);
        CnnModel candidate = init_cnn(arch, init_rng);
        CnnTrainOptions popt;
        popt.epochs = opt.partial_epochs;
        popt.patience = 0; // exactly the stated number of epochs
        popt.batch_size = opt.batch_size;
        popt.seed = opt.seed ^ (t * 2654435761ULL + 1);
        popt.selection_val = opt.selection_val;
        CnnTrainResult r = train_cnn(std::move(candidate), split, popt);
        result.pool_partial_acc.push_back(r.best_val_accuracy);
        std::string key = print_arch(arch);
        if (r.best_val_accuracy > best_partial ||
            (r.best_val_accuracy == best_partial && key < best_key)) {
            best_partial = r.best_val_accuracy;
            best_key = key;
            best_idx = t;
        }
    }
    const ArchSpec& winner = models[feasible[best_idx]];
    Rng init_rng = rng.fork(best_idx);
    CnnModel final_model = init_cnn(winner, init_rng);
    CnnTrainOptions fopt;
    fopt.epochs = opt.full_epochs;
    fopt.patience = opt.full_patience;
    fopt.batch_size = opt.batch_size;
    fopt.seed = opt.seed ^ 0xf00dULL;
    fopt.selection_val = opt.selection_val;
    CnnTrainResult r = train_cnn(std::move(final_model), split, fopt);
    result.arch = winner;
    result.model = std::move(r.model);
    result.footprint = cnn_footprint(winner);
    result.val_accuracy = r.best_val_accuracy;
    result.selected_partial_acc = best_partial;
    return result;
}

} // namespace mcml

#pragma once

#include <vector>

#include "mcml/dataset.hpp"
#include "mcml/footprint.hpp"
#include "mcml/rng.hpp"
#include "mcml/tensor.hpp"

namespace mcml {

// Shallow soft decision tree over a learned sparse projection. Nodes are
// heap-indexed (children of k are 2k+1 and 2k+2); every node contributes
// (W_k x^) * tanh(sigma_s V_k x^) weighted by its path indicator. Densities
// are fixed: projection 0.2, predictors 0.3, branching 0.62, applied to the
// stacked matrices as wholes.
struct BonsaiSpec {
    int depth = 1; // h in [1, 8]
    int dim = 1;   // projection dim >= 1

    int nodes() const { return (1 << (depth + 1)) - 1; }
    int internal_nodes() const { return (1 << depth) - 1; }
};

constexpr double kBonsaiDensityZ = 0.2;
constexpr double kBonsaiDensityWV = 0.3;
constexpr double kBonsaiDensityTheta = 0.62;

struct BonsaiModel {
    BonsaiSpec spec;
    int input_dim = kFlatImageDim;
    float sigma_s = 1.0f; // tanh sharpness
    float sigma_b = 1.0f; // soft branching sharpness
    DenseMatrix Z;     // dim x input_dim
    DenseMatrix W;     // (nodes*10) x dim, stacked per node
    DenseMatrix V;     // (nodes*10) x dim
    DenseMatrix Theta; // internal_nodes x dim
};

enum class BonsaiMode { Soft, Hard };

std::vector<float> bonsai_scores(const BonsaiModel& model, const std::vector<float>& x,
                                 BonsaiMode mode);
int bonsai_predict(const BonsaiModel& model, const std::vector<float>& x,
                   BonsaiMode mode = BonsaiMode::Hard);

// Root-to-leaf node ids visited in hard mode (depth+1 entries).
std::vector<int> bonsai_hard_path(const BonsaiModel& model, const std::vector<float>& x);

Footprint bonsai_footprint(const BonsaiSpec& spec, int input_dim = kFlatImageDim);

struct BonsaiTrainOptions {
    int epochs = 200;
    float lr = 0.01f;
    int batch_size = 224;
    float reg_wvtheta = 1e-3f;
    float reg_z = 1e-4f;
    std::uint64_t seed = 1;
    const LabeledVectors* selection_val = nullptr;
};

struct BonsaiTrainResult {
    BonsaiModel final_model;
    BonsaiModel best_model; // best-validation snapshot (hard-mode accuracy)
    float best_val_accuracy = 0.0f;
    std::vector<float> val_history;
};

// Adam on softmax cross-entropy over soft scores with L2 regularizers;
// three equal phases: dense, hard-threshold re-projection after every step,
// then value fine-tuning on the frozen support. No early stopping.
BonsaiTrainResult bonsai_train(const LabeledVectors& train, const LabeledVectors& val,
                               const BonsaiSpec& spec, const BonsaiTrainOptions& opt);

float bonsai_accuracy(const BonsaiModel& model, const LabeledVectors& data,
                      BonsaiMode mode = BonsaiMode::Hard);

// Regularized soft-mode loss and full gradients for one sample (checks).
float bonsai_loss_and_grads(const BonsaiModel& model, const std::vector<float>& x, int label,
                            float reg_wvtheta, float reg_z, std::vector<float>& dZ,
                            std::vector<float>& dW, std::vector<float>& dV,
                            std::vector<float>& dTheta);

// Depth 1..8, dim swept upward until the footprint passes 128KB.
std::vector<BonsaiSpec> bonsai_sweep_specs(int max_kb = 128, int input_dim = kFlatImageDim);

struct BonsaiSearchResult {
    BonsaiSpec spec;
    BonsaiModel model;
    Footprint footprint;
    float val_accuracy = 0.0f;
};

struct BonsaiSearchOptions {
    BonsaiTrainOptions train;
    bool desk = false; // desk scale trains a thinned sweep (dim doubling)
};

BonsaiSearchResult bonsai_search(int budget_kb, const LabeledVectors& train,
                                 const LabeledVectors& val, const BonsaiSearchOptions& opt);

std::vector<std::uint8_t> bonsai_serialize(const BonsaiModel& model);
BonsaiModel bonsai_deserialize(const std::vector<std::uint8_t>& bytes);

} // namespace mcml

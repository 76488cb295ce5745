#pragma once

#include <optional>
#include <vector>

#include "mcml/dataset.hpp"
#include "mcml/footprint.hpp"
#include "mcml/rng.hpp"
#include "mcml/serialize.hpp"
#include "mcml/tensor.hpp"

namespace mcml {

// Prototype classifier: sparse projection W (d x D), m prototypes in the
// projected space, label scores Z (10 x m) and a Gaussian-kernel width.
// score(c) = sum_j exp(-gamma^2 * |Wx - b_j|^2) * Z[c,j].
struct ProtonnModel {
    int d = 0;         // projection dim
    int m = 0;         // prototypes
    int input_dim = kFlatImageDim;
    double rho_w = 1.0;
    DenseMatrix W;     // d x input_dim
    DenseMatrix B;     // d x m, column j = prototype j
    DenseMatrix Z;     // 10 x m
    float gamma = 1.0f;
};

std::vector<float> protonn_scores(const ProtonnModel& model, const std::vector<float>& x);
int protonn_predict(const ProtonnModel& model, const std::vector<float>& x);

Footprint protonn_footprint(int d, int m, double rho_w, int input_dim = kFlatImageDim);

struct ProtonnTrainOptions {
    int epochs = 100;
    int patience = 10;
    int batch_size = 100;
    std::uint64_t seed = 1;
    const LabeledVectors* selection_val = nullptr;
};

struct ProtonnTrainResult {
    ProtonnModel model; // best-validation snapshot
    float best_val_accuracy = 0.0f;
    std::vector<float> val_history;
};

// Squared error against one-hot labels, Adam over W, B and Z in alternating
// passes each epoch, W re-projected to rho_w by hard thresholding after
// every epoch. Prototypes start from per-class k-means in projected space.
ProtonnTrainResult protonn_train(const LabeledVectors& train, const LabeledVectors& val,
                                 int d, int m, double rho_w, float gamma, float lr,
                                 const ProtonnTrainOptions& opt);

float protonn_accuracy(const ProtonnModel& model, const LabeledVectors& data);

// Squared-error loss of one sample plus gradients wrt W, B and Z; the
// gradient-check suite compares these against finite differences.
float protonn_loss_and_grads(const ProtonnModel& model, const std::vector<float>& x, int label,
                             std::vector<float>& dW, std::vector<float>& dB,
                             std::vector<float>& dZ);

// One grid cell of the 5.2 search.
struct ProtonnGridCell {
    int d = 0, m = 0;
    float gamma = 0.0f;
    float lr = 0.0f;
};

// d, m in {2,...,64}, gamma = 1.5*10^n for n in [-4,4], lr in {.1,.01,.001},
// rho fixed at 1.0. 972 cells before the footprint filter.
std::vector<ProtonnGridCell> protonn_grid();

struct ProtonnSearchResult {
    ProtonnGridCell cell;
    ProtonnModel model;
    Footprint footprint;
    float val_accuracy = 0.0f;
};

struct ProtonnSearchOptions {
    ProtonnTrainOptions train;
    // Desk scale trains a deterministic subsample of the feasible cells.
    int max_cells = 0; // 0 = all
    std::uint64_t seed = 1;
};

// Empty result when no grid cell fits the budget (the 8KB/16KB outcome).
std::optional<ProtonnSearchResult> protonn_grid_search(int budget_kb,
                                                       const LabeledVectors& train,
                                                       const LabeledVectors& val,
                                                       const ProtonnSearchOptions& opt);

std::vector<std::uint8_t> protonn_serialize(const ProtonnModel& model);
ProtonnModel protonn_deserialize(const std::vector<std::uint8_t>& bytes);

LabeledVectors to_vectors(const Dataset& data);

} // namespace mcml

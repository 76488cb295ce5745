#pragma once

#include "mcml/cnn_model.hpp"

namespace mcml {

struct TrainHistory {
    std::vector<float> train_loss;   // mean loss per epoch
    std::vector<float> val_accuracy; // per epoch
};

struct CnnTrainOptions {
    int epochs = 100;
    int patience = 5; // 0 disables early stopping
    float lr_init = 0.005f;
    float lr_decay = 0.95f; // per epoch
    int batch_size = 50;
    std::uint64_t seed = 1;
    // Validation subset used for per-epoch selection; full validation
    // otherwise. Desk-scale runs pass a reduced set here.
    const Dataset* selection_val = nullptr;
};

struct CnnTrainResult {
    CnnModel model; // best-validation snapshot
    TrainHistory history;
    float best_val_accuracy = 0.0f;
};

CnnTrainResult train_cnn(CnnModel model, const DatasetSplit& split, const CnnTrainOptions& opt);

float cnn_dataset_loss(const CnnModel& model, const Dataset& data);
float cnn_accuracy(const CnnModel& model, const Dataset& data);

struct CnnSearchOptions {
    int n_samples = 750;
    int partial_epochs = 5;
    int full_epochs = 100;
    int full_patience = 5;
    int batch_size = 50;
    std::uint64_t seed = 1;
    const Dataset* selection_val = nullptr;
};

struct CnnSearchResult {
    ArchSpec arch;
    CnnModel model;
    Footprint footprint;
    float val_accuracy = 0.0f;          // of the fully trained winner
    float selected_partial_acc = 0.0f;  // winner's score in the pool
    std::vector<float> pool_partial_acc;
};

// Samples footprint-feasible architectures uniformly, gives each a short
// partial training, fully trains the best. Throws when no architecture
// fits the budget.
CnnSearchResult sampling_search(int budget_kb, const DatasetSplit& split,
                                const CnnSearchOptions& opt);

// Cached Cartesian expansion used by the search (large).
const std::vector<ArchSpec>& all_models();

// The shape-valid subset (some expansions shrink the feature map below
// their own kernels; those can never instantiate).
const std::vector<ArchSpec>& all_valid_models();

} // namespace mcml

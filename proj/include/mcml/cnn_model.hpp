#pragma once

#include <vector>

#include "mcml/cnn_arch.hpp"
#include "mcml/cnn_plan.hpp"
#include "mcml/dataset.hpp"
#include "mcml/footprint.hpp"
#include "mcml/rng.hpp"

namespace mcml {

struct CnnModel {
    ArchSpec arch;
    std::vector<std::vector<float>> weights; // empty for pools/dropout
    std::vector<std::vector<float>> biases;
};

// Fan-in-scaled uniform init, biases zero.
CnnModel init_cnn(const ArchSpec& arch, Rng& rng);

// Reference executor: one buffer per layer, dropout is the identity.
std::vector<float> forward_naive(const CnnModel& model, const ImageTensor& image);

// Training pass. The cache keeps the activation after every layer plus the
// max-pool argmaxes and dropout masks the backward pass needs.
struct CnnCache {
    std::vector<std::vector<float>> acts;     // acts[0] is the input
    std::vector<std::vector<int>> pool_argmax;
    std::vector<std::vector<float>> dropout_mask;
};

std::vector<float> cnn_forward(const CnnModel& model, const std::vector<float>& input,
                               bool train, Rng* dropout_rng, CnnCache* cache);

struct CnnGrads {
    std::vector<std::vector<float>> weights;
    std::vector<std::vector<float>> biases;

    void add(const CnnGrads& other);
    void scale(float s);
};

CnnGrads zero_grads(const CnnModel& model);

// dlogits -> parameter gradients; also returns d(input) for gradient checks.
std::vector<float> cnn_backward(const CnnModel& model, const CnnCache& cache,
                                const std::vector<float>& dlogits, CnnGrads& grads);

// Size model: 4 bytes per parameter plus the peak live activation count of
// the in-place schedule at 1 byte per element (the whole 32x32x3 input
// buffer counts, so the floor is 3,072 bytes).
Footprint cnn_footprint(const ArchSpec& arch);

// Peak live elements of the in-place schedule (shared with the executor).
std::uint64_t cnn_activation_peak_elems(const ArchSpec& arch);

std::vector<std::uint8_t> cnn_serialize(const CnnModel& model);
CnnModel cnn_deserialize(const std::vector<std::uint8_t>& bytes);

} // namespace mcml

#pragma once

#include <cstddef>
#include <vector>

#include "mcml/common.hpp"

namespace mcml {

// Adam with bias correction and decoupled weight decay. One state per
// parameter block; `step` counts updates applied to that block.
struct AdamState {
    std::size_t step = 0;
    std::vector<float> first_moment;
    std::vector<float> second_moment;
    float learning_rate = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    float weight_decay = 0.0f;

    AdamState() = default;
    AdamState(std::size_t n, float lr)
        : first_moment(n, 0.0f), second_moment(n, 0.0f), learning_rate(lr) {}
};

void adam_step(std::vector<float>& params, const std::vector<float>& grads, AdamState& state);

// Convenience wrapper for trainers with several parameter blocks sharing
// one learning-rate schedule.
class AdamOpt {
public:
    explicit AdamOpt(float lr, float weight_decay = 0.0f)
        : lr_(lr), weight_decay_(weight_decay) {}

    void set_learning_rate(float lr) { lr_ = lr; }
    float learning_rate() const { return lr_; }

    // `block` identifies the parameter tensor; states are created lazily.
    void update(std::size_t block, std::vector<float>& params, const std::vector<float>& grads);

private:
    float lr_;
    float weight_decay_;
    std::vector<AdamState> states_;
};

} // namespace mcml

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace mcml {

// argmax with ties broken toward the lowest index
inline int argmax_lowest(const std::vector<float>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

inline void softmax_inplace(std::vector<float>& v) {
    float m = v[0];
    for (float x : v) m = x > m ? x : m;
    float sum = 0.0f;
    for (float& x : v) {
        x = std::exp(x - m);
        sum += x;
    }
    for (float& x : v) x /= sum;
}

// Softmax cross-entropy against a one-hot target. Returns the loss and
// leaves the gradient wrt the logits in `logits`.
inline float softmax_ce_grad_inplace(std::vector<float>& logits, int label) {
    softmax_inplace(logits);
    float p = logits[static_cast<std::size_t>(label)];
    float loss = -std::log(p > 1e-30f ? p : 1e-30f);
    logits[static_cast<std::size_t>(label)] -= 1.0f;
    return loss;
}

inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

} // namespace mcml

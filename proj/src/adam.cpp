#include "mcml/adam.hpp"

#include <cmath>

namespace mcml {

void adam_step(std::vector<float>& params, const std::vector<float>& grads, AdamState& state) {
    MCML_CHECK(params.size() == grads.size(), "adam_step: params/grads shape mismatch");
    MCML_CHECK(params.size() == state.first_moment.size() &&
                   params.size() == state.second_moment.size(),
               "adam_step: state shape mismatch");
    state.step += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    const double lr = state.learning_rate;
    const double eps = state.epsilon;
    const double wd = state.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        double g = grads[i];
        double m = b1 * state.first_moment[i] + (1.0 - b1) * g;
        double v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
        state.first_moment[i] = static_cast<float>(m);
        state.second_moment[i] = static_cast<float>(v);
        double mhat = m / bc1;
        double vhat = v / bc2;
        double p = params[i];
        p -= lr * mhat / (std::sqrt(vhat) + eps);
        if (wd > 0.0) p -= lr * wd * params[i];
        params[i] = static_cast<float>(p);
    }
}

void AdamOpt::update(std::size_t block, std::vector<float>& params,
                     const std::vector<float>& grads) {
    if (block >= states_.size()) states_.resize(block + 1);
    AdamState& st = states_[block];
    if (st.first_moment.size() != params.size()) {
        st = AdamState(params.size(), lr_);
        st.weight_decay = weight_decay_;
    }
    st.learning_rate = lr_;
    adam_step(params, grads, st);
}

} // namespace mcml

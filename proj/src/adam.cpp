#include "umfa/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace umfa {

void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->grad.empty()) {
            throw std::invalid_argument("adam_step: parameter " + std::to_string(i) +
                                        " has no gradient");
        }
    }
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i]->numel(), 0.0f);
            state.v[i].assign(params[i]->numel(), 0.0f);
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state tracks a different parameter set");
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.t);
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.t);

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (state.m[i].size() != p.numel()) {
            throw std::invalid_argument("adam_step: moment shape mismatch for parameter " +
                                        std::to_string(i));
        }
        float* m = state.m[i].data();
        float* v = state.v[i].data();
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = p.grad[j];
            m[j] = static_cast<float>(state.beta1 * m[j] + (1.0 - state.beta1) * g);
            v[j] = static_cast<float>(state.beta2 * v[j] + (1.0 - state.beta2) * g * g);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data[j] = static_cast<float>(p.data[j] -
                                           state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
        p.zero_grad();
    }
}

}  // namespace umfa

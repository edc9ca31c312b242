#pragma once

#include <cstdint>
#include <vector>

#include "umfa/tensor.hpp"

namespace umfa {

/// Adam optimizer state. Moment buffers are created lazily on the first
/// step and match their parameters elementwise from then on.
struct AdamState {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    long long t = 0;
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam update over `params`. Every parameter must
/// carry a populated grad; grads are zeroed after the step.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state);

}  // namespace umfa

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "umfa/tensor.hpp"

namespace umfa::ops {

// All ops return a fresh tensor, record their backward step on the tape
// (when recording), and propagate requires_grad from their inputs.
// Dot products accumulate in 64-bit.

/// 2-D convolution. weight is (c_out, c_in, k, k), bias is (1, c_out, 1, 1).
/// Kernel size must be 1 or 3.
TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias, int stride, int padding);

/// Depthwise valid convolution with one fixed k*k kernel shared by every
/// channel. Differentiable w.r.t. the input only.
TensorPtr conv2d_depthwise(Tape& tape, const TensorPtr& input,
                           const std::vector<float>& kernel, int k);

/// 2x2 max pooling. Gradient routes to the argmax position only; exact
/// ties go to the first index in row-major scan order.
TensorPtr maxpool2d(Tape& tape, const TensorPtr& input);

/// Nearest-neighbour 2x upsampling; each pixel becomes a 2x2 block.
TensorPtr upsample_nearest(Tape& tape, const TensorPtr& input);

/// Channel concatenation; inputs must agree on n, h, w.
TensorPtr concat_channels(Tape& tape, const std::vector<TensorPtr>& inputs);
TensorPtr concat_channels(Tape& tape, const TensorPtr& a, const TensorPtr& b);

TensorPtr relu(Tape& tape, const TensorPtr& input);
TensorPtr sigmoid(Tape& tape, const TensorPtr& input);

/// Per-(sample, channel) spatial mean and std. Population variance
/// (divide by h*w); std = sqrt(var + eps). Both outputs have shape
/// (n, c, 1, 1).
std::pair<TensorPtr, TensorPtr> channel_moments(Tape& tape, const TensorPtr& input,
                                                float eps);

// Elementwise ops on same-shape tensors.
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr div(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr add_scalar(Tape& tape, const TensorPtr& a, float s);
TensorPtr mul_scalar(Tape& tape, const TensorPtr& a, float s);

// Ops broadcasting a (n, c, 1, 1) operand over the spatial dims of `x`.
TensorPtr add_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s);
TensorPtr sub_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s);
TensorPtr mul_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s);
TensorPtr div_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s);

/// Sum of all elements, as a (1,1,1,1) scalar.
TensorPtr sum_all(Tape& tape, const TensorPtr& a);
TensorPtr mean_all(Tape& tape, const TensorPtr& a);

/// Per-sample Gram matrix of the c x (h*w) channel flattening:
/// out(n, 0, i, j) = sum_m F[i][m] * F[j][m]. Unnormalized.
TensorPtr gram(Tape& tape, const TensorPtr& feature);

/// Number of conv2d executions on this thread since the last reset.
/// Used to verify that aggregation strategies add no hidden convolutions.
std::size_t conv2d_call_count();
void reset_conv2d_call_count();

/// Branch decisions of a forward pass, in op-encounter order. The
/// gradient checker replays them in its reference evaluation so finite
/// differences probe the same linear piece as the analytic gradient.
struct BranchTrace {
    std::vector<std::vector<std::uint8_t>> relu_masks;
    std::vector<std::vector<std::size_t>> pool_argmax;
};

/// While set (per thread), relu and maxpool2d append their decisions.
void set_branch_recorder(BranchTrace* trace);

}  // namespace umfa::ops

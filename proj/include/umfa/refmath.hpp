#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "umfa/loss_network.hpp"
#include "umfa/losses.hpp"
#include "umfa/net.hpp"
#include "umfa/ops.hpp"
#include "umfa/tensor.hpp"

// Double-precision forward-only mirror of the float engine. The gradient
// checker evaluates finite differences here: float32 rounding of the loss
// would otherwise dominate the difference quotient at delta = 1e-3.
namespace umfa::ref {

struct DTensor {
    Shape shape{1, 1, 1, 1};
    std::vector<double> data;

    std::size_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w;
    }
};

DTensor zeros(const Shape& s);
DTensor mirror(const TensorPtr& t);

DTensor conv2d(const DTensor& x, const DTensor& w, const DTensor& b, int stride, int padding);
DTensor depthwise(const DTensor& x, const std::vector<double>& kernel, int k);
DTensor maxpool2d(const DTensor& x);
DTensor upsample_nearest(const DTensor& x);
DTensor concat_channels(const std::vector<DTensor>& xs);
DTensor relu(const DTensor& x);
DTensor sigmoid(const DTensor& x);
std::pair<DTensor, DTensor> channel_moments(const DTensor& x, double eps);
DTensor add(const DTensor& a, const DTensor& b);
DTensor sub(const DTensor& a, const DTensor& b);
DTensor mul(const DTensor& a, const DTensor& b);
DTensor divide(const DTensor& a, const DTensor& b);
DTensor add_scalar(const DTensor& a, double s);
DTensor mul_scalar(const DTensor& a, double s);
DTensor add_channel(const DTensor& x, const DTensor& s);
DTensor sub_channel(const DTensor& x, const DTensor& s);
DTensor mul_channel(const DTensor& x, const DTensor& s);
DTensor div_channel(const DTensor& x, const DTensor& s);
double sum_all(const DTensor& a);
double mean_all(const DTensor& a);
DTensor gram(const DTensor& f);
DTensor adain(const DTensor& content, const DTensor& style, double eps = 1e-5);
double ssim(const DTensor& x, const DTensor& y);

using ParamMap = std::map<std::string, DTensor>;
ParamMap mirror_params(const ModelParams& params);
DTensor stylize(const DTensor& content, const DTensor& style, const ParamMap& params,
                AggregationStrategy strategy);

/// Mirrored loss-network weights (no input preprocessing; the checker
/// only uses seeded-random networks).
struct Phi {
    std::vector<std::pair<DTensor, DTensor>> layers;
};
Phi mirror_phi(const LossNetwork& net);
std::map<TapId, DTensor> extract(const Phi& phi, const DTensor& image);

double total_loss(const DTensor& output, const DTensor& content, const Phi& phi,
                  const DTensor& target_feat, const std::map<TapId, DTensor>& target_grams,
                  const LossWeights& weights);

/// Replays a recorded forward's relu/maxpool decisions (per thread, in
/// encounter order) instead of re-deciding from the perturbed values, so
/// the analytic gradient and the difference quotient see the same linear
/// piece. Pass nullptr to go back to value-based decisions; the cursor
/// rewinds every time this is called.
void use_trace(const ops::BranchTrace* trace);

}  // namespace umfa::ref

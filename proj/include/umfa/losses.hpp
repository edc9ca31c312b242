#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "umfa/loss_network.hpp"
#include "umfa/tensor.hpp"

namespace umfa {

/// Weights of the total training objective
/// total = alpha * style + beta * content + gamma * (1 - ssim).
struct LossWeights {
    float alpha = 0.8f;  // style
    float beta = 1.0f;   // content
    float gamma = 1.0f;  // ssim
};

struct LossReport {
    double total = 0.0;
    double style = 0.0;
    double content = 0.0;
    double ssim = 0.0;  // the loss term 1 - SSIM(O, C)
    std::map<std::string, double> per_tap;
};

/// Loss-network activations of the two reference images, precomputed once
/// so the trainer does not rerun the frozen extractor every step.
struct PerceptualTargets {
    TensorPtr content_feat;                 // relu2_2 of the content image
    std::map<TapId, TensorPtr> style_grams; // Gram matrices of the style taps
};

PerceptualTargets make_targets(const TensorPtr& content, const TensorPtr& style,
                               const LossNetwork& phi);

/// Normalized squared feature distance at relu2_2.
TensorPtr content_loss(Tape& tape, const TensorPtr& output, const TensorPtr& content,
                       const LossNetwork& phi);
TensorPtr content_loss_to_target(Tape& tape, const TensorPtr& output, const LossNetwork& phi,
                                 const TensorPtr& target_feat);

/// Sum over the four taps of the normalized squared Gram distance.
/// Also returns the per-tap terms.
std::pair<TensorPtr, std::map<TapId, double>> style_loss(Tape& tape, const TensorPtr& output,
                                                         const TensorPtr& style,
                                                         const LossNetwork& phi);
std::pair<TensorPtr, std::map<TapId, double>> style_loss_to_targets(
    Tape& tape, const TensorPtr& output, const LossNetwork& phi,
    const std::map<TapId, TensorPtr>& target_grams);

/// One style term on raw features: (1 / (C*H*W)) * ||G(a) - G(b)||^2,
/// normalized by a's dims.
TensorPtr style_term_on_features(Tape& tape, const TensorPtr& feat_a,
                                 const TensorPtr& feat_b);

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5, K1 0.01,
/// K2 0.03, L 1), per channel, valid region only. Differentiable.
TensorPtr ssim(Tape& tape, const TensorPtr& x, const TensorPtr& y);

/// Convenience scalar evaluation without a recording tape.
double ssim_value(const TensorPtr& x, const TensorPtr& y);

/// The 11x11 Gaussian window used by ssim (float weights summing to 1).
const std::vector<float>& ssim_window();

/// Weighted total: alpha*style + beta*content + gamma*(1 - ssim(O, C)).
std::pair<TensorPtr, LossReport> total_loss(Tape& tape, const TensorPtr& output,
                                            const TensorPtr& content, const TensorPtr& style,
                                            const LossNetwork& phi, const LossWeights& weights);
std::pair<TensorPtr, LossReport> total_loss_with_targets(Tape& tape, const TensorPtr& output,
                                                         const TensorPtr& content,
                                                         const PerceptualTargets& targets,
                                                         const LossNetwork& phi,
                                                         const LossWeights& weights);

}  // namespace umfa

#include "umfa/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "umfa/ops.hpp"

namespace umfa {

using namespace ops;

namespace {

constexpr int kWindow = 11;
constexpr float kSigma = 1.5f;
constexpr float kC1 = 0.01f * 0.01f;  // (K1*L)^2, L = 1
constexpr float kC2 = 0.03f * 0.03f;

// 11x11 Gaussian, normalized so the float weights sum to 1 within a few
// ulps (the center weight absorbs the normalization residual; constant
// images then give exactly zero local variance).
const std::vector<float>& gaussian_window() {
    static const std::vector<float> win = [] {
        std::vector<double> raw(kWindow * kWindow);
        double total = 0.0;
        const int half = kWindow / 2;
        for (int y = 0; y < kWindow; ++y) {
            for (int x = 0; x < kWindow; ++x) {
                const double dy = y - half;
                const double dx = x - half;
                raw[y * kWindow + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                total += raw[y * kWindow + x];
            }
        }
        std::vector<float> w(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) {
            w[i] = static_cast<float>(raw[i] / total);
        }
        double s = 0.0;
        for (float v : w) s += v;
        const int center = half * kWindow + half;
        w[center] = static_cast<float>(w[center] - (s - 1.0));
        return w;
    }();
    return win;
}

}  // namespace

const std::vector<float>& ssim_window() { return gaussian_window(); }

namespace {

double tap_norm(const Shape& s) {
    return static_cast<double>(s.c) * s.h * s.w;
}

TensorPtr squared_distance(Tape& tape, const TensorPtr& a, const TensorPtr& b, double norm) {
    auto d = sub(tape, a, b);
    return mul_scalar(tape, sum_all(tape, mul(tape, d, d)), static_cast<float>(1.0 / norm));
}

}  // namespace

PerceptualTargets make_targets(const TensorPtr& content, const TensorPtr& style,
                               const LossNetwork& phi) {
    Tape t = Tape::inference();
    PerceptualTargets targets;
    targets.content_feat = phi.extract(t, content, {TapId::relu2_2}).at(TapId::relu2_2);
    auto style_feats = phi.extract(t, style, {all_taps().begin(), all_taps().end()});
    for (const auto& [tap, feat] : style_feats) {
        targets.style_grams[tap] = gram(t, feat);
    }
    return targets;
}

TensorPtr content_loss_to_target(Tape& tape, const TensorPtr& output, const LossNetwork& phi,
                                 const TensorPtr& target_feat) {
    auto feat = phi.extract(tape, output, {TapId::relu2_2}).at(TapId::relu2_2);
    if (!(feat->shape == target_feat->shape)) {
        throw std::invalid_argument("content_loss: feature shape " + feat->shape.str() +
                                    " does not match target " + target_feat->shape.str());
    }
    return squared_distance(tape, feat, target_feat, tap_norm(feat->shape));
}

TensorPtr content_loss(Tape& tape, const TensorPtr& output, const TensorPtr& content,
                       const LossNetwork& phi) {
    if (!(output->shape == content->shape)) {
        throw std::invalid_argument("content_loss: output " + output->shape.str() +
                                    " and content " + content->shape.str() + " differ");
    }
    Tape t = Tape::inference();
    auto target = phi.extract(t, content, {TapId::relu2_2}).at(TapId::relu2_2);
    return content_loss_to_target(tape, output, phi, target);
}

namespace {

std::pair<TensorPtr, std::map<TapId, double>> style_terms_from_feats(
    Tape& tape, const std::map<TapId, TensorPtr>& feats,
    const std::map<TapId, TensorPtr>& target_grams) {
    TensorPtr total;
    std::map<TapId, double> per_tap;
    for (TapId tap : all_taps()) {
        const auto& feat = feats.at(tap);
        const auto& target = target_grams.at(tap);
        auto g = gram(tape, feat);
        if (!(g->shape == target->shape)) {
            throw std::invalid_argument("style_loss: Gram shape " + g->shape.str() +
                                        " at " + to_string(tap) + " does not match target " +
                                        target->shape.str());
        }
        auto term = squared_distance(tape, g, target, tap_norm(feat->shape));
        per_tap[tap] = term->data[0];
        total = total ? add(tape, total, term) : term;
    }
    return {total, per_tap};
}

}  // namespace

std::pair<TensorPtr, std::map<TapId, double>> style_loss_to_targets(
    Tape& tape, const TensorPtr& output, const LossNetwork& phi,
    const std::map<TapId, TensorPtr>& target_grams) {
    auto feats = phi.extract(tape, output, {all_taps().begin(), all_taps().end()});
    return style_terms_from_feats(tape, feats, target_grams);
}

std::pair<TensorPtr, std::map<TapId, double>> style_loss(Tape& tape, const TensorPtr& output,
                                                         const TensorPtr& style,
                                                         const LossNetwork& phi) {
    Tape t = Tape::inference();
    auto style_feats = phi.extract(t, style, {all_taps().begin(), all_taps().end()});
    std::map<TapId, TensorPtr> target_grams;
    for (const auto& [tap, feat] : style_feats) target_grams[tap] = gram(t, feat);
    return style_loss_to_targets(tape, output, phi, target_grams);
}

TensorPtr style_term_on_features(Tape& tape, const TensorPtr& feat_a,
                                 const TensorPtr& feat_b) {
    auto ga = gram(tape, feat_a);
    auto gb = gram(tape, feat_b);
    if (!(ga->shape == gb->shape)) {
        throw std::invalid_argument("style term: Gram shapes differ, " + ga->shape.str() +
                                    " vs " + gb->shape.str());
    }
    return squared_distance(tape, ga, gb, tap_norm(feat_a->shape));
}

TensorPtr ssim(Tape& tape, const TensorPtr& x, const TensorPtr& y) {
    if (!(x->shape == y->shape)) {
        throw std::invalid_argument("ssim: shape mismatch " + x->shape.str() + " vs " +
                                    y->shape.str());
    }
    if (x->shape.h < kWindow || x->shape.w < kWindow) {
        throw std::invalid_argument("ssim: image " + x->shape.str() + " smaller than the " +
                                    std::to_string(kWindow) + "x" + std::to_string(kWindow) +
                                    " window");
    }
    const auto& win = gaussian_window();
    auto g = [&](const TensorPtr& t) { return conv2d_depthwise(tape, t, win, kWindow); };

    auto mu_x = g(x);
    auto mu_y = g(y);
    auto mu_xx = mul(tape, mu_x, mu_x);
    auto mu_yy = mul(tape, mu_y, mu_y);
    auto mu_xy = mul(tape, mu_x, mu_y);
    auto sigma_x = sub(tape, g(mul(tape, x, x)), mu_xx);
    auto sigma_y = sub(tape, g(mul(tape, y, y)), mu_yy);
    auto sigma_xy = sub(tape, g(mul(tape, x, y)), mu_xy);

    auto num = mul(tape, add_scalar(tape, mul_scalar(tape, mu_xy, 2.0f), kC1),
                   add_scalar(tape, mul_scalar(tape, sigma_xy, 2.0f), kC2));
    auto den = mul(tape, add_scalar(tape, add(tape, mu_xx, mu_yy), kC1),
                   add_scalar(tape, add(tape, sigma_x, sigma_y), kC2));
    return mean_all(tape, div(tape, num, den));
}

double ssim_value(const TensorPtr& x, const TensorPtr& y) {
    Tape t = Tape::inference();
    return ssim(t, x, y)->data[0];
}

std::pair<TensorPtr, LossReport> total_loss_with_targets(Tape& tape, const TensorPtr& output,
                                                         const TensorPtr& content,
                                                         const PerceptualTargets& targets,
                                                         const LossNetwork& phi,
                                                         const LossWeights& weights) {
    // One pass through the loss network covers content and style taps.
    auto feats = phi.extract(tape, output, {all_taps().begin(), all_taps().end()});
    auto [style_t, per_tap] = style_terms_from_feats(tape, feats, targets.style_grams);

    const auto& feat = feats.at(TapId::relu2_2);
    if (!(feat->shape == targets.content_feat->shape)) {
        throw std::invalid_argument("content_loss: feature shape " + feat->shape.str() +
                                    " does not match target " +
                                    targets.content_feat->shape.str());
    }
    auto content_t = squared_distance(tape, feat, targets.content_feat, tap_norm(feat->shape));

    auto ssim_t = ssim(tape, output, content);
    auto ssim_loss = add_scalar(tape, mul_scalar(tape, ssim_t, -1.0f), 1.0f);

    auto total = add(tape,
                     add(tape, mul_scalar(tape, style_t, weights.alpha),
                         mul_scalar(tape, content_t, weights.beta)),
                     mul_scalar(tape, ssim_loss, weights.gamma));

    LossReport report;
    report.total = total->data[0];
    report.style = style_t->data[0];
    report.content = content_t->data[0];
    report.ssim = ssim_loss->data[0];
    for (const auto& [tap, v] : per_tap) report.per_tap[to_string(tap)] = v;
    return {total, report};
}

std::pair<TensorPtr, LossReport> total_loss(Tape& tape, const TensorPtr& output,
                                            const TensorPtr& content, const TensorPtr& style,
                                            const LossNetwork& phi,
                                            const LossWeights& weights) {
    return total_loss_with_targets(tape, output, content, make_targets(content, style, phi),
                                   phi, weights);
}

}  // namespace umfa

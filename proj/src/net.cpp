#include "umfa/net.hpp"

#include <cmath>
#include <stdexcept>

#include "umfa/rng.hpp"

namespace umfa {

using namespace ops;

AggregationStrategy parse_strategy(const std::string& token) {
    if (token == "none") return AggregationStrategy::None;
    if (token == "bfa") return AggregationStrategy::BFA;
    if (token == "mfa") return AggregationStrategy::MFA;
    throw std::invalid_argument("unknown aggregation strategy '" + token +
                                "' (expected one of: mfa, bfa, none)");
}

std::string to_string(AggregationStrategy s) {
    switch (s) {
        case AggregationStrategy::None: return "none";
        case AggregationStrategy::BFA: return "bfa";
        case AggregationStrategy::MFA: return "mfa";
    }
    return "mfa";
}

std::vector<std::pair<std::string, Shape>> ModelParams::layout(int stem_width) {
    if (stem_width < 1) throw std::invalid_argument("stem width must be >= 1");
    const int c0 = stem_width;
    auto ch = [c0](int k) { return c0 << k; };
    std::vector<std::pair<std::string, Shape>> out;
    auto conv = [&out](const std::string& name, int c_out, int c_in, int k) {
        out.emplace_back(name + ".weight", Shape{c_out, c_in, k, k});
        out.emplace_back(name + ".bias", Shape{1, c_out, 1, 1});
    };

    conv("stem", c0, 3, 3);
    for (int k = 1; k <= 4; ++k) {
        const int d = ch(k - 1);
        conv("ddb" + std::to_string(k) + ".dense.conv1", d, d, 3);
        conv("ddb" + std::to_string(k) + ".dense.conv2", d, 2 * d, 3);
        conv("ddb" + std::to_string(k) + ".dense.conv3", d, 3 * d, 3);
        conv("ddb" + std::to_string(k) + ".reduce1", ch(k), 4 * d, 1);
        conv("ddb" + std::to_string(k) + ".reduce2", ch(k), ch(k), 1);
    }
    for (int k = 1; k <= 4; ++k) {
        conv("mfa.fuse" + std::to_string(k), ch(k), ch(k - 1) + ch(k), 1);
    }
    conv("bfa.fuse", ch(4), ch(0) + ch(1) + ch(2) + ch(3) + ch(4), 1);
    for (int k = 3; k >= 0; --k) {
        conv("ucb" + std::to_string(k) + ".conv1", ch(k), ch(k + 1), 3);
        conv("ucb" + std::to_string(k) + ".conv2", ch(k), 2 * ch(k), 1);
        conv("ucb" + std::to_string(k) + ".conv3", ch(k), ch(k), 3);
    }
    conv("out", 3, c0, 3);
    return out;
}

ModelParams ModelParams::init(int stem_width, std::uint64_t seed) {
    ModelParams p;
    p.stem_width_ = stem_width;
    Rng rng(seed);
    for (const auto& [name, shape] : layout(stem_width)) {
        auto t = Tensor::zeros(shape, /*requires_grad=*/true);
        if (name.ends_with(".weight")) {
            const float fan_in = static_cast<float>(shape.c) * shape.h * shape.w;
            const float bound = std::sqrt(6.0f / fan_in);
            for (auto& v : t->data) v = rng.uniform(-bound, bound);
        }
        p.items_.emplace_back(name, std::move(t));
    }
    return p;
}

const TensorPtr& ModelParams::at(const std::string& name) const {
    for (const auto& [n, t] : items_) {
        if (n == name) return t;
    }
    throw std::invalid_argument("unknown parameter '" + name + "'");
}

std::vector<TensorPtr> ModelParams::tensors() const {
    std::vector<TensorPtr> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(t);
    return out;
}

namespace {

TensorPtr conv_layer(Tape& tape, const TensorPtr& x, const ModelParams& p,
                     const std::string& name) {
    const auto& w = p.at(name + ".weight");
    const int pad = w->shape.h == 3 ? 1 : 0;
    return conv2d(tape, x, w, p.at(name + ".bias"), 1, pad);
}

TensorPtr conv_relu(Tape& tape, const TensorPtr& x, const ModelParams& p,
                    const std::string& name) {
    return relu(tape, conv_layer(tape, x, p, name));
}

}  // namespace

TensorPtr dense_block(Tape& tape, const TensorPtr& input, const ModelParams& params,
                      const std::string& prefix) {
    auto out1 = conv_relu(tape, input, params, prefix + ".conv1");
    auto out2 = conv_relu(tape, concat_channels(tape, input, out1), params, prefix + ".conv2");
    auto out3 = conv_relu(tape, concat_channels(tape, {input, out1, out2}), params,
                          prefix + ".conv3");
    return concat_channels(tape, {input, out1, out2, out3});
}

TensorPtr ddb(Tape& tape, const TensorPtr& input, const ModelParams& params, int k) {
    const std::string base = "ddb" + std::to_string(k);
    auto x = maxpool2d(tape, input);
    x = dense_block(tape, x, params, base + ".dense");
    x = conv_relu(tape, x, params, base + ".reduce1");
    return conv_relu(tape, x, params, base + ".reduce2");
}

FeaturePyramid encode(Tape& tape, const TensorPtr& image, const ModelParams& params) {
    const Shape& s = image->shape;
    if (s.c != 3) {
        throw std::invalid_argument("encode: expected a 3-channel image, got " + s.str());
    }
    if (s.h % 16 != 0 || s.w % 16 != 0) {
        const int ph = (s.h + 15) / 16 * 16;
        const int pw = (s.w + 15) / 16 * 16;
        throw std::invalid_argument("encode: spatial dims of " + s.str() +
                                    " are not divisible by 16; pad to " + std::to_string(ph) +
                                    "x" + std::to_string(pw));
    }
    FeaturePyramid pyr;
    pyr.levels[0] = conv_relu(tape, image, params, "stem");
    for (int k = 1; k <= 4; ++k) pyr.levels[k] = ddb(tape, pyr.levels[k - 1], params, k);
    return pyr;
}

FeaturePyramid mfa_aggregate(Tape& tape, const FeaturePyramid& pyramid,
                             const ModelParams& params, AggregationStrategy strategy) {
    FeaturePyramid out = pyramid;
    switch (strategy) {
        case AggregationStrategy::None:
            break;
        case AggregationStrategy::MFA:
            for (int k = 1; k <= 4; ++k) {
                auto prev = maxpool2d(tape, out.levels[k - 1]);
                auto cat = concat_channels(tape, prev, pyramid.levels[k]);
                out.levels[k] = conv_relu(tape, cat, params, "mfa.fuse" + std::to_string(k));
            }
            break;
        case AggregationStrategy::BFA: {
            std::vector<TensorPtr> pooled;
            for (int k = 0; k < 4; ++k) {
                auto x = pyramid.levels[k];
                for (int p = 0; p < 4 - k; ++p) x = maxpool2d(tape, x);
                pooled.push_back(x);
            }
            pooled.push_back(pyramid.levels[4]);
            out.levels[4] =
                conv_relu(tape, concat_channels(tape, pooled), params, "bfa.fuse");
            break;
        }
    }
    return out;
}

TensorPtr adain(Tape& tape, const TensorPtr& content_feat, const TensorPtr& style_feat,
                float eps) {
    if (content_feat->shape.c != style_feat->shape.c ||
        content_feat->shape.n != style_feat->shape.n) {
        throw std::invalid_argument("adain: content " + content_feat->shape.str() +
                                    " and style " + style_feat->shape.str() +
                                    " disagree on batch/channel dims");
    }
    auto [mc, sc] = channel_moments(tape, content_feat, eps);
    auto [ms, ss] = channel_moments(tape, style_feat, eps);
    auto normalized = div_channel(tape, sub_channel(tape, content_feat, mc), sc);
    return add_channel(tape, mul_channel(tape, normalized, ss), ms);
}

FeaturePyramid transfer(Tape& tape, const FeaturePyramid& content_pyr,
                        const FeaturePyramid& style_pyr, const ModelParams& params,
                        AggregationStrategy strategy) {
    auto agg_c = mfa_aggregate(tape, content_pyr, params, strategy);
    auto agg_s = mfa_aggregate(tape, style_pyr, params, strategy);
    FeaturePyramid out;
    for (int k = 0; k < 5; ++k) out.levels[k] = adain(tape, agg_c.levels[k], agg_s.levels[k]);
    return out;
}

TensorPtr ucb(Tape& tape, const TensorPtr& up_input, const TensorPtr& skip_feat,
              const ModelParams& params, int k) {
    const std::string base = "ucb" + std::to_string(k);
    auto x = upsample_nearest(tape, up_input);
    if (x->shape.h != skip_feat->shape.h || x->shape.w != skip_feat->shape.w) {
        throw std::invalid_argument("ucb: upsampled input " + x->shape.str() +
                                    " does not spatially match skip feature " +
                                    skip_feat->shape.str());
    }
    x = conv_relu(tape, x, params, base + ".conv1");
    x = concat_channels(tape, x, skip_feat);
    x = conv_relu(tape, x, params, base + ".conv2");
    return conv_relu(tape, x, params, base + ".conv3");
}

TensorPtr decode(Tape& tape, const FeaturePyramid& stylized, const ModelParams& params) {
    auto x = stylized.levels[4];
    for (int k = 3; k >= 0; --k) x = ucb(tape, x, stylized.levels[k], params, k);
    return sigmoid(tape, conv_layer(tape, x, params, "out"));
}

TensorPtr stylize(Tape& tape, const TensorPtr& content, const TensorPtr& style,
                  const ModelParams& params, AggregationStrategy strategy) {
    auto content_pyr = encode(tape, content, params);
    auto style_pyr = encode(tape, style, params);
    return decode(tape, transfer(tape, content_pyr, style_pyr, params, strategy), params);
}

}  // namespace umfa

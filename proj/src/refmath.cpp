#include "umfa/refmath.hpp"

#include <cmath>
#include <stdexcept>

namespace umfa::ref {

namespace {

thread_local const ops::BranchTrace* g_trace = nullptr;
thread_local std::size_t g_relu_cursor = 0;
thread_local std::size_t g_pool_cursor = 0;

}  // namespace

void use_trace(const ops::BranchTrace* trace) {
    g_trace = trace;
    g_relu_cursor = 0;
    g_pool_cursor = 0;
}

DTensor zeros(const Shape& s) {
    DTensor t;
    t.shape = s;
    t.data.assign(s.numel(), 0.0);
    return t;
}

DTensor mirror(const TensorPtr& t) {
    DTensor d;
    d.shape = t->shape;
    d.data.assign(t->data.begin(), t->data.end());
    return d;
}

DTensor conv2d(const DTensor& x, const DTensor& w, const DTensor& b, int stride, int padding) {
    const Shape& xs = x.shape;
    const Shape& ws = w.shape;
    const int k = ws.h;
    const int oh = (xs.h + 2 * padding - k) / stride + 1;
    const int ow = (xs.w + 2 * padding - k) / stride + 1;
    auto out = zeros({xs.n, ws.n, oh, ow});
    for (int in = 0; in < xs.n; ++in) {
        for (int co = 0; co < ws.n; ++co) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double s = b.data[co];
                    for (int ci = 0; ci < xs.c; ++ci) {
                        for (int kh = 0; kh < k; ++kh) {
                            const int iy = oy * stride - padding + kh;
                            if (iy < 0 || iy >= xs.h) continue;
                            for (int kw = 0; kw < k; ++kw) {
                                const int ix = ox * stride - padding + kw;
                                if (ix < 0 || ix >= xs.w) continue;
                                s += w.data[w.index(co, ci, kh, kw)] *
                                     x.data[x.index(in, ci, iy, ix)];
                            }
                        }
                    }
                    out.data[out.index(in, co, oy, ox)] = s;
                }
            }
        }
    }
    return out;
}

DTensor depthwise(const DTensor& x, const std::vector<double>& kernel, int k) {
    const Shape& xs = x.shape;
    const int oh = xs.h - k + 1;
    const int ow = xs.w - k + 1;
    auto out = zeros({xs.n, xs.c, oh, ow});
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    for (int kh = 0; kh < k; ++kh) {
                        for (int kw = 0; kw < k; ++kw) {
                            s += kernel[kh * k + kw] * x.data[x.index(in, ci, oy + kh, ox + kw)];
                        }
                    }
                    out.data[out.index(in, ci, oy, ox)] = s;
                }
            }
        }
    }
    return out;
}

DTensor maxpool2d(const DTensor& x) {
    const Shape& xs = x.shape;
    auto out = zeros({xs.n, xs.c, xs.h / 2, xs.w / 2});
    if (g_trace) {
        if (g_pool_cursor >= g_trace->pool_argmax.size()) {
            throw std::logic_error("branch trace: maxpool replay out of steps");
        }
        const auto& args = g_trace->pool_argmax[g_pool_cursor++];
        if (args.size() != out.data.size()) {
            throw std::logic_error("branch trace: maxpool shape drifted from recording");
        }
        for (std::size_t i = 0; i < args.size(); ++i) out.data[i] = x.data[args[i]];
        return out;
    }
    std::size_t oi = 0;
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            for (int oy = 0; oy < xs.h / 2; ++oy) {
                for (int ox = 0; ox < xs.w / 2; ++ox) {
                    double best = x.data[x.index(in, ci, 2 * oy, 2 * ox)];
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            best = std::max(best,
                                            x.data[x.index(in, ci, 2 * oy + dy, 2 * ox + dx)]);
                        }
                    }
                    out.data[oi++] = best;
                }
            }
        }
    }
    return out;
}

DTensor upsample_nearest(const DTensor& x) {
    const Shape& xs = x.shape;
    auto out = zeros({xs.n, xs.c, 2 * xs.h, 2 * xs.w});
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            for (int iy = 0; iy < xs.h; ++iy) {
                for (int ix = 0; ix < xs.w; ++ix) {
                    const double v = x.data[x.index(in, ci, iy, ix)];
                    out.data[out.index(in, ci, 2 * iy, 2 * ix)] = v;
                    out.data[out.index(in, ci, 2 * iy, 2 * ix + 1)] = v;
                    out.data[out.index(in, ci, 2 * iy + 1, 2 * ix)] = v;
                    out.data[out.index(in, ci, 2 * iy + 1, 2 * ix + 1)] = v;
                }
            }
        }
    }
    return out;
}

DTensor concat_channels(const std::vector<DTensor>& xs) {
    const Shape& s0 = xs.front().shape;
    int c_total = 0;
    for (const auto& t : xs) c_total += t.shape.c;
    auto out = zeros({s0.n, c_total, s0.h, s0.w});
    const std::size_t plane = static_cast<std::size_t>(s0.h) * s0.w;
    for (int in = 0; in < s0.n; ++in) {
        std::size_t co = 0;
        for (const auto& t : xs) {
            const std::size_t len = static_cast<std::size_t>(t.shape.c) * plane;
            std::copy_n(t.data.begin() + t.index(in, 0, 0, 0), len,
                        out.data.begin() + out.index(in, static_cast<int>(co), 0, 0));
            co += t.shape.c;
        }
    }
    return out;
}

DTensor relu(const DTensor& x) {
    DTensor out = x;
    if (g_trace) {
        if (g_relu_cursor >= g_trace->relu_masks.size()) {
            throw std::logic_error("branch trace: relu replay out of steps");
        }
        const auto& mask = g_trace->relu_masks[g_relu_cursor++];
        if (mask.size() != out.data.size()) {
            throw std::logic_error("branch trace: relu shape drifted from recording");
        }
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) out.data[i] = 0.0;
        }
        return out;
    }
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

DTensor sigmoid(const DTensor& x) {
    DTensor out = x;
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return out;
}

std::pair<DTensor, DTensor> channel_moments(const DTensor& x, double eps) {
    const Shape& xs = x.shape;
    const int hw = xs.h * xs.w;
    auto mean = zeros({xs.n, xs.c, 1, 1});
    auto stdev = zeros({xs.n, xs.c, 1, 1});
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            const double* p = x.data.data() + x.index(in, ci, 0, 0);
            double s = 0.0;
            for (int i = 0; i < hw; ++i) s += p[i];
            const double mu = s / hw;
            double v = 0.0;
            for (int i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
            mean.data[mean.index(in, ci, 0, 0)] = mu;
            stdev.data[stdev.index(in, ci, 0, 0)] = std::sqrt(v / hw + eps);
        }
    }
    return {mean, stdev};
}

namespace {

template <typename F>
DTensor zip(const DTensor& a, const DTensor& b, F f) {
    DTensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(a.data[i], b.data[i]);
    return out;
}

template <typename F>
DTensor zip_channel(const DTensor& x, const DTensor& s, F f) {
    DTensor out = x;
    const int hw = x.shape.h * x.shape.w;
    for (int in = 0; in < x.shape.n; ++in) {
        for (int ci = 0; ci < x.shape.c; ++ci) {
            const double v = s.data[s.index(in, ci, 0, 0)];
            double* p = out.data.data() + out.index(in, ci, 0, 0);
            for (int i = 0; i < hw; ++i) p[i] = f(p[i], v);
        }
    }
    return out;
}

}  // namespace

DTensor add(const DTensor& a, const DTensor& b) {
    return zip(a, b, [](double x, double y) { return x + y; });
}
DTensor sub(const DTensor& a, const DTensor& b) {
    return zip(a, b, [](double x, double y) { return x - y; });
}
DTensor mul(const DTensor& a, const DTensor& b) {
    return zip(a, b, [](double x, double y) { return x * y; });
}
DTensor divide(const DTensor& a, const DTensor& b) {
    return zip(a, b, [](double x, double y) { return x / y; });
}

DTensor add_scalar(const DTensor& a, double s) {
    DTensor out = a;
    for (auto& v : out.data) v += s;
    return out;
}
DTensor mul_scalar(const DTensor& a, double s) {
    DTensor out = a;
    for (auto& v : out.data) v *= s;
    return out;
}

DTensor add_channel(const DTensor& x, const DTensor& s) {
    return zip_channel(x, s, [](double a, double b) { return a + b; });
}
DTensor sub_channel(const DTensor& x, const DTensor& s) {
    return zip_channel(x, s, [](double a, double b) { return a - b; });
}
DTensor mul_channel(const DTensor& x, const DTensor& s) {
    return zip_channel(x, s, [](double a, double b) { return a * b; });
}
DTensor div_channel(const DTensor& x, const DTensor& s) {
    return zip_channel(x, s, [](double a, double b) { return a / b; });
}

double sum_all(const DTensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    return s;
}

double mean_all(const DTensor& a) { return sum_all(a) / static_cast<double>(a.data.size()); }

DTensor gram(const DTensor& f) {
    const int c = f.shape.c;
    const int m = f.shape.h * f.shape.w;
    auto out = zeros({f.shape.n, 1, c, c});
    for (int in = 0; in < f.shape.n; ++in) {
        const double* base = f.data.data() + f.index(in, 0, 0, 0);
        double* g = out.data.data() + out.index(in, 0, 0, 0);
        for (int i = 0; i < c; ++i) {
            for (int j = i; j < c; ++j) {
                double s = 0.0;
                const double* fi = base + static_cast<std::size_t>(i) * m;
                const double* fj = base + static_cast<std::size_t>(j) * m;
                for (int t = 0; t < m; ++t) s += fi[t] * fj[t];
                g[i * c + j] = s;
                g[j * c + i] = s;
            }
        }
    }
    return out;
}

DTensor adain(const DTensor& content, const DTensor& style, double eps) {
    auto [mc, sc] = channel_moments(content, eps);
    auto [ms, ss] = channel_moments(style, eps);
    auto normalized = div_channel(sub_channel(content, mc), sc);
    return add_channel(mul_channel(normalized, ss), ms);
}

double ssim(const DTensor& x, const DTensor& y) {
    const auto& wf = ssim_window();
    const std::vector<double> win(wf.begin(), wf.end());
    constexpr int k = 11;
    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    auto g = [&](const DTensor& t) { return depthwise(t, win, k); };

    auto mu_x = g(x);
    auto mu_y = g(y);
    auto mu_xx = mul(mu_x, mu_x);
    auto mu_yy = mul(mu_y, mu_y);
    auto mu_xy = mul(mu_x, mu_y);
    auto sigma_x = sub(g(mul(x, x)), mu_xx);
    auto sigma_y = sub(g(mul(y, y)), mu_yy);
    auto sigma_xy = sub(g(mul(x, y)), mu_xy);

    auto num = mul(add_scalar(mul_scalar(mu_xy, 2.0), c1),
                   add_scalar(mul_scalar(sigma_xy, 2.0), c2));
    auto den = mul(add_scalar(add(mu_xx, mu_yy), c1),
                   add_scalar(add(sigma_x, sigma_y), c2));
    return mean_all(divide(num, den));
}

ParamMap mirror_params(const ModelParams& params) {
    ParamMap out;
    for (const auto& [name, tensor] : params.items()) out.emplace(name, mirror(tensor));
    return out;
}

namespace {

DTensor conv_layer(const DTensor& x, const ParamMap& p, const std::string& name) {
    const auto& w = p.at(name + ".weight");
    return conv2d(x, w, p.at(name + ".bias"), 1, w.shape.h == 3 ? 1 : 0);
}

DTensor conv_relu(const DTensor& x, const ParamMap& p, const std::string& name) {
    return relu(conv_layer(x, p, name));
}

DTensor dense_block(const DTensor& input, const ParamMap& p, const std::string& prefix) {
    auto out1 = conv_relu(input, p, prefix + ".conv1");
    auto out2 = conv_relu(concat_channels({input, out1}), p, prefix + ".conv2");
    auto out3 = conv_relu(concat_channels({input, out1, out2}), p, prefix + ".conv3");
    return concat_channels({input, out1, out2, out3});
}

DTensor ddb(const DTensor& input, const ParamMap& p, int k) {
    const std::string base = "ddb" + std::to_string(k);
    auto x = maxpool2d(input);
    x = dense_block(x, p, base + ".dense");
    x = conv_relu(x, p, base + ".reduce1");
    return conv_relu(x, p, base + ".reduce2");
}

std::array<DTensor, 5> encode(const DTensor& image, const ParamMap& p) {
    std::array<DTensor, 5> pyr;
    pyr[0] = conv_relu(image, p, "stem");
    for (int k = 1; k <= 4; ++k) pyr[k] = ddb(pyr[k - 1], p, k);
    return pyr;
}

std::array<DTensor, 5> aggregate(const std::array<DTensor, 5>& pyramid, const ParamMap& p,
                                 AggregationStrategy strategy) {
    std::array<DTensor, 5> out = pyramid;
    switch (strategy) {
        case AggregationStrategy::None:
            break;
        case AggregationStrategy::MFA:
            for (int k = 1; k <= 4; ++k) {
                auto prev = maxpool2d(out[k - 1]);
                out[k] = conv_relu(concat_channels({prev, pyramid[k]}), p,
                                   "mfa.fuse" + std::to_string(k));
            }
            break;
        case AggregationStrategy::BFA: {
            std::vector<DTensor> pooled;
            for (int k = 0; k < 4; ++k) {
                auto x = pyramid[k];
                for (int q = 0; q < 4 - k; ++q) x = maxpool2d(x);
                pooled.push_back(std::move(x));
            }
            pooled.push_back(pyramid[4]);
            out[4] = conv_relu(concat_channels(pooled), p, "bfa.fuse");
            break;
        }
    }
    return out;
}

DTensor ucb(const DTensor& up_input, const DTensor& skip, const ParamMap& p, int k) {
    const std::string base = "ucb" + std::to_string(k);
    auto x = conv_relu(upsample_nearest(up_input), p, base + ".conv1");
    x = conv_relu(concat_channels({x, skip}), p, base + ".conv2");
    return conv_relu(x, p, base + ".conv3");
}

}  // namespace

DTensor stylize(const DTensor& content, const DTensor& style, const ParamMap& params,
                AggregationStrategy strategy) {
    // Same op-encounter order as the float engine, so trace replay lines up.
    auto pyr_c = encode(content, params);
    auto pyr_s = encode(style, params);
    auto agg_c = aggregate(pyr_c, params, strategy);
    auto agg_s = aggregate(pyr_s, params, strategy);
    std::array<DTensor, 5> stylized;
    for (int k = 0; k < 5; ++k) stylized[k] = adain(agg_c[k], agg_s[k]);
    auto x = stylized[4];
    for (int k = 3; k >= 0; --k) x = ucb(x, stylized[k], params, k);
    return sigmoid(conv_layer(x, params, "out"));
}

Phi mirror_phi(const LossNetwork& net) {
    Phi phi;
    for (const auto& layer : net.layers()) {
        phi.layers.emplace_back(mirror(layer.weight), mirror(layer.bias));
    }
    return phi;
}

std::map<TapId, DTensor> extract(const Phi& phi, const DTensor& image) {
    std::map<TapId, DTensor> result;
    const int convs[4] = {2, 2, 3, 3};
    DTensor x = image;
    std::size_t li = 0;
    for (int b = 0; b < 4; ++b) {
        if (b > 0) x = maxpool2d(x);
        for (int j = 0; j < convs[b]; ++j, ++li) {
            x = relu(conv2d(x, phi.layers[li].first, phi.layers[li].second, 1, 1));
        }
        result[all_taps()[b]] = x;
    }
    return result;
}

namespace {

double tap_norm(const Shape& s) { return static_cast<double>(s.c) * s.h * s.w; }

// Matches the float engine, which multiplies by a float-rounded 1/norm.
double squared_distance(const DTensor& a, const DTensor& b, double norm) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s * static_cast<double>(static_cast<float>(1.0 / norm));
}

}  // namespace

double total_loss(const DTensor& output, const DTensor& content, const Phi& phi,
                  const DTensor& target_feat, const std::map<TapId, DTensor>& target_grams,
                  const LossWeights& weights) {
    auto feats = extract(phi, output);
    double style = 0.0;
    for (TapId tap : all_taps()) {
        const auto& feat = feats.at(tap);
        style += squared_distance(gram(feat), target_grams.at(tap), tap_norm(feat.shape));
    }
    const auto& feat = feats.at(TapId::relu2_2);
    const double content_term = squared_distance(feat, target_feat, tap_norm(feat.shape));
    const double ssim_loss = 1.0 - ssim(output, content);
    return weights.alpha * style + weights.beta * content_term + weights.gamma * ssim_loss;
}

}  // namespace umfa::ref

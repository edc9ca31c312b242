#include "umfa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "umfa/losses.hpp"
#include "umfa/net.hpp"
#include "umfa/ops.hpp"
#include "umfa/refmath.hpp"
#include "umfa/rng.hpp"

namespace umfa::gradcheck {

using namespace ops;

bool values_agree(double analytic, double fd) {
    const double diff = std::abs(analytic - fd);
    if (std::abs(analytic) < 1e-6) return diff < 1e-4;
    return diff < 1e-3 * std::max(std::abs(analytic), std::abs(fd));
}

namespace {

/// Rebuilds the float forward computation and returns the scalar loss.
using LossFn = std::function<TensorPtr(Tape&)>;
/// Same computation in the double reference engine over mirrored inputs.
using RefFn = std::function<double(const std::vector<ref::DTensor>&)>;

std::vector<std::vector<float>> analytic_grads(const LossFn& f,
                                               const std::vector<TensorPtr>& inputs) {
    for (const auto& t : inputs) t->zero_grad();
    Tape tape;
    auto loss = f(tape);
    tape.backward(loss);
    std::vector<std::vector<float>> grads;
    for (const auto& t : inputs) {
        t->ensure_grad();
        grads.push_back(t->grad);
    }
    return grads;
}

void check_elements(const std::string& label, const LossFn& f, const RefFn& fr,
                    const std::vector<TensorPtr>& inputs, Result& res, std::ostream& out,
                    double delta = 1e-3, int max_per_tensor = 0, std::uint64_t seed = 1) {
    const auto grads = analytic_grads(f, inputs);
    std::vector<ref::DTensor> mirrors;
    for (const auto& t : inputs) mirrors.push_back(ref::mirror(t));

    Rng rng(seed);
    int checks = 0, failures = 0;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& x = mirrors[ti];
        std::vector<std::size_t> indices(x.data.size());
        std::iota(indices.begin(), indices.end(), 0);
        if (max_per_tensor > 0 && indices.size() > static_cast<std::size_t>(max_per_tensor)) {
            for (std::size_t i = indices.size() - 1; i > 0; --i) {
                std::swap(indices[i], indices[rng.below(i + 1)]);
            }
            indices.resize(max_per_tensor);
        }
        for (std::size_t idx : indices) {
            const double saved = x.data[idx];
            x.data[idx] = saved + delta;
            const double lp = fr(mirrors);
            x.data[idx] = saved - delta;
            const double lm = fr(mirrors);
            x.data[idx] = saved;
            const double fd = (lp - lm) / (2.0 * delta);
            const double a = grads[ti][idx];
            ++checks;
            if (!values_agree(a, fd)) {
                ++failures;
                out << "  FAIL " << label << " input " << ti << " elem " << idx
                    << ": analytic " << a << " vs fd " << fd << "\n";
            }
        }
    }
    res.checks += checks;
    res.failures += failures;
    out << (failures ? "FAIL " : "ok   ") << label << " (" << checks << " elements)\n";
}

/// Directional check along the analytic gradient of one tensor: the full
/// mirror is perturbed by +-delta * g/|g| and the difference quotient is
/// compared against |g|.
void check_directional(const std::string& label, const LossFn& f, const TensorPtr& tensor,
                       ref::DTensor& mirror, const std::function<double()>& fr, Result& res,
                       std::ostream& out, double delta = 1e-3) {
    const auto grads = analytic_grads(f, {tensor});
    const auto& g = grads[0];
    double norm2 = 0.0;
    for (float v : g) norm2 += static_cast<double>(v) * v;
    const double norm = std::sqrt(norm2);

    std::vector<double> saved = mirror.data;
    std::vector<double> dir(g.size());
    if (norm > 1e-12) {
        for (std::size_t i = 0; i < g.size(); ++i) dir[i] = g[i] / norm;
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) dir[i] = 1.0 / std::sqrt(double(g.size()));
    }

    for (std::size_t i = 0; i < saved.size(); ++i) mirror.data[i] = saved[i] + delta * dir[i];
    const double lp = fr();
    for (std::size_t i = 0; i < saved.size(); ++i) mirror.data[i] = saved[i] - delta * dir[i];
    const double lm = fr();
    mirror.data = saved;

    const double fd = (lp - lm) / (2.0 * delta);
    const double analytic = norm > 1e-12 ? norm : 0.0;
    ++res.checks;
    const bool pass = values_agree(analytic, fd);
    if (!pass) ++res.failures;
    out << (pass ? "ok   " : "FAIL ") << label << " directional: analytic " << analytic
        << " vs fd " << fd << "\n";
}

TensorPtr random_tensor(const Shape& s, Rng& rng, float lo, float hi,
                        bool requires_grad = true) {
    auto t = Tensor::zeros(s, requires_grad);
    for (auto& v : t->data) v = rng.uniform(lo, hi);
    return t;
}

/// Random values kept away from zero so relu/maxpool subgradients are
/// well-defined at the probe points.
TensorPtr random_signed_tensor(const Shape& s, Rng& rng) {
    auto t = Tensor::zeros(s, true);
    for (auto& v : t->data) {
        const float m = rng.uniform(0.1f, 1.0f);
        v = rng.unit() < 0.5f ? -m : m;
    }
    return t;
}

/// Fixed random projection so the scalar loss has generic gradients.
TensorPtr projection_for(const Shape& s, Rng& rng) {
    return random_tensor(s, rng, 0.5f, 1.5f, /*requires_grad=*/false);
}

double dot(const ref::DTensor& a, const ref::DTensor& proj) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * proj.data[i];
    return s;
}

}  // namespace

Result run_gradient_suite(std::ostream& out) {
    Result res;
    Rng rng(20240817);
    const Shape small{1, 2, 4, 4};

    auto project = [&](Tape& tape, const TensorPtr& y, const TensorPtr& proj) {
        return sum_all(tape, mul(tape, y, proj));
    };

    {
        auto x = random_signed_tensor(small, rng);
        auto w = random_tensor({3, 2, 3, 3}, rng, -0.5f, 0.5f);
        auto b = random_tensor({1, 3, 1, 1}, rng, -0.2f, 0.2f);
        auto proj = projection_for({1, 3, 4, 4}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("conv2d 3x3 s1 p1", [&](Tape& t) {
            return project(t, conv2d(t, x, w, b, 1, 1), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::conv2d(in[0], in[1], in[2], 1, 1), proj_d);
        }, {x, w, b}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        auto w = random_tensor({3, 2, 1, 1}, rng, -0.5f, 0.5f);
        auto b = random_tensor({1, 3, 1, 1}, rng, -0.2f, 0.2f);
        auto proj = projection_for({1, 3, 4, 4}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("conv2d 1x1 s1 p0", [&](Tape& t) {
            return project(t, conv2d(t, x, w, b, 1, 0), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::conv2d(in[0], in[1], in[2], 1, 0), proj_d);
        }, {x, w, b}, res, out);
    }
    {
        auto x = random_signed_tensor({1, 2, 6, 6}, rng);
        auto w = random_tensor({2, 2, 3, 3}, rng, -0.5f, 0.5f);
        auto b = random_tensor({1, 2, 1, 1}, rng, -0.2f, 0.2f);
        auto proj = projection_for({1, 2, 3, 3}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("conv2d 3x3 s2 p1", [&](Tape& t) {
            return project(t, conv2d(t, x, w, b, 2, 1), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::conv2d(in[0], in[1], in[2], 2, 1), proj_d);
        }, {x, w, b}, res, out);
    }
    {
        auto x = random_tensor(small, rng, 0.0f, 1.0f);
        std::vector<float> kern = {0.1f, 0.2f, 0.1f, 0.2f, 0.4f, 0.2f, 0.1f, 0.2f, 0.1f};
        std::vector<double> kern_d(kern.begin(), kern.end());
        auto proj = projection_for({1, 2, 2, 2}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("conv2d_depthwise 3x3", [&](Tape& t) {
            return project(t, conv2d_depthwise(t, x, kern, 3), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::depthwise(in[0], kern_d, 3), proj_d);
        }, {x}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        auto proj = projection_for({1, 2, 2, 2}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("maxpool2d", [&](Tape& t) {
            return project(t, maxpool2d(t, x), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::maxpool2d(in[0]), proj_d);
        }, {x}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        auto proj = projection_for({1, 2, 8, 8}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("upsample_nearest", [&](Tape& t) {
            return project(t, upsample_nearest(t, x), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::upsample_nearest(in[0]), proj_d);
        }, {x}, res, out);
    }
    {
        auto a = random_signed_tensor(small, rng);
        auto b = random_signed_tensor({1, 3, 4, 4}, rng);
        auto proj = projection_for({1, 5, 4, 4}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("concat_channels", [&](Tape& t) {
            return project(t, concat_channels(t, a, b), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::concat_channels({in[0], in[1]}), proj_d);
        }, {a, b}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        auto proj = projection_for(small, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("relu", [&](Tape& t) { return project(t, relu(t, x), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::relu(in[0]), proj_d);
                       }, {x}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        auto proj = projection_for(small, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("sigmoid", [&](Tape& t) { return project(t, sigmoid(t, x), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::sigmoid(in[0]), proj_d);
                       }, {x}, res, out);
    }
    {
        auto x = random_tensor(small, rng, 0.0f, 1.0f);
        auto pm = projection_for({1, 2, 1, 1}, rng);
        auto ps = projection_for({1, 2, 1, 1}, rng);
        auto pm_d = ref::mirror(pm);
        auto ps_d = ref::mirror(ps);
        check_elements("channel_moments", [&](Tape& t) {
            auto [mean, stdev] = channel_moments(t, x, 1e-5f);
            return add(t, project(t, mean, pm), project(t, stdev, ps));
        }, [&](const std::vector<ref::DTensor>& in) {
            auto [mean, stdev] = ref::channel_moments(in[0], 1e-5);
            return dot(mean, pm_d) + dot(stdev, ps_d);
        }, {x}, res, out);
    }
    {
        auto a = random_signed_tensor(small, rng);
        auto b = random_tensor(small, rng, 0.5f, 1.5f);
        auto proj = projection_for(small, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("add", [&](Tape& t) { return project(t, add(t, a, b), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::add(in[0], in[1]), proj_d);
                       }, {a, b}, res, out);
        check_elements("sub", [&](Tape& t) { return project(t, sub(t, a, b), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::sub(in[0], in[1]), proj_d);
                       }, {a, b}, res, out);
        check_elements("mul", [&](Tape& t) { return project(t, mul(t, a, b), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::mul(in[0], in[1]), proj_d);
                       }, {a, b}, res, out);
        check_elements("div", [&](Tape& t) { return project(t, div(t, a, b), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::divide(in[0], in[1]), proj_d);
                       }, {a, b}, res, out);
        check_elements("add_scalar", [&](Tape& t) {
            return project(t, add_scalar(t, a, 0.7f), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::add_scalar(in[0], 0.7), proj_d);
        }, {a}, res, out);
        check_elements("mul_scalar", [&](Tape& t) {
            return project(t, mul_scalar(t, a, -1.3f), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::mul_scalar(in[0], -1.3f), proj_d);
        }, {a}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        auto s = random_tensor({1, 2, 1, 1}, rng, 0.5f, 1.5f);
        auto proj = projection_for(small, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("add_channel", [&](Tape& t) {
            return project(t, add_channel(t, x, s), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::add_channel(in[0], in[1]), proj_d);
        }, {x, s}, res, out);
        check_elements("sub_channel", [&](Tape& t) {
            return project(t, sub_channel(t, x, s), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::sub_channel(in[0], in[1]), proj_d);
        }, {x, s}, res, out);
        check_elements("mul_channel", [&](Tape& t) {
            return project(t, mul_channel(t, x, s), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::mul_channel(in[0], in[1]), proj_d);
        }, {x, s}, res, out);
        check_elements("div_channel", [&](Tape& t) {
            return project(t, div_channel(t, x, s), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::div_channel(in[0], in[1]), proj_d);
        }, {x, s}, res, out);
    }
    {
        auto x = random_signed_tensor(small, rng);
        check_elements("sum_all", [&](Tape& t) { return sum_all(t, x); },
                       [&](const std::vector<ref::DTensor>& in) { return ref::sum_all(in[0]); },
                       {x}, res, out);
        check_elements("mean_all", [&](Tape& t) { return mean_all(t, x); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return ref::mean_all(in[0]);
                       }, {x}, res, out);
    }
    {
        auto x = random_signed_tensor({1, 3, 2, 2}, rng);
        auto proj = projection_for({1, 1, 3, 3}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("gram", [&](Tape& t) { return project(t, gram(t, x), proj); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return dot(ref::gram(in[0]), proj_d);
                       }, {x}, res, out);
    }
    {
        auto content = random_tensor({1, 2, 4, 4}, rng, 0.0f, 1.0f);
        auto style = random_tensor({1, 2, 3, 3}, rng, 0.0f, 1.0f);
        auto proj = projection_for({1, 2, 4, 4}, rng);
        auto proj_d = ref::mirror(proj);
        check_elements("adain", [&](Tape& t) {
            return project(t, adain(t, content, style), proj);
        }, [&](const std::vector<ref::DTensor>& in) {
            return dot(ref::adain(in[0], in[1]), proj_d);
        }, {content, style}, res, out);
    }
    {
        auto x = random_tensor({1, 1, 12, 12}, rng, 0.0f, 1.0f);
        auto y = random_tensor({1, 1, 12, 12}, rng, 0.0f, 1.0f);
        check_elements("ssim", [&](Tape& t) { return ssim(t, x, y); },
                       [&](const std::vector<ref::DTensor>& in) {
                           return ref::ssim(in[0], in[1]);
                       }, {x, y}, res, out);
    }

    // Composite three-term loss on a width-4 toy model at 32x32.
    {
        const int size = 32;
        auto params = ModelParams::init(4, 7);
        auto phi = LossNetwork::seeded_random(7);
        auto content = random_tensor({1, 3, size, size}, rng, 0.0f, 1.0f,
                                     /*requires_grad=*/false);
        auto style = random_tensor({1, 3, size, size}, rng, 0.0f, 1.0f,
                                   /*requires_grad=*/false);
        const auto targets = make_targets(content, style, phi);
        const LossWeights weights;

        auto params_d = ref::mirror_params(params);
        const auto phi_d = ref::mirror_phi(phi);
        const auto content_d = ref::mirror(content);
        const auto style_d = ref::mirror(style);
        const auto target_feat_d = ref::mirror(targets.content_feat);
        std::map<TapId, ref::DTensor> target_grams_d;
        for (const auto& [tap, g] : targets.style_grams) target_grams_d[tap] = ref::mirror(g);

        auto loss_fn = [&](Tape& t) {
            auto output = stylize(t, content, style, params, AggregationStrategy::MFA);
            return total_loss_with_targets(t, output, content, targets, phi, weights).first;
        };
        ops::BranchTrace trace;
        ops::set_branch_recorder(&trace);
        {
            Tape t = Tape::inference();
            loss_fn(t);
        }
        ops::set_branch_recorder(nullptr);

        auto ref_loss = [&]() {
            ref::use_trace(&trace);
            auto output = ref::stylize(content_d, style_d, params_d, AggregationStrategy::MFA);
            const double v = ref::total_loss(output, content_d, phi_d, target_feat_d,
                                             target_grams_d, weights);
            ref::use_trace(nullptr);
            return v;
        };
        // The composite loss is strongly curved and full of relu kinks, so
        // these checks use a much smaller step than the per-op ones; the
        // double-precision reference keeps the quotient noise-free.
        const double composite_delta = 1e-6;
        for (const auto& [name, tensor] : params.items()) {
            check_directional("total_loss d/d " + name, loss_fn, tensor,
                              params_d.at(name), ref_loss, res, out, composite_delta);
        }

        // Gradient w.r.t. the generated image itself.
        auto output_leaf = random_tensor({1, 3, size, size}, rng, 0.05f, 0.95f);
        auto image_loss = [&](Tape& t) {
            return total_loss_with_targets(t, output_leaf, content, targets, phi, weights)
                .first;
        };
        ops::BranchTrace image_trace;
        ops::set_branch_recorder(&image_trace);
        {
            Tape t = Tape::inference();
            image_loss(t);
        }
        ops::set_branch_recorder(nullptr);

        check_elements("total_loss d/d output image", image_loss,
                       [&](const std::vector<ref::DTensor>& in) {
                           ref::use_trace(&image_trace);
                           const double v = ref::total_loss(in[0], content_d, phi_d,
                                                            target_feat_d, target_grams_d,
                                                            weights);
                           ref::use_trace(nullptr);
                           return v;
                       }, {output_leaf}, res, out, composite_delta, 12, 99);
    }

    out << "gradient suite: " << res.checks << " checks, " << res.failures << " failures\n";
    return res;
}

}  // namespace umfa::gradcheck

#include <cmath>
#include <numeric>

#include <doctest.h>

#include "umfa/loss_network.hpp"
#include "umfa/losses.hpp"
#include "umfa/rng.hpp"
#include "umfa/tensor.hpp"

using namespace umfa;

namespace {

TensorPtr random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    auto t = Tensor::zeros({1, 3, h, w});
    for (auto& v : t->data) v = rng.unit();
    return t;
}

}  // namespace

TEST_CASE("ssim window is normalized") {
    const auto& win = ssim_window();
    REQUIRE(win.size() == 121);
    double s = 0.0;
    for (float v : win) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    // Center weight dominates and the window is symmetric.
    CHECK(win[60] > win[0]);
    CHECK(win[0] == win[120]);
}

TEST_CASE("ssim of an image with itself is 1") {
    auto x = random_image(16, 16, 3);
    CHECK(ssim_value(x, x) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("ssim closed form on constant images") {
    auto a = Tensor::full({1, 3, 16, 16}, 0.2f);
    auto b = Tensor::full({1, 3, 16, 16}, 0.6f);
    const double c1 = 1e-4;
    const double want = (2.0 * 0.2 * 0.6 + c1) / (0.2 * 0.2 + 0.6 * 0.6 + c1);
    CHECK(ssim_value(a, b) == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("ssim is symmetric and below 1 for distinct images") {
    auto x = random_image(16, 16, 5);
    auto y = random_image(16, 16, 6);
    const double xy = ssim_value(x, y);
    const double yx = ssim_value(y, x);
    CHECK(xy == doctest::Approx(yx).epsilon(1e-9));
    CHECK(xy < 1.0);
}

TEST_CASE("loss identities at X == X") {
    auto phi = LossNetwork::seeded_random(11);
    auto x = random_image(16, 16, 7);
    Tape tape = Tape::inference();

    CHECK(content_loss(tape, x, x, phi)->data[0] == doctest::Approx(0.0).epsilon(1e-6));

    auto [style, per_tap] = style_loss(tape, x, x, phi);
    CHECK(style->data[0] == doctest::Approx(0.0).epsilon(1e-6));
    REQUIRE(per_tap.size() == 4);
    for (const auto& [tap, v] : per_tap) CHECK(v == doctest::Approx(0.0).epsilon(1e-6));

    auto [total, report] = total_loss(tape, x, x, x, phi, LossWeights{});
    CHECK(total->data[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(report.ssim == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("total loss report is internally consistent") {
    auto phi = LossNetwork::seeded_random(11);
    auto output = random_image(16, 16, 8);
    auto content = random_image(16, 16, 9);
    auto style = random_image(16, 16, 10);
    LossWeights w;
    w.alpha = 0.8f;
    w.beta = 1.0f;
    w.gamma = 1.0f;

    Tape tape = Tape::inference();
    auto [total, report] = total_loss(tape, output, content, style, phi, w);
    CHECK(report.total == doctest::Approx(total->data[0]).epsilon(1e-6));
    CHECK(report.total ==
          doctest::Approx(w.alpha * report.style + w.beta * report.content +
                          w.gamma * report.ssim)
              .epsilon(1e-5));

    double tap_sum = 0.0;
    for (const auto& [tap, v] : report.per_tap) tap_sum += v;
    CHECK(report.style == doctest::Approx(tap_sum).epsilon(1e-6));
    CHECK(report.ssim == doctest::Approx(1.0 - ssim_value(output, content)).epsilon(1e-6));
}

TEST_CASE("precomputed targets reproduce the direct losses") {
    auto phi = LossNetwork::seeded_random(11);
    auto output = random_image(16, 16, 12);
    auto content = random_image(16, 16, 13);
    auto style = random_image(16, 16, 14);

    auto targets = make_targets(content, style, phi);
    REQUIRE(targets.content_feat);
    REQUIRE(targets.style_grams.size() == 4);

    Tape tape = Tape::inference();
    auto direct_content = content_loss(tape, output, content, phi)->data[0];
    auto cached_content =
        content_loss_to_target(tape, output, phi, targets.content_feat)->data[0];
    CHECK(cached_content == doctest::Approx(direct_content).epsilon(1e-9));

    auto [direct_style, direct_taps] = style_loss(tape, output, style, phi);
    auto [cached_style, cached_taps] =
        style_loss_to_targets(tape, output, phi, targets.style_grams);
    CHECK(cached_style->data[0] == doctest::Approx(direct_style->data[0]).epsilon(1e-9));
    for (const auto& [tap, v] : direct_taps) {
        CHECK(cached_taps.at(tap) == doctest::Approx(v).epsilon(1e-9));
    }

    LossWeights w;
    auto [t1, r1] = total_loss(tape, output, content, style, phi, w);
    auto [t2, r2] = total_loss_with_targets(tape, output, content, targets, phi, w);
    CHECK(t2->data[0] == doctest::Approx(t1->data[0]).epsilon(1e-9));
}

TEST_CASE("style term on raw features normalizes by the first argument") {
    Tape tape = Tape::inference();
    Rng rng(40);
    auto a = Tensor::zeros({1, 2, 3, 3});
    auto b = Tensor::zeros({1, 2, 3, 3});
    for (auto& v : a->data) v = rng.unit();
    for (auto& v : b->data) v = rng.unit();

    // Independent double evaluation of (1 / (C*H*W)) * ||G(a) - G(b)||^2.
    auto gram_of = [](const TensorPtr& f) {
        std::vector<double> g(4, 0.0);
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                double s = 0.0;
                for (int m = 0; m < 9; ++m) {
                    s += static_cast<double>(f->data[i * 9 + m]) * f->data[j * 9 + m];
                }
                g[i * 2 + j] = s;
            }
        }
        return g;
    };
    const auto ga = gram_of(a);
    const auto gb = gram_of(b);
    double want = 0.0;
    for (int i = 0; i < 4; ++i) want += (ga[i] - gb[i]) * (ga[i] - gb[i]);
    want /= 2.0 * 3.0 * 3.0;

    auto got = style_term_on_features(tape, a, b);
    CHECK(got->data[0] == doctest::Approx(want).epsilon(1e-4));
}

TEST_CASE("weight defaults") {
    LossWeights w;
    CHECK(w.alpha == 0.8f);
    CHECK(w.beta == 1.0f);
    CHECK(w.gamma == 1.0f);
}

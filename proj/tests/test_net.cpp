#include <cmath>
#include <set>
#include <string>

#include <doctest.h>

#include "umfa/net.hpp"
#include "umfa/ops.hpp"
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

TEST_CASE("strategy names round-trip") {
    for (auto s : {AggregationStrategy::None, AggregationStrategy::BFA,
                   AggregationStrategy::MFA}) {
        CHECK(parse_strategy(to_string(s)) == s);
    }
    CHECK_THROWS(parse_strategy("bogus"));
}

TEST_CASE("params layout is unique and matches init") {
    const auto layout = ModelParams::layout(4);
    std::set<std::string> names;
    for (const auto& [name, shape] : layout) names.insert(name);
    CHECK(names.size() == layout.size());

    auto params = ModelParams::init(4, 123);
    REQUIRE(params.items().size() == layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        CHECK(params.items()[i].first == layout[i].first);
        CHECK(params.items()[i].second->shape == layout[i].second);
        CHECK(params.items()[i].second->requires_grad);
    }
    CHECK_THROWS(params.at("no.such.param"));

    auto again = ModelParams::init(4, 123);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        CHECK(again.items()[i].second->data == params.items()[i].second->data);
    }
}

TEST_CASE("encoder pyramid: doubling channels, halving spatial dims") {
    Tape tape = Tape::inference();
    auto params = ModelParams::init(4, 5);
    auto image = random_image(32, 48, 9);
    auto pyr = encode(tape, image, params);
    for (int k = 0; k < 5; ++k) {
        REQUIRE(pyr.levels[k]);
        const Shape& s = pyr.levels[k]->shape;
        CHECK(s.c == 4 * (1 << k));
        CHECK(s.h == 32 / (1 << k));
        CHECK(s.w == 48 / (1 << k));
    }
    CHECK_THROWS(encode(tape, random_image(24, 24, 9), params));
}

TEST_CASE("dense block quadruples channels at fixed resolution") {
    Tape tape = Tape::inference();
    auto params = ModelParams::init(4, 5);
    auto x = random_image(16, 16, 2);
    auto stem = ops::conv2d(tape, x, params.at("stem.weight"), params.at("stem.bias"), 1, 1);
    auto y = dense_block(tape, stem, params, "ddb1.dense");
    CHECK(y->shape == Shape{1, 16, 16, 16});
}

TEST_CASE("adain is identity on itself and matches target moments") {
    Tape tape = Tape::inference();
    Rng rng(31);
    auto f = Tensor::zeros({1, 6, 8, 8});
    for (auto& v : f->data) v = rng.uniform(-2.0f, 2.0f);

    auto same = adain(tape, f, f);
    for (std::size_t i = 0; i < f->numel(); ++i) {
        CHECK(same->data[i] == doctest::Approx(f->data[i]).epsilon(1e-5));
    }

    auto g = Tensor::zeros({1, 6, 4, 4});
    for (auto& v : g->data) v = rng.uniform(0.0f, 3.0f);
    auto out = adain(tape, f, g);
    REQUIRE(out->shape == f->shape);
    auto [om, os] = ops::channel_moments(tape, out, 1e-5f);
    auto [gm, gs] = ops::channel_moments(tape, g, 1e-5f);
    for (int c = 0; c < 6; ++c) {
        CHECK(om->data[c] == doctest::Approx(gm->data[c]).epsilon(1e-4));
        CHECK(os->data[c] == doctest::Approx(gs->data[c]).epsilon(1e-4));
    }
}

TEST_CASE("aggregation strategies: conv budget and shape preservation") {
    Tape tape = Tape::inference();
    auto params = ModelParams::init(4, 5);
    auto pyr = encode(tape, random_image(32, 32, 8), params);

    ops::reset_conv2d_call_count();
    auto none = mfa_aggregate(tape, pyr, params, AggregationStrategy::None);
    CHECK(ops::conv2d_call_count() == 0);
    for (int k = 0; k < 5; ++k) CHECK(none.levels[k]->data == pyr.levels[k]->data);

    ops::reset_conv2d_call_count();
    auto mfa = mfa_aggregate(tape, pyr, params, AggregationStrategy::MFA);
    CHECK(ops::conv2d_call_count() == 4);
    for (int k = 0; k < 5; ++k) CHECK(mfa.levels[k]->shape == pyr.levels[k]->shape);

    ops::reset_conv2d_call_count();
    auto bfa = mfa_aggregate(tape, pyr, params, AggregationStrategy::BFA);
    CHECK(ops::conv2d_call_count() == 1);
    for (int k = 0; k < 5; ++k) CHECK(bfa.levels[k]->shape == pyr.levels[k]->shape);
    // BFA only touches the deepest level.
    for (int k = 0; k < 4; ++k) CHECK(bfa.levels[k]->data == pyr.levels[k]->data);
    ops::reset_conv2d_call_count();
}

TEST_CASE("transfer with strategy none equals adain on raw encoder features") {
    Tape tape = Tape::inference();
    auto params = ModelParams::init(4, 5);
    auto cpyr = encode(tape, random_image(32, 32, 13), params);
    auto spyr = encode(tape, random_image(32, 32, 14), params);

    ops::reset_conv2d_call_count();
    auto stylized = transfer(tape, cpyr, spyr, params, AggregationStrategy::None);
    CHECK(ops::conv2d_call_count() == 0);
    for (int k = 0; k < 5; ++k) {
        auto direct = adain(tape, cpyr.levels[k], spyr.levels[k]);
        CHECK(stylized.levels[k]->data == direct->data);
    }
    ops::reset_conv2d_call_count();
}

TEST_CASE("stylize output matches content resolution and stays in [0, 1]") {
    Tape tape = Tape::inference();
    auto params = ModelParams::init(4, 5);
    auto content = random_image(32, 48, 21);
    auto style = random_image(64, 32, 22);  // different resolution on purpose
    auto out = stylize(tape, content, style, params, AggregationStrategy::MFA);
    REQUIRE(out->shape == Shape{1, 3, 32, 48});
    for (float v : out->data) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("stylize is deterministic") {
    auto params = ModelParams::init(4, 5);
    auto content = random_image(32, 32, 3);
    auto style = random_image(32, 32, 4);
    Tape t1 = Tape::inference();
    Tape t2 = Tape::inference();
    auto a = stylize(t1, content, style, params, AggregationStrategy::MFA);
    auto b = stylize(t2, content, style, params, AggregationStrategy::MFA);
    CHECK(a->data == b->data);
}

#include <cmath>
#include <vector>

#include <doctest.h>

#include "umfa/adam.hpp"
#include "umfa/tensor.hpp"

using namespace umfa;

namespace {

// Textbook bias-corrected Adam on one scalar, in double.
struct ScalarAdam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double m = 0.0, v = 0.0;
    long long t = 0;

    double step(double p, double g) {
        ++t;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        const double mh = m / (1.0 - std::pow(b1, t));
        const double vh = v / (1.0 - std::pow(b2, t));
        return p - lr * mh / (std::sqrt(vh) + eps);
    }
};

}  // namespace

TEST_CASE("first adam step moves by about -lr * sign(grad)") {
    auto p = Tensor::from_data({1, 1, 1, 2}, {1.0f, -2.0f}, true);
    p->ensure_grad();
    p->grad = {0.5f, -3.0f};
    AdamState state;
    state.lr = 1e-3f;
    adam_step({p}, state);
    CHECK(p->data[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-4));
    CHECK(p->data[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-4));
    CHECK(state.t == 1);
}

TEST_CASE("adam tracks a scalar double reference over several steps") {
    auto p = Tensor::from_data({1, 1, 1, 1}, {0.3f}, true);
    AdamState state;
    state.lr = 0.01f;
    ScalarAdam ref{0.01};
    double rp = 0.3;
    const double grads[] = {0.7, -0.2, 0.05, 1.3, -0.9, 0.0, 0.4};
    for (double g : grads) {
        p->ensure_grad();
        p->grad[0] = static_cast<float>(g);
        adam_step({p}, state);
        rp = ref.step(rp, g);
        CHECK(p->data[0] == doctest::Approx(rp).epsilon(1e-4));
    }
    CHECK(state.t == 7);
}

TEST_CASE("adam zeroes gradients after the step") {
    auto p = Tensor::from_data({1, 1, 1, 2}, {1.0f, 1.0f}, true);
    p->ensure_grad();
    p->grad = {1.0f, 2.0f};
    AdamState state;
    adam_step({p}, state);
    CHECK(p->grad == std::vector<float>{0.0f, 0.0f});
}

TEST_CASE("adam rejects parameters without gradients") {
    auto p = Tensor::from_data({1, 1, 1, 1}, {1.0f}, true);
    AdamState state;
    CHECK_THROWS(adam_step({p}, state));
}

TEST_CASE("adam moment buffers are per parameter and lazily created") {
    auto a = Tensor::from_data({1, 1, 1, 2}, {0.0f, 0.0f}, true);
    auto b = Tensor::from_data({1, 1, 1, 1}, {0.0f}, true);
    AdamState state;
    CHECK(state.m.empty());
    a->ensure_grad();
    b->ensure_grad();
    a->grad = {1.0f, -1.0f};
    b->grad = {2.0f};
    adam_step({a, b}, state);
    REQUIRE(state.m.size() == 2);
    CHECK(state.m[0].size() == 2);
    CHECK(state.m[1].size() == 1);
    CHECK(state.v.size() == 2);
}

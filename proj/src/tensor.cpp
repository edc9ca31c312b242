#include "umfa/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace umfa {

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

static void check_shape(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw std::invalid_argument("tensor shape " + s.str() + " has a dimension < 1");
    }
}

TensorPtr Tensor::zeros(const Shape& s, bool requires_grad) {
    check_shape(s);
    auto t = std::make_shared<Tensor>();
    t->shape = s;
    t->data.assign(s.numel(), 0.0f);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::full(const Shape& s, float value, bool requires_grad) {
    auto t = zeros(s, requires_grad);
    t->data.assign(s.numel(), value);
    return t;
}

TensorPtr Tensor::from_data(const Shape& s, std::vector<float> values, bool requires_grad) {
    check_shape(s);
    if (values.size() != s.numel()) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + s.str());
    }
    auto t = std::make_shared<Tensor>();
    t->shape = s;
    t->data = std::move(values);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::scalar(float v) {
    return from_data({1, 1, 1, 1}, {v});
}

void Tensor::ensure_grad() {
    if (grad.empty()) grad.assign(numel(), 0.0f);
}

void Tensor::zero_grad() {
    grad.assign(numel(), 0.0f);
}

void Tape::backward(const TensorPtr& loss) {
    if (!loss->is_scalar()) {
        throw std::invalid_argument("backward() expects a scalar loss, got shape " +
                                    loss->shape.str());
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0f;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace umfa

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace umfa {

/// Dimensions of a dense 4-D tensor: (batch, channels, rows, cols).
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

/// Dense 4-D float tensor with an optional gradient buffer.
/// Data is row-major in (n, c, h, w) order. Once an op has written a
/// tensor its data is treated as immutable; only `grad` mutates later.
class Tensor {
public:
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until ensure_grad()
    bool requires_grad = false;

    static TensorPtr zeros(const Shape& s, bool requires_grad = false);
    static TensorPtr full(const Shape& s, float value, bool requires_grad = false);
    static TensorPtr from_data(const Shape& s, std::vector<float> values,
                               bool requires_grad = false);
    static TensorPtr scalar(float v);

    std::size_t numel() const { return shape.numel(); }

    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * shape.c + ic) * shape.h + iy) * shape.w + ix;
    }
    float& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
    float at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

    bool is_scalar() const { return shape == Shape{1, 1, 1, 1}; }

    /// Allocates the grad buffer (zero-filled) if absent.
    void ensure_grad();
    void zero_grad();
};

/// Ordered record of the backward steps of every primitive op executed
/// through it. Replay happens in exact reverse execution order. A tape in
/// inference mode records nothing, so intermediates are freed as their
/// last reference drops.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}
    static Tape inference() { return Tape(false); }

    bool recording() const { return recording_; }
    std::size_t size() const { return steps_.size(); }

    void record(std::function<void()> backward_step) {
        if (recording_) steps_.push_back(std::move(backward_step));
    }

    /// Populates grads of every requires_grad tensor reachable from `loss`.
    /// Repeated calls without zeroing accumulate.
    void backward(const TensorPtr& loss);

    void clear() { steps_.clear(); }

private:
    bool recording_;
    std::vector<std::function<void()>> steps_;
};

}  // namespace umfa

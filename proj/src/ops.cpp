#include "umfa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace umfa::ops {

namespace {

thread_local std::size_t g_conv2d_calls = 0;
thread_local BranchTrace* g_branch_recorder = nullptr;

bool any_requires_grad(const std::vector<TensorPtr>& ts) {
    for (const auto& t : ts) {
        if (t->requires_grad) return true;
    }
    return false;
}

TensorPtr make_output(Tape& tape, const Shape& s, const std::vector<TensorPtr>& inputs) {
    auto out = Tensor::zeros(s);
    out->requires_grad = tape.recording() && any_requires_grad(inputs);
    return out;
}

// Columns laid out as cols[(ci*k*k + kh*k + kw) * M + (oy*ow + ox)].
void im2col(const float* src, int c, int h, int w, int k, int stride, int pad,
            int oh, int ow, float* cols) {
    const int M = oh * ow;
    float* dst = cols;
    for (int ci = 0; ci < c; ++ci) {
        const float* plane = src + static_cast<std::size_t>(ci) * h * w;
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + kh;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kw;
                        const bool in = iy >= 0 && iy < h && ix >= 0 && ix < w;
                        dst[oy * ow + ox] = in ? plane[iy * w + ix] : 0.0f;
                    }
                }
                dst += M;
            }
        }
    }
    (void)M;
}

void col2im_add(const float* cols, int c, int h, int w, int k, int stride, int pad,
                int oh, int ow, float* dst) {
    const int M = oh * ow;
    const float* src = cols;
    for (int ci = 0; ci < c; ++ci) {
        float* plane = dst + static_cast<std::size_t>(ci) * h * w;
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + kh;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kw;
                        if (ix < 0 || ix >= w) continue;
                        plane[iy * w + ix] += src[oy * ow + ox];
                    }
                }
                src += M;
            }
        }
    }
}

}  // namespace

std::size_t conv2d_call_count() { return g_conv2d_calls; }
void reset_conv2d_call_count() { g_conv2d_calls = 0; }

void set_branch_recorder(BranchTrace* trace) { g_branch_recorder = trace; }

TensorPtr conv2d(Tape& tape, const TensorPtr& input, const TensorPtr& weight,
                 const TensorPtr& bias, int stride, int padding) {
    const Shape& xs = input->shape;
    const Shape& ws = weight->shape;
    const int k = ws.h;
    if (ws.w != k || (k != 1 && k != 3)) {
        throw std::invalid_argument("conv2d: kernel must be square 1x1 or 3x3, weight shape " +
                                    ws.str());
    }
    if (xs.c != ws.c) {
        throw std::invalid_argument("conv2d: input shape " + xs.str() +
                                    " incompatible with weight shape " + ws.str() +
                                    " (channels " + std::to_string(xs.c) + " vs c_in " +
                                    std::to_string(ws.c) + ")");
    }
    if (static_cast<int>(bias->numel()) != ws.n) {
        throw std::invalid_argument("conv2d: bias shape " + bias->shape.str() +
                                    " does not provide " + std::to_string(ws.n) + " values");
    }
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");

    const int c_out = ws.n;
    const int oh = (xs.h + 2 * padding - k) / stride + 1;
    const int ow = (xs.w + 2 * padding - k) / stride + 1;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("conv2d: output would be empty for input " + xs.str());
    }
    ++g_conv2d_calls;

    auto out = make_output(tape, {xs.n, c_out, oh, ow}, {input, weight, bias});
    const int K = xs.c * k * k;
    const int M = oh * ow;

    std::vector<float> cols(static_cast<std::size_t>(K) * M);
    std::vector<double> acc(M);
    for (int in = 0; in < xs.n; ++in) {
        const float* x = input->data.data() + input->index(in, 0, 0, 0);
        im2col(x, xs.c, xs.h, xs.w, k, stride, padding, oh, ow, cols.data());
        for (int co = 0; co < c_out; ++co) {
            std::fill(acc.begin(), acc.end(), static_cast<double>(bias->data[co]));
            const float* wrow = weight->data.data() + static_cast<std::size_t>(co) * K;
            for (int kk = 0; kk < K; ++kk) {
                const double a = wrow[kk];
                const float* b = cols.data() + static_cast<std::size_t>(kk) * M;
                for (int m = 0; m < M; ++m) acc[m] += a * b[m];
            }
            float* o = out->data.data() + out->index(in, co, 0, 0);
            for (int m = 0; m < M; ++m) o[m] = static_cast<float>(acc[m]);
        }
    }

    if (out->requires_grad) {
        tape.record([input, weight, bias, out, stride, padding, k, K, M, oh, ow]() {
            if (out->grad.empty()) return;
            const Shape& xs = input->shape;
            const int c_out = weight->shape.n;
            std::vector<float> cols;
            if (weight->requires_grad || input->requires_grad) {
                cols.resize(static_cast<std::size_t>(K) * M);
            }
            std::vector<double> dcols;
            if (input->requires_grad) {
                input->ensure_grad();
                dcols.resize(static_cast<std::size_t>(K) * M);
            }
            if (weight->requires_grad) weight->ensure_grad();
            if (bias->requires_grad) bias->ensure_grad();

            for (int in = 0; in < xs.n; ++in) {
                if (!cols.empty()) {
                    im2col(input->data.data() + input->index(in, 0, 0, 0), xs.c, xs.h, xs.w,
                           k, stride, padding, oh, ow, cols.data());
                }
                if (bias->requires_grad) {
                    for (int co = 0; co < c_out; ++co) {
                        double s = 0.0;
                        const float* g = out->grad.data() + out->index(in, co, 0, 0);
                        for (int m = 0; m < M; ++m) s += g[m];
                        bias->grad[co] += static_cast<float>(s);
                    }
                }
                if (weight->requires_grad) {
                    for (int co = 0; co < c_out; ++co) {
                        const float* g = out->grad.data() + out->index(in, co, 0, 0);
                        float* dw = weight->grad.data() + static_cast<std::size_t>(co) * K;
                        for (int kk = 0; kk < K; ++kk) {
                            double s = 0.0;
                            const float* b = cols.data() + static_cast<std::size_t>(kk) * M;
                            for (int m = 0; m < M; ++m) s += static_cast<double>(g[m]) * b[m];
                            dw[kk] += static_cast<float>(s);
                        }
                    }
                }
                if (input->requires_grad) {
                    std::fill(dcols.begin(), dcols.end(), 0.0);
                    for (int co = 0; co < c_out; ++co) {
                        const float* g = out->grad.data() + out->index(in, co, 0, 0);
                        const float* wrow = weight->data.data() + static_cast<std::size_t>(co) * K;
                        for (int kk = 0; kk < K; ++kk) {
                            const double a = wrow[kk];
                            double* d = dcols.data() + static_cast<std::size_t>(kk) * M;
                            for (int m = 0; m < M; ++m) d[m] += a * g[m];
                        }
                    }
                    std::vector<float> dcols_f(dcols.size());
                    for (std::size_t i = 0; i < dcols.size(); ++i) {
                        dcols_f[i] = static_cast<float>(dcols[i]);
                    }
                    col2im_add(dcols_f.data(), xs.c, xs.h, xs.w, k, stride, padding, oh, ow,
                               input->grad.data() + input->index(in, 0, 0, 0));
                }
            }
        });
    }
    return out;
}

TensorPtr conv2d_depthwise(Tape& tape, const TensorPtr& input,
                           const std::vector<float>& kernel, int k) {
    const Shape& xs = input->shape;
    if (static_cast<int>(kernel.size()) != k * k) {
        throw std::invalid_argument("conv2d_depthwise: kernel size mismatch");
    }
    if (xs.h < k || xs.w < k) {
        throw std::invalid_argument("conv2d_depthwise: input " + xs.str() +
                                    " smaller than " + std::to_string(k) + "x" +
                                    std::to_string(k) + " window");
    }
    const int oh = xs.h - k + 1;
    const int ow = xs.w - k + 1;
    auto out = make_output(tape, {xs.n, xs.c, oh, ow}, {input});

    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            const float* plane = input->data.data() + input->index(in, ci, 0, 0);
            float* o = out->data.data() + out->index(in, ci, 0, 0);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double s = 0.0;
                    for (int kh = 0; kh < k; ++kh) {
                        const float* row = plane + (oy + kh) * xs.w + ox;
                        const float* kr = kernel.data() + kh * k;
                        for (int kw = 0; kw < k; ++kw) s += static_cast<double>(kr[kw]) * row[kw];
                    }
                    o[oy * ow + ox] = static_cast<float>(s);
                }
            }
        }
    }

    if (out->requires_grad) {
        auto kern = kernel;
        tape.record([input, out, kern, k, oh, ow]() {
            if (out->grad.empty() || !input->requires_grad) return;
            input->ensure_grad();
            const Shape& xs = input->shape;
            for (int in = 0; in < xs.n; ++in) {
                for (int ci = 0; ci < xs.c; ++ci) {
                    const float* g = out->grad.data() + out->index(in, ci, 0, 0);
                    float* dx = input->grad.data() + input->index(in, ci, 0, 0);
                    for (int oy = 0; oy < oh; ++oy) {
                        for (int ox = 0; ox < ow; ++ox) {
                            const float gv = g[oy * ow + ox];
                            if (gv == 0.0f) continue;
                            for (int kh = 0; kh < k; ++kh) {
                                float* row = dx + (oy + kh) * xs.w + ox;
                                const float* kr = kern.data() + kh * k;
                                for (int kw = 0; kw < k; ++kw) row[kw] += gv * kr[kw];
                            }
                        }
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr maxpool2d(Tape& tape, const TensorPtr& input) {
    const Shape& xs = input->shape;
    if (xs.h % 2 != 0 || xs.w % 2 != 0) {
        throw std::invalid_argument("maxpool2d: spatial dims must be even, got " + xs.str());
    }
    const int oh = xs.h / 2;
    const int ow = xs.w / 2;
    auto out = make_output(tape, {xs.n, xs.c, oh, ow}, {input});

    auto argmax = std::make_shared<std::vector<std::size_t>>(out->numel());
    std::size_t oi = 0;
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    float best = -1.0f;
                    std::size_t best_idx = 0;
                    bool first = true;
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t idx =
                                input->index(in, ci, 2 * oy + dy, 2 * ox + dx);
                            const float v = input->data[idx];
                            if (first || v > best) {  // strict > keeps the first tie
                                best = v;
                                best_idx = idx;
                                first = false;
                            }
                        }
                    }
                    out->data[oi] = best;
                    (*argmax)[oi] = best_idx;
                    ++oi;
                }
            }
        }
    }
    if (g_branch_recorder) g_branch_recorder->pool_argmax.push_back(*argmax);

    if (out->requires_grad) {
        tape.record([input, out, argmax]() {
            if (out->grad.empty() || !input->requires_grad) return;
            input->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                input->grad[(*argmax)[i]] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr upsample_nearest(Tape& tape, const TensorPtr& input) {
    const Shape& xs = input->shape;
    auto out = make_output(tape, {xs.n, xs.c, 2 * xs.h, 2 * xs.w}, {input});
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            for (int iy = 0; iy < xs.h; ++iy) {
                for (int ix = 0; ix < xs.w; ++ix) {
                    const float v = input->at(in, ci, iy, ix);
                    out->at(in, ci, 2 * iy, 2 * ix) = v;
                    out->at(in, ci, 2 * iy, 2 * ix + 1) = v;
                    out->at(in, ci, 2 * iy + 1, 2 * ix) = v;
                    out->at(in, ci, 2 * iy + 1, 2 * ix + 1) = v;
                }
            }
        }
    }
    if (out->requires_grad) {
        tape.record([input, out]() {
            if (out->grad.empty() || !input->requires_grad) return;
            input->ensure_grad();
            const Shape& xs = input->shape;
            for (int in = 0; in < xs.n; ++in) {
                for (int ci = 0; ci < xs.c; ++ci) {
                    for (int iy = 0; iy < xs.h; ++iy) {
                        for (int ix = 0; ix < xs.w; ++ix) {
                            float g = out->grad[out->index(in, ci, 2 * iy, 2 * ix)];
                            g += out->grad[out->index(in, ci, 2 * iy, 2 * ix + 1)];
                            g += out->grad[out->index(in, ci, 2 * iy + 1, 2 * ix)];
                            g += out->grad[out->index(in, ci, 2 * iy + 1, 2 * ix + 1)];
                            input->grad[input->index(in, ci, iy, ix)] += g;
                        }
                    }
                }
            }
        });
    }
    return out;
}

TensorPtr concat_channels(Tape& tape, const std::vector<TensorPtr>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const Shape& s0 = inputs[0]->shape;
    int c_total = 0;
    for (const auto& t : inputs) {
        if (t->shape.n != s0.n || t->shape.h != s0.h || t->shape.w != s0.w) {
            throw std::invalid_argument("concat_channels: shape " + t->shape.str() +
                                        " does not match " + s0.str() +
                                        " on batch/spatial dims");
        }
        c_total += t->shape.c;
    }
    auto out = make_output(tape, {s0.n, c_total, s0.h, s0.w}, inputs);
    const std::size_t plane = static_cast<std::size_t>(s0.h) * s0.w;
    for (int in = 0; in < s0.n; ++in) {
        std::size_t co = 0;
        for (const auto& t : inputs) {
            const std::size_t len = static_cast<std::size_t>(t->shape.c) * plane;
            std::copy_n(t->data.data() + t->index(in, 0, 0, 0), len,
                        out->data.data() + out->index(in, static_cast<int>(co), 0, 0));
            co += t->shape.c;
        }
    }
    if (out->requires_grad) {
        auto ins = inputs;
        tape.record([ins, out, plane]() {
            if (out->grad.empty()) return;
            const int n = out->shape.n;
            for (int in = 0; in < n; ++in) {
                std::size_t co = 0;
                for (const auto& t : ins) {
                    const std::size_t len = static_cast<std::size_t>(t->shape.c) * plane;
                    if (t->requires_grad) {
                        t->ensure_grad();
                        const float* g =
                            out->grad.data() + out->index(in, static_cast<int>(co), 0, 0);
                        float* dst = t->grad.data() + t->index(in, 0, 0, 0);
                        for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
                    }
                    co += t->shape.c;
                }
            }
        });
    }
    return out;
}

TensorPtr concat_channels(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    return concat_channels(tape, std::vector<TensorPtr>{a, b});
}

TensorPtr relu(Tape& tape, const TensorPtr& input) {
    auto out = make_output(tape, input->shape, {input});
    for (std::size_t i = 0; i < input->data.size(); ++i) {
        out->data[i] = input->data[i] > 0.0f ? input->data[i] : 0.0f;
    }
    if (g_branch_recorder) {
        std::vector<std::uint8_t> mask(input->data.size());
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = input->data[i] > 0.0f;
        g_branch_recorder->relu_masks.push_back(std::move(mask));
    }
    if (out->requires_grad) {
        tape.record([input, out]() {
            if (out->grad.empty() || !input->requires_grad) return;
            input->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                if (input->data[i] > 0.0f) input->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr sigmoid(Tape& tape, const TensorPtr& input) {
    auto out = make_output(tape, input->shape, {input});
    for (std::size_t i = 0; i < input->data.size(); ++i) {
        out->data[i] = 1.0f / (1.0f + std::exp(-input->data[i]));
    }
    if (out->requires_grad) {
        tape.record([input, out]() {
            if (out->grad.empty() || !input->requires_grad) return;
            input->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) {
                const float y = out->data[i];
                input->grad[i] += out->grad[i] * y * (1.0f - y);
            }
        });
    }
    return out;
}

std::pair<TensorPtr, TensorPtr> channel_moments(Tape& tape, const TensorPtr& input,
                                                float eps) {
    const Shape& xs = input->shape;
    const int hw = xs.h * xs.w;
    auto mean = make_output(tape, {xs.n, xs.c, 1, 1}, {input});
    auto stdev = make_output(tape, {xs.n, xs.c, 1, 1}, {input});
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            const float* x = input->data.data() + input->index(in, ci, 0, 0);
            double s = 0.0;
            for (int i = 0; i < hw; ++i) s += x[i];
            const double mu = s / hw;
            double v = 0.0;
            for (int i = 0; i < hw; ++i) {
                const double d = x[i] - mu;
                v += d * d;
            }
            v /= hw;
            mean->data[mean->index(in, ci, 0, 0)] = static_cast<float>(mu);
            stdev->data[stdev->index(in, ci, 0, 0)] =
                static_cast<float>(std::sqrt(v + static_cast<double>(eps)));
        }
    }
    if (mean->requires_grad) {
        tape.record([input, mean, stdev]() {
            if (!input->requires_grad) return;
            if (mean->grad.empty() && stdev->grad.empty()) return;
            input->ensure_grad();
            const Shape& xs = input->shape;
            const int hw = xs.h * xs.w;
            for (int in = 0; in < xs.n; ++in) {
                for (int ci = 0; ci < xs.c; ++ci) {
                    const std::size_t mi = mean->index(in, ci, 0, 0);
                    const float gm = mean->grad.empty() ? 0.0f : mean->grad[mi];
                    const float gs = stdev->grad.empty() ? 0.0f : stdev->grad[mi];
                    if (gm == 0.0f && gs == 0.0f) continue;
                    const float mu = mean->data[mi];
                    const float sd = stdev->data[mi];
                    const float* x = input->data.data() + input->index(in, ci, 0, 0);
                    float* dx = input->grad.data() + input->index(in, ci, 0, 0);
                    const float a = gm / hw;
                    const float b = gs / (hw * sd);
                    for (int i = 0; i < hw; ++i) dx[i] += a + b * (x[i] - mu);
                }
            }
        });
    }
    return {mean, stdev};
}

namespace {

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
    if (!(a->shape == b->shape)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->shape.str() +
                                    " vs " + b->shape.str());
    }
}

void check_channel_operand(const TensorPtr& x, const TensorPtr& s, const char* op) {
    if (s->shape.n != x->shape.n || s->shape.c != x->shape.c || s->shape.h != 1 ||
        s->shape.w != 1) {
        throw std::invalid_argument(std::string(op) + ": per-channel operand " +
                                    s->shape.str() + " incompatible with " + x->shape.str());
    }
}

}  // namespace

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "add");
    auto out = make_output(tape, a->shape, {a, b});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (out->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "sub");
    auto out = make_output(tape, a->shape, {a, b});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (out->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] -= out->grad[i];
            }
        });
    }
    return out;
}

TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "mul");
    auto out = make_output(tape, a->shape, {a, b});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (out->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) {
                    a->grad[i] += out->grad[i] * b->data[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) {
                    b->grad[i] += out->grad[i] * a->data[i];
                }
            }
        });
    }
    return out;
}

TensorPtr div(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    check_same_shape(a, b, "div");
    auto out = make_output(tape, a->shape, {a, b});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] / b->data[i];
    if (out->requires_grad) {
        tape.record([a, b, out]() {
            if (out->grad.empty()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) {
                    a->grad[i] += out->grad[i] / b->data[i];
                }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < out->grad.size(); ++i) {
                    b->grad[i] -= out->grad[i] * a->data[i] / (b->data[i] * b->data[i]);
                }
            }
        });
    }
    return out;
}

TensorPtr add_scalar(Tape& tape, const TensorPtr& a, float s) {
    auto out = make_output(tape, a->shape, {a});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] + s;
    if (out->requires_grad) {
        tape.record([a, out]() {
            if (out->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr mul_scalar(Tape& tape, const TensorPtr& a, float s) {
    auto out = make_output(tape, a->shape, {a});
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a->data[i] * s;
    if (out->requires_grad) {
        tape.record([a, out, s]() {
            if (out->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * s;
        });
    }
    return out;
}

namespace {

enum class ChanOp { Add, Sub, Mul, Div };

TensorPtr channel_binary(Tape& tape, const TensorPtr& x, const TensorPtr& s, ChanOp op,
                         const char* name) {
    check_channel_operand(x, s, name);
    auto out = make_output(tape, x->shape, {x, s});
    const Shape& xs = x->shape;
    const int hw = xs.h * xs.w;
    for (int in = 0; in < xs.n; ++in) {
        for (int ci = 0; ci < xs.c; ++ci) {
            const float v = s->data[s->index(in, ci, 0, 0)];
            const float* px = x->data.data() + x->index(in, ci, 0, 0);
            float* po = out->data.data() + out->index(in, ci, 0, 0);
            switch (op) {
                case ChanOp::Add:
                    for (int i = 0; i < hw; ++i) po[i] = px[i] + v;
                    break;
                case ChanOp::Sub:
                    for (int i = 0; i < hw; ++i) po[i] = px[i] - v;
                    break;
                case ChanOp::Mul:
                    for (int i = 0; i < hw; ++i) po[i] = px[i] * v;
                    break;
                case ChanOp::Div:
                    for (int i = 0; i < hw; ++i) po[i] = px[i] / v;
                    break;
            }
        }
    }
    if (out->requires_grad) {
        tape.record([x, s, out, op]() {
            if (out->grad.empty()) return;
            const Shape& xs = x->shape;
            const int hw = xs.h * xs.w;
            if (x->requires_grad) x->ensure_grad();
            if (s->requires_grad) s->ensure_grad();
            for (int in = 0; in < xs.n; ++in) {
                for (int ci = 0; ci < xs.c; ++ci) {
                    const std::size_t si = s->index(in, ci, 0, 0);
                    const float v = s->data[si];
                    const float* g = out->grad.data() + out->index(in, ci, 0, 0);
                    const float* px = x->data.data() + x->index(in, ci, 0, 0);
                    if (x->requires_grad) {
                        float* dx = x->grad.data() + x->index(in, ci, 0, 0);
                        switch (op) {
                            case ChanOp::Add:
                            case ChanOp::Sub:
                                for (int i = 0; i < hw; ++i) dx[i] += g[i];
                                break;
                            case ChanOp::Mul:
                                for (int i = 0; i < hw; ++i) dx[i] += g[i] * v;
                                break;
                            case ChanOp::Div:
                                for (int i = 0; i < hw; ++i) dx[i] += g[i] / v;
                                break;
                        }
                    }
                    if (s->requires_grad) {
                        double acc = 0.0;
                        switch (op) {
                            case ChanOp::Add:
                                for (int i = 0; i < hw; ++i) acc += g[i];
                                break;
                            case ChanOp::Sub:
                                for (int i = 0; i < hw; ++i) acc -= g[i];
                                break;
                            case ChanOp::Mul:
                                for (int i = 0; i < hw; ++i) {
                                    acc += static_cast<double>(g[i]) * px[i];
                                }
                                break;
                            case ChanOp::Div:
                                for (int i = 0; i < hw; ++i) {
                                    acc -= static_cast<double>(g[i]) * px[i] /
                                           (static_cast<double>(v) * v);
                                }
                                break;
                        }
                        s->grad[si] += static_cast<float>(acc);
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

TensorPtr add_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s) {
    return channel_binary(tape, x, s, ChanOp::Add, "add_channel");
}
TensorPtr sub_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s) {
    return channel_binary(tape, x, s, ChanOp::Sub, "sub_channel");
}
TensorPtr mul_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s) {
    return channel_binary(tape, x, s, ChanOp::Mul, "mul_channel");
}
TensorPtr div_channel(Tape& tape, const TensorPtr& x, const TensorPtr& s) {
    return channel_binary(tape, x, s, ChanOp::Div, "div_channel");
}

TensorPtr sum_all(Tape& tape, const TensorPtr& a) {
    auto out = make_output(tape, {1, 1, 1, 1}, {a});
    double s = 0.0;
    for (float v : a->data) s += v;
    out->data[0] = static_cast<float>(s);
    if (out->requires_grad) {
        tape.record([a, out]() {
            if (out->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            const float g = out->grad[0];
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

TensorPtr mean_all(Tape& tape, const TensorPtr& a) {
    auto out = make_output(tape, {1, 1, 1, 1}, {a});
    double s = 0.0;
    for (float v : a->data) s += v;
    out->data[0] = static_cast<float>(s / static_cast<double>(a->numel()));
    if (out->requires_grad) {
        tape.record([a, out]() {
            if (out->grad.empty() || !a->requires_grad) return;
            a->ensure_grad();
            const float g = out->grad[0] / static_cast<float>(a->numel());
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
        });
    }
    return out;
}

TensorPtr gram(Tape& tape, const TensorPtr& feature) {
    const Shape& fs = feature->shape;
    const int c = fs.c;
    const int m = fs.h * fs.w;
    auto out = make_output(tape, {fs.n, 1, c, c}, {feature});
    for (int in = 0; in < fs.n; ++in) {
        const float* f = feature->data.data() + feature->index(in, 0, 0, 0);
        float* g = out->data.data() + out->index(in, 0, 0, 0);
        for (int i = 0; i < c; ++i) {
            const float* fi = f + static_cast<std::size_t>(i) * m;
            for (int j = i; j < c; ++j) {
                const float* fj = f + static_cast<std::size_t>(j) * m;
                double s = 0.0;
                for (int t = 0; t < m; ++t) s += static_cast<double>(fi[t]) * fj[t];
                const float v = static_cast<float>(s);
                g[i * c + j] = v;
                g[j * c + i] = v;
            }
        }
    }
    if (out->requires_grad) {
        tape.record([feature, out, c, m]() {
            if (out->grad.empty() || !feature->requires_grad) return;
            feature->ensure_grad();
            std::vector<double> row(m);
            for (int in = 0; in < feature->shape.n; ++in) {
                const float* f = feature->data.data() + feature->index(in, 0, 0, 0);
                const float* g = out->grad.data() + out->index(in, 0, 0, 0);
                float* df = feature->grad.data() + feature->index(in, 0, 0, 0);
                for (int i = 0; i < c; ++i) {
                    std::fill(row.begin(), row.end(), 0.0);
                    for (int j = 0; j < c; ++j) {
                        const double coef =
                            static_cast<double>(g[i * c + j]) + g[j * c + i];
                        if (coef == 0.0) continue;
                        const float* fj = f + static_cast<std::size_t>(j) * m;
                        for (int t = 0; t < m; ++t) row[t] += coef * fj[t];
                    }
                    float* di = df + static_cast<std::size_t>(i) * m;
                    for (int t = 0; t < m; ++t) di[t] += static_cast<float>(row[t]);
                }
            }
        });
    }
    return out;
}

}  // namespace umfa::ops

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "umfa/gradcheck.hpp"
#include "umfa/image_io.hpp"
#include "umfa/losses.hpp"
#include "umfa/metrics.hpp"
#include "umfa/net.hpp"
#include "umfa/trainer.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

umfa::TensorPtr to_tensor(const FloatArray& arr) {
    if (arr.ndim() != 4) {
        throw std::invalid_argument("expected a 4-d NCHW array, got ndim=" +
                                    std::to_string(arr.ndim()));
    }
    umfa::Shape shape{static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)),
                      static_cast<int>(arr.shape(2)), static_cast<int>(arr.shape(3))};
    auto t = umfa::Tensor::zeros(shape);
    std::copy(arr.data(), arr.data() + shape.numel(), t->data.begin());
    return t;
}

py::array_t<float> to_array(const umfa::TensorPtr& t) {
    py::array_t<float> arr({t->shape.n, t->shape.c, t->shape.h, t->shape.w});
    std::copy(t->data.begin(), t->data.end(), arr.mutable_data());
    return arr;
}

}  // namespace

PYBIND11_MODULE(_umfa, m) {
    m.doc() = "UMFA photorealistic style transfer core";

    m.def(
        "gram",
        [](const FloatArray& feat) {
            umfa::Tape tape = umfa::Tape::inference();
            return to_array(umfa::ops::gram(tape, to_tensor(feat)));
        },
        py::arg("features"), "Unnormalized Gram matrices, (n,1,c,c), from NCHW features.");

    m.def(
        "ssim",
        [](const FloatArray& x, const FloatArray& y) {
            return umfa::ssim_value(to_tensor(x), to_tensor(y));
        },
        py::arg("x"), py::arg("y"),
        "Mean SSIM over an 11x11 Gaussian window, per channel, valid region.");

    m.def(
        "adain",
        [](const FloatArray& content_feat, const FloatArray& style_feat) {
            umfa::Tape tape = umfa::Tape::inference();
            return to_array(umfa::adain(tape, to_tensor(content_feat), to_tensor(style_feat)));
        },
        py::arg("content_features"), py::arg("style_features"),
        "Re-statistics of content features to the style's per-channel mean/std.");

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& out, int epochs, int image_size,
           float lr, float alpha, float beta, float gamma, const std::string& agg,
           std::uint64_t seed, const std::string& log_path, int stem_width,
           const std::string& resume) {
            umfa::TrainConfig config;
            config.data_dir = data_dir;
            config.out_path = out;
            config.epochs = epochs;
            config.image_size = image_size;
            config.lr = lr;
            config.weights = {alpha, beta, gamma};
            config.strategy = umfa::parse_strategy(agg);
            config.seed = seed;
            config.log_path = log_path;
            config.stem_width = stem_width;
            config.resume = resume;
            const auto result = umfa::train(config);
            return py::dict(py::arg("checkpoint") = result.checkpoint_path,
                            py::arg("steps") = result.steps,
                            py::arg("total") = result.final_report.total);
        },
        py::arg("data_dir"), py::arg("out"), py::arg("epochs") = 2,
        py::arg("image_size") = 256, py::arg("lr") = 1e-4f, py::arg("alpha") = 0.8f,
        py::arg("beta") = 1.0f, py::arg("gamma") = 1.0f, py::arg("agg") = "mfa",
        py::arg("seed") = 0, py::arg("log_path") = std::string(),
        py::arg("stem_width") = 32, py::arg("resume") = std::string());

    m.def(
        "stylize",
        [](const std::string& model, const std::string& content, const std::string& style,
           const std::string& out, int size) {
            auto ckpt = umfa::load_checkpoint(model);
            auto c = umfa::load_image(content);
            auto s = umfa::load_image(style);
            if (size > 0) {
                c = umfa::resize_center(c, size);
                s = umfa::resize_center(s, size);
            }
            umfa::Tape tape = umfa::Tape::inference();
            auto output = umfa::stylize(tape, c, s, ckpt.params, ckpt.config.strategy);
            umfa::save_image(output, out);
            return out;
        },
        py::arg("model"), py::arg("content"), py::arg("style"), py::arg("out"),
        py::arg("size") = 0);

    m.def(
        "evaluate",
        [](const std::string& content, const std::string& style, const std::string& output,
           std::uint64_t seed) {
            const auto phi = umfa::LossNetwork::seeded_random(seed);
            const auto r = umfa::evaluate(umfa::load_image(content), umfa::load_image(style),
                                          umfa::load_image(output), phi);
            return py::dict(py::arg("ssim") = r.ssim, py::arg("gram_loss") = r.gram_loss);
        },
        py::arg("content"), py::arg("style"), py::arg("output"), py::arg("seed") = 0);

    m.def(
        "bench",
        [](const std::string& model, const std::vector<int>& sizes, std::uint64_t seed) {
            auto ckpt = umfa::load_checkpoint(model);
            py::list out;
            for (const auto& row : umfa::bench(ckpt.params, ckpt.config.strategy, sizes, seed)) {
                out.append(py::dict(py::arg("size") = row.size,
                                    py::arg("median_s") = row.median_s,
                                    py::arg("runs") = row.runs,
                                    py::arg("thread_count") = row.thread_count));
            }
            return out;
        },
        py::arg("model"), py::arg("sizes"), py::arg("seed") = 0);

    m.def("gradcheck", []() {
        std::ostringstream out;
        const auto result = umfa::gradcheck::run_gradient_suite(out);
        return py::make_tuple(result.ok(), out.str());
    });
}

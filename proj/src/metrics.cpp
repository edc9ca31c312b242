#include "umfa/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "umfa/losses.hpp"
#include "umfa/rng.hpp"

namespace umfa {

EvalResult evaluate(const TensorPtr& content, const TensorPtr& style,
                    const TensorPtr& output, const LossNetwork& phi) {
    if (!(output->shape == content->shape)) {
        throw std::invalid_argument("evaluate: output " + output->shape.str() +
                                    " does not match content " + content->shape.str());
    }
    Tape tape = Tape::inference();
    EvalResult r;
    r.ssim = ssim_value(output, content);
    r.gram_loss = style_loss(tape, output, style, phi).first->data[0];
    return r;
}

std::vector<BenchRow> bench(const ModelParams& params, AggregationStrategy strategy,
                            const std::vector<int>& sizes, std::uint64_t seed) {
    std::vector<BenchRow> rows;
    Rng rng(seed);
    for (int size : sizes) {
        if (size % 16 != 0) {
            throw std::invalid_argument("bench size " + std::to_string(size) +
                                        " is not divisible by 16");
        }
        auto content = Tensor::zeros({1, 3, size, size});
        auto style = Tensor::zeros({1, 3, size, size});
        for (auto& v : content->data) v = rng.unit();
        for (auto& v : style->data) v = rng.unit();

        auto run_once = [&]() {
            Tape tape = Tape::inference();
            return stylize(tape, content, style, params, strategy);
        };
        run_once();  // warm-up

        BenchRow row;
        row.size = size;
        std::vector<double> times;
        for (int i = 0; i < row.runs; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            run_once();
            const auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        std::sort(times.begin(), times.end());
        row.median_s = times[times.size() / 2];
        rows.push_back(row);
    }
    return rows;
}

}  // namespace umfa

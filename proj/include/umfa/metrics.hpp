#pragma once

#include <cstdint>
#include <vector>

#include "umfa/loss_network.hpp"
#include "umfa/net.hpp"
#include "umfa/tensor.hpp"

namespace umfa {

struct EvalResult {
    double ssim = 0.0;
    double gram_loss = 0.0;
};

/// SSIM(output, content) and Gram loss (output vs style).
/// Larger SSIM and smaller Gram loss are better.
EvalResult evaluate(const TensorPtr& content, const TensorPtr& style,
                    const TensorPtr& output, const LossNetwork& phi);

struct BenchRow {
    int size = 0;
    double median_s = 0.0;
    int runs = 5;
    int thread_count = 1;
};

/// Per size: one warm-up stylize, then the median wall-clock of 5 runs on
/// seeded random images. Image decode is excluded by construction.
std::vector<BenchRow> bench(const ModelParams& params, AggregationStrategy strategy,
                            const std::vector<int>& sizes, std::uint64_t seed);

}  // namespace umfa

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "umfa/ops.hpp"
#include "umfa/tensor.hpp"

namespace umfa {

/// How skip features are fused before stylization.
enum class AggregationStrategy { None, BFA, MFA };

AggregationStrategy parse_strategy(const std::string& token);
std::string to_string(AggregationStrategy s);

/// The five encoder outputs, shallow to deep. Level k has
/// stem_width * 2^k channels at (S / 2^k) x (S / 2^k).
struct FeaturePyramid {
    std::array<TensorPtr, 5> levels;
};

/// Named trainable tensors of the full network. Names are stable and
/// unique; checkpoints validate against layout().
class ModelParams {
public:
    static ModelParams init(int stem_width, std::uint64_t seed);

    /// Declared (name, shape) pairs in serialization order.
    static std::vector<std::pair<std::string, Shape>> layout(int stem_width);

    int stem_width() const { return stem_width_; }
    const TensorPtr& at(const std::string& name) const;
    const std::vector<std::pair<std::string, TensorPtr>>& items() const { return items_; }
    std::vector<TensorPtr> tensors() const;

private:
    int stem_width_ = 32;
    std::vector<std::pair<std::string, TensorPtr>> items_;
};

/// Three densely connected 3x3 convs; output concatenates the input with
/// all three conv outputs, so channels go c -> 4c.
TensorPtr dense_block(Tape& tape, const TensorPtr& input, const ModelParams& params,
                      const std::string& prefix);

/// Downsampling dense block k (1-based): maxpool, dense block, then two
/// 1x1 convs that set the doubled channel count.
TensorPtr ddb(Tape& tape, const TensorPtr& input, const ModelParams& params, int k);

/// Stem conv + 4 DDBs. Spatial dims must be divisible by 16.
FeaturePyramid encode(Tape& tape, const TensorPtr& image, const ModelParams& params);

/// Fuses skip features according to the strategy; output shapes equal
/// input shapes at every level.
FeaturePyramid mfa_aggregate(Tape& tape, const FeaturePyramid& pyramid,
                             const ModelParams& params, AggregationStrategy strategy);

/// Re-statistics of the content feature to the style feature's
/// per-channel mean/std. Spatial sizes may differ.
TensorPtr adain(Tape& tape, const TensorPtr& content_feat, const TensorPtr& style_feat,
                float eps = 1e-5f);

/// Aggregates both pyramids with shared fuse params, then AdaIN per level.
FeaturePyramid transfer(Tape& tape, const FeaturePyramid& content_pyr,
                        const FeaturePyramid& style_pyr, const ModelParams& params,
                        AggregationStrategy strategy);

/// Upsampling convolutional block at skip level k (0-based).
TensorPtr ucb(Tape& tape, const TensorPtr& up_input, const TensorPtr& skip_feat,
              const ModelParams& params, int k);

/// 4 UCBs followed by the output conv; sigmoid squashes into [0, 1].
TensorPtr decode(Tape& tape, const FeaturePyramid& stylized, const ModelParams& params);

/// encode -> transfer -> decode; output resolution equals the content's.
TensorPtr stylize(Tape& tape, const TensorPtr& content, const TensorPtr& style,
                  const ModelParams& params, AggregationStrategy strategy);

}  // namespace umfa

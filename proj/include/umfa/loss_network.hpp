#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "umfa/tensor.hpp"

namespace umfa {

/// Named ReLU taps of the loss network, shallow to deep. relu{i}_{j} is
/// the activation after the j-th conv of block i.
enum class TapId { relu1_2, relu2_2, relu3_3, relu4_3 };

std::string to_string(TapId tap);
const std::array<TapId, 4>& all_taps();

/// Fixed VGG16-topology feature extractor (blocks 1-4). Parameters are
/// frozen: gradients flow through activations to the input image only.
class LossNetwork {
public:
    struct Layer {
        std::string name;  // e.g. "block3_conv1"
        TensorPtr weight;
        TensorPtr bias;
    };

    /// Deterministic He-uniform random weights. The default source; all
    /// structural and invariant checks hold with random features.
    static LossNetwork seeded_random(std::uint64_t seed);

    /// Loads external weights (e.g. actually pretrained VGG16) from a
    /// manifest + blob in the standard tensor format.
    static LossNetwork load_weights(const std::string& manifest_path);

    void save_weights(const std::string& manifest_path) const;

    /// Truncated forward pass; returns the requested tap activations.
    /// Spatial dims must be divisible by 8.
    std::map<TapId, TensorPtr> extract(Tape& tape, const TensorPtr& image,
                                       const std::set<TapId>& taps) const;

    std::uint64_t content_hash() const;
    const std::string& source() const { return source_; }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Expected (name, out_channels, in_channels) per conv layer.
    static std::vector<std::tuple<std::string, int, int>> topology();

private:
    std::vector<Layer> layers_;
    std::string source_;
    bool has_preproc_ = false;
    std::array<float, 3> preproc_mean_{};
    std::array<float, 3> preproc_std_{};
};

}  // namespace umfa

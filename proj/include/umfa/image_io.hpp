#pragma once

#include <string>

#include "umfa/tensor.hpp"

namespace umfa {

/// Decodes a PNG (8-bit RGB/RGBA, alpha dropped) or binary PPM (P6,
/// maxval 255) into a (1, 3, H, W) tensor with values byte/255.
TensorPtr load_image(const std::string& path);

/// Quantizes with round-half-up after clamping to [0, 1]; format picked
/// by extension (.ppm writes P6, anything else PNG).
void save_image(const TensorPtr& image, const std::string& path);

/// Bilinear scale of the shorter side to `target`, then center crop to
/// target x target. Half-pixel-center alignment. An already target^2
/// input passes through bit-exactly.
TensorPtr resize_center(const TensorPtr& image, int target);

}  // namespace umfa

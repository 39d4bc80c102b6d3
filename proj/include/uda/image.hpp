#pragma once

#include <string>

#include "uda/tensor.hpp"

namespace uda {

// Reads a PNG or JPEG as RGB in [0, 1], resized bilinearly to size x size
// (size <= 0 keeps the file's resolution). Throws uda::Error(io).
Tensor load_image(const std::string& path, int size = 0);
// Writes an RGB tensor (values clamped to [0, 1]) as PNG or JPEG by extension.
void save_image(const Tensor& image, const std::string& path);
Tensor resize_bilinear(const Tensor& image, int height, int width);

}  // namespace uda

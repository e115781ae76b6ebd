// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// 16-bit grayscale PNG; tensor values in [0,1], 1 x H x W.
void write_png_gray16(const std::string& path, const Tensor& map01);
Tensor read_png_gray16(const std::string& path);

/// Raw 16-bit grayscale samples (used by the trimap codec to validate levels).
Tensor read_png_gray16_raw(const std::string& path);  // values in [0, 65535]

/// 8-bit RGB PNG; tensor values in [0,1], 3 x H x W.
void write_png_rgb8(const std::string& path, const Tensor& rgb01);
Tensor read_png_rgb8(const std::string& path);

}  // namespace diffmatte

#pragma once

#include <filesystem>

#include "selftune/image.hpp"

namespace selftune {

/// Loads an 8- or 16-bit PNG. Gray(+alpha) becomes 1 channel, RGB(A) and
/// palette become 3; alpha is dropped. Throws IoError / FormatError.
Image load_image(const std::filesystem::path& path);

/// Writes an 8-bit gray or RGB PNG, quantizing with round(v * 255).
void save_image(const Image& image, const std::filesystem::path& path);

/// Mask PNGs are 8-bit grayscale with 255 = hole, 0 = valid. On load any
/// value >= 128 in the first channel counts as a hole.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace selftune

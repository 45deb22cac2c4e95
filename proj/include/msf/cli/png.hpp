#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "msf/volume.hpp"

namespace msf::cli {

/// Maps [lo, hi] linearly onto 0..255 with clipping; a zero-width window maps to 128.
std::vector<std::uint8_t> window_to_gray(const Image2D& img, double lo, double hi);

/// 8-bit grayscale PNG without time or text chunks, so identical pixels give identical bytes.
void write_png_gray(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                    const std::vector<std::uint8_t>& pixels);

}  // namespace msf::cli

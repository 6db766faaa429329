#pragma once

#include <filesystem>
#include <span>

#include "softsphere/raster.hpp"

namespace softsphere::cli {

/// Writes channels `select` of `img` (one for grayscale, three for RGB), clamped to [0, 1],
/// as an 8- or 16-bit PNG. Throws IoError.
void write_png(const std::filesystem::path& path, const FeatureImage<double>& img, std::span<const int> select,
               int bits);

/// Reads a grayscale (d = 1) or color (d = 3) PNG into [0, 1]; alpha is dropped. 16-bit files
/// keep their full precision. Throws IoError / FormatError.
FeatureImage<double> read_png(const std::filesystem::path& path);

}  // namespace softsphere::cli

#pragma once

#include <cstdint>
#include <filesystem>

#include "nearfar/raster.hpp"

namespace nearfar {

/// Binary PGM, P5, maxval 65535, big-endian 16-bit samples.
void write_pgm16(const Raster<std::uint16_t>& img, const std::filesystem::path& path);

/// Reads binary PGM with 8- or 16-bit samples.
Raster<std::uint16_t> read_pgm(const std::filesystem::path& path);

/// Greyscale PFM ("Pf"), little-endian float32 (scale -1.0), bottom row first.
void write_pfm(const Image& img, const std::filesystem::path& path);

/// Reads greyscale PFM of either byte order.
Image read_pfm(const std::filesystem::path& path);

}  // namespace nearfar

#pragma once

#include <filesystem>
#include <vector>

#include "kpgan/pose_geometry.hpp"

namespace kpgan {

/// 8-bit PNG; 1 channel is written as grayscale, 3 as RGB.
void write_png(const std::filesystem::path& path, const Image& image);
void write_png(const std::filesystem::path& path, const SkeletonImage& image);
Image read_png(const std::filesystem::path& path);

/// Tiles equally sized images row-major into one image with a 1-pixel gap.
Image tile_images(const std::vector<Image>& tiles, int columns, float gap_value = 1.0f);

}  // namespace kpgan

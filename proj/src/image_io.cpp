#include "kpgan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace kpgan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels only");
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng failure on " + path.string());
  }
  png_init_io(png, file.get());
  const auto [h, w] = image.resolution;
  png_set_IHDR(png, info, w, h, 8, image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * image.channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < image.channels; ++ch) row[c * image.channels + ch] = to_byte(image.at(ch, r, c));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_png(const std::filesystem::path& path, const SkeletonImage& image) {
  Image gray(1, image.resolution);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) gray.data[i] = static_cast<float>(image.pixels[i]);
  write_png(path, gray);
}

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("read_png: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: libpng failure on " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  Image image(channels, {h, w});
  std::vector<std::uint8_t> row(png_get_rowbytes(png, info));
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < channels; ++ch) image.at(ch, r, c) = row[c * channels + ch] / 255.0f;
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

Image tile_images(const std::vector<Image>& tiles, int columns, float gap_value) {
  if (tiles.empty() || columns <= 0) throw std::invalid_argument("tile_images: nothing to tile");
  const int channels = tiles.front().channels;
  const auto [th, tw] = tiles.front().resolution;
  const int rows = (static_cast<int>(tiles.size()) + columns - 1) / columns;
  Image out(channels, {rows * (th + 1) - 1, columns * (tw + 1) - 1}, gap_value);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const auto& tile = tiles[i];
    if (tile.channels != channels || tile.resolution != tiles.front().resolution) {
      throw std::invalid_argument("tile_images: tiles differ in shape");
    }
    const int r0 = static_cast<int>(i) / columns * (th + 1);
    const int c0 = static_cast<int>(i) % columns * (tw + 1);
    for (int ch = 0; ch < channels; ++ch) {
      for (int r = 0; r < th; ++r) {
        for (int c = 0; c < tw; ++c) out.at(ch, r0 + r, c0 + c) = tile.at(ch, r, c);
      }
    }
  }
  return out;
}

}  // namespace kpgan

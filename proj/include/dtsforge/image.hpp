#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dtsforge/error.hpp"

namespace dtsforge {

/// Row-major 2D raster; pixel (x, y) lives at index y * width + x.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), pixels(checked_size(w, h), fill) {}

  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }

  T& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool same_shape(const auto& other) const { return width == other.width && height == other.height; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static std::size_t checked_size(int w, int h) {
    if (w <= 0 || h <= 0) throw InvalidArgument("image dimensions must be positive");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
};

using Mask2D = Image<std::uint8_t>;
using Gray8 = Image<std::uint8_t>;
using Gray16 = Image<std::uint16_t>;

struct Rgb8 {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb8&, const Rgb8&) = default;
};
using RgbImage = Image<Rgb8>;

/// Bilinear resize with pixel-center alignment and edge clamping.
/// A same-size request returns the input unchanged.
Image<float> resize_bilinear(const Image<float>& src, int width, int height);

/// Nearest-neighbor resize with pixel-center alignment.
Mask2D resize_nearest(const Mask2D& src, int width, int height);

// Netpbm I/O. 16-bit PGM samples are big-endian as the format requires.
void write_pgm(const Gray8& image, const std::filesystem::path& path);
void write_pgm16(const Gray16& image, const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

/// Reads an 8- or 16-bit binary PGM (P5). 8-bit samples are widened to 16 bits.
/// max_value receives the declared maxval.
Gray16 read_pgm(const std::filesystem::path& path, int* max_value = nullptr);
Gray8 read_pgm8(const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

}  // namespace dtsforge

#include "dtsforge/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace dtsforge {

namespace {

struct Axis {
  std::vector<int> lo, hi;
  std::vector<float> frac;
};

// Source sample positions for a pixel-center aligned resize along one axis.
Axis bilinear_axis(int src_len, int dst_len) {
  Axis axis;
  axis.lo.resize(dst_len);
  axis.hi.resize(dst_len);
  axis.frac.resize(dst_len);
  const double scale = static_cast<double>(src_len) / dst_len;
  for (int i = 0; i < dst_len; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
    const int lo = static_cast<int>(std::floor(s));
    axis.lo[i] = lo;
    axis.hi[i] = std::min(lo + 1, src_len - 1);
    axis.frac[i] = static_cast<float>(s - lo);
  }
  return axis;
}

std::string next_token(std::istream& in) {
  std::string token;
  for (;;) {
    const int c = in.peek();
    if (c == EOF) break;
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(in.get()));
  }
  return token;
}

struct NetpbmHeader {
  std::string magic;
  int width = 0, height = 0, max_value = 0;
};

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  NetpbmHeader h;
  h.magic = next_token(in);
  try {
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    h.max_value = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw FormatError("malformed netpbm header in " + path.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.max_value <= 0 || h.max_value > 65535)
    throw FormatError("invalid netpbm dimensions in " + path.string());
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return in;
}

}  // namespace

Image<float> resize_bilinear(const Image<float>& src, int width, int height) {
  if (src.empty()) throw InvalidArgument("resize of an empty image");
  if (width == src.width && height == src.height) return src;
  Image<float> dst(width, height);
  const Axis ax = bilinear_axis(src.width, width);
  const Axis ay = bilinear_axis(src.height, height);
  for (int y = 0; y < height; ++y) {
    const float fy = ay.frac[y];
    for (int x = 0; x < width; ++x) {
      const float fx = ax.frac[x];
      const float top = src.at(ax.lo[x], ay.lo[y]) * (1 - fx) + src.at(ax.hi[x], ay.lo[y]) * fx;
      const float bottom = src.at(ax.lo[x], ay.hi[y]) * (1 - fx) + src.at(ax.hi[x], ay.hi[y]) * fx;
      dst.at(x, y) = top * (1 - fy) + bottom * fy;
    }
  }
  return dst;
}

Mask2D resize_nearest(const Mask2D& src, int width, int height) {
  if (src.empty()) throw InvalidArgument("resize of an empty mask");
  Mask2D dst(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(src.height - 1, static_cast<int>((y + 0.5) * src.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(src.width - 1, static_cast<int>((x + 0.5) * src.width / width));
      dst.at(x, y) = src.at(sx, sy);
    }
  }
  return dst;
}

void write_pgm(const Gray8& image, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

void write_pgm16(const Gray16& image, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
  std::vector<unsigned char> bytes(image.size() * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(image.pixels[i] >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(image.pixels[i] & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing " + path.string());
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  for (const Rgb8& p : image.pixels) {
    const char rgb[3] = {static_cast<char>(p.r), static_cast<char>(p.g), static_cast<char>(p.b)};
    out.write(rgb, 3);
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

Gray16 read_pgm(const std::filesystem::path& path, int* max_value) {
  auto in = open_in(path);
  const NetpbmHeader h = read_header(in, path);
  if (h.magic != "P5") throw FormatError(path.string() + " is not a binary PGM");
  if (max_value) *max_value = h.max_value;
  Gray16 image(h.width, h.height);
  const std::size_t bytes_per_sample = h.max_value > 255 ? 2 : 1;
  std::vector<unsigned char> raw(image.size() * bytes_per_sample);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError("truncated PGM payload in " + path.string());
  for (std::size_t i = 0; i < image.size(); ++i) {
    image.pixels[i] = bytes_per_sample == 2
                          ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1])
                          : raw[i];
  }
  return image;
}

Gray8 read_pgm8(const std::filesystem::path& path) {
  int max_value = 0;
  const Gray16 wide = read_pgm(path, &max_value);
  if (max_value > 255) throw FormatError(path.string() + " is not an 8-bit PGM");
  Gray8 image(wide.width, wide.height);
  std::transform(wide.pixels.begin(), wide.pixels.end(), image.pixels.begin(),
                 [](std::uint16_t v) { return static_cast<std::uint8_t>(v); });
  return image;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const NetpbmHeader h = read_header(in, path);
  if (h.magic != "P6" || h.max_value != 255) throw FormatError(path.string() + " is not an 8-bit binary PPM");
  RgbImage image(h.width, h.height);
  std::vector<unsigned char> raw(image.size() * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw FormatError("truncated PPM payload in " + path.string());
  for (std::size_t i = 0; i < image.size(); ++i) image.pixels[i] = {raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]};
  return image;
}

}  // namespace dtsforge

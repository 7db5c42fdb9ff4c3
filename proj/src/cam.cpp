#include "dtsforge/cam.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "dtsforge/error.hpp"

namespace dtsforge {

using nlohmann::json;

ActivationMap::ActivationMap(int h_, int w_, int c_, double angle, std::string id)
    : h(h_), w(w_), c(c_), view_angle_deg(angle), patient_id(std::move(id)) {
  if (h <= 0 || w <= 0 || c <= 0) throw InvalidArgument("activation dims must be positive");
  values.assign(static_cast<std::size_t>(h) * w * c, 0.0f);
}

ActivationMap activation_from_image(const Image<float>& image, double view_angle_deg, std::string patient_id) {
  ActivationMap a(image.height, image.width, 1, view_angle_deg, std::move(patient_id));
  a.values = image.pixels;
  return a;
}

FeatureMask align_mask(const ProjectionImage& mask, int h, int w) {
  if (mask.kind != ImageKind::mask) throw InvalidArgument("align_mask needs a mask-kind image");
  if (mask.pixels.empty()) throw InvalidArgument("mask image is empty");
  Mask2D binary(mask.pixels.width, mask.pixels.height);
  for (std::size_t i = 0; i < binary.size(); ++i) binary.pixels[i] = mask.pixels.pixels[i] > 0.5f;
  return resize_nearest(binary, w, h);
}

ActivationMap refine(const ActivationMap& a, const FeatureMask& m) {
  if (m.width != a.w || m.height != a.h)
    throw InvalidArgument("mask is " + std::to_string(m.width) + "x" + std::to_string(m.height) +
                          ", activation is " + std::to_string(a.w) + "x" + std::to_string(a.h));
  ActivationMap out = a;
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x)
      if (!m.at(x, y))
        for (int k = 0; k < a.c; ++k) out.at(y, x, k) = 0.0f;
  return out;
}

Image<float> reduce_channels(const ActivationMap& a, ChannelReduce mode) {
  Image<float> out(a.w, a.h);
  for (int y = 0; y < a.h; ++y) {
    for (int x = 0; x < a.w; ++x) {
      double acc = mode == ChannelReduce::max ? -std::numeric_limits<double>::infinity() : 0.0;
      for (int k = 0; k < a.c; ++k)
        acc = mode == ChannelReduce::max ? std::max<double>(acc, a.at(y, x, k)) : acc + a.at(y, x, k);
      if (mode == ChannelReduce::mean) acc /= a.c;
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

Rgb8 jet(double heat) {
  auto channel = [heat](double center) {
    const double v = std::clamp(1.5 - std::abs(4.0 * heat - center), 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(255.0 * v));
  };
  return {channel(3.0), channel(2.0), channel(1.0)};
}

RgbImage render_overlay(const ActivationMap& a, const Gray8& base, ChannelReduce mode, const FeatureMask* mask) {
  if (mask && !mask->same_shape(base)) throw InvalidArgument("overlay mask must match the base image size");
  Image<float> heat = reduce_channels(a, mode);
  for (float& v : heat.pixels) v = std::max(v, 0.0f);
  heat = resize_bilinear(heat, base.width, base.height);

  RgbImage out(base.width, base.height);
  for (std::size_t i = 0; i < base.size(); ++i) out.pixels[i] = {base.pixels[i], base.pixels[i], base.pixels[i]};

  float lo = std::numeric_limits<float>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < heat.size(); ++i) {
    if (mask && !mask->pixels[i]) continue;
    lo = std::min(lo, heat.pixels[i]);
    hi = std::max(hi, heat.pixels[i]);
  }
  if (!(hi > lo)) return out;

  for (std::size_t i = 0; i < heat.size(); ++i) {
    const double h = std::clamp((heat.pixels[i] - lo) / static_cast<double>(hi - lo), 0.0, 1.0);
    if (h <= 0.0) continue;
    const Rgb8 color = jet(h);
    const double g = base.pixels[i];
    auto blend = [g](std::uint8_t c) { return static_cast<std::uint8_t>(std::lround(0.6 * g + 0.4 * c)); };
    out.pixels[i] = {blend(color.r), blend(color.g), blend(color.b)};
  }
  return out;
}

void write_activation(const std::filesystem::path& path, const ActivationMap& a) {
  if (a.values.size() != static_cast<std::size_t>(a.h) * a.w * a.c)
    throw InvalidArgument("activation payload does not match its dims");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  const json header{{"h", a.h}, {"w", a.w}, {"c", a.c}, {"patient_id", a.patient_id}, {"view_angle_deg", a.view_angle_deg}};
  out << header.dump() << '\n';
  std::vector<std::uint32_t> words(a.values.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = std::bit_cast<std::uint32_t>(a.values[i]);
    if constexpr (std::endian::native == std::endian::big) words[i] = __builtin_bswap32(words[i]);
  }
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!out) throw FormatError("failed writing " + path.string());
}

ActivationMap read_activation(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header line");
  ActivationMap a;
  try {
    const json header = json::parse(line);
    a = ActivationMap(header.at("h").get<int>(), header.at("w").get<int>(), header.at("c").get<int>(),
                      header.at("view_angle_deg").get<double>(), header.at("patient_id").get<std::string>());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::vector<std::uint32_t> words(a.values.size());
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(words.size() * 4))
    throw FormatError(path.string() + ": payload shorter than h*w*c floats");
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after payload");
  for (std::size_t i = 0; i < words.size(); ++i) {
    if constexpr (std::endian::native == std::endian::big) words[i] = __builtin_bswap32(words[i]);
    a.values[i] = std::bit_cast<float>(words[i]);
    if (!std::isfinite(a.values[i])) throw FormatError(path.string() + ": non-finite activation value");
  }
  return a;
}

}  // namespace dtsforge

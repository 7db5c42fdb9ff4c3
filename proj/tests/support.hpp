#pragma once

#include <cmath>
#include <cstdint>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "dtsforge/image.hpp"
#include "dtsforge/projection.hpp"
#include "dtsforge/random.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dtsforge_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// FNV-1a over raw bytes.
inline std::uint64_t checksum(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline dtsforge::Mask2D random_mask(dtsforge::Rng& rng, int w, int h, double p) {
  dtsforge::Mask2D m(w, h);
  for (auto& v : m.pixels) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

struct Ray {
  dtsforge::Vec3 source;
  dtsforge::Vec3 target;
};

/// Source and detector-pixel-center positions, derived directly from the geometry
/// convention: source at R(0, -sod, 0), pixel at R(u, oid, v), R a rotation about z.
inline Ray pixel_ray(const dtsforge::ProjectionGeometry& g, double angle_deg, int col, int row) {
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double u = (col + 0.5 - g.detector_pixels[0] / 2.0) * g.pixel_pitch_u();
  const double v = (g.detector_pixels[1] / 2.0 - row - 0.5) * g.pixel_pitch_v();
  auto rot = [&](double x, double y, double z) { return dtsforge::Vec3{x * c - y * s, x * s + y * c, z}; };
  return {rot(0.0, -g.sod_mm, 0.0), rot(u, g.oid_mm, v)};
}

/// Distance from point p to the infinite line through the ray.
inline double distance_to_line(const Ray& r, const dtsforge::Vec3& p) {
  double d[3], w[3], dd = 0.0, wd = 0.0, ww = 0.0;
  for (int a = 0; a < 3; ++a) {
    d[a] = r.target[a] - r.source[a];
    w[a] = p[a] - r.source[a];
    dd += d[a] * d[a];
    wd += w[a] * d[a];
    ww += w[a] * w[a];
  }
  return std::sqrt(std::max(0.0, ww - wd * wd / dd));
}

/// Chord length of a sphere along the ray's line.
inline double sphere_chord(const Ray& r, const dtsforge::Vec3& center, double radius) {
  const double d = distance_to_line(r, center);
  return d >= radius ? 0.0 : 2.0 * std::sqrt(radius * radius - d * d);
}

inline double relative_l2(const std::vector<float>& a, const std::vector<float>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
    den += static_cast<double>(b[i]) * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace testing_support

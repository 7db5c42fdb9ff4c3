#include "dtsforge/projection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "json.hpp"

#include "dtsforge/error.hpp"
#include "dtsforge/parallel.hpp"

namespace dtsforge {

using nlohmann::json;

void ProjectionGeometry::validate() const {
  if (!(sod_mm > 0.0) || !(sid_mm > 0.0) || !(oid_mm > 0.0)) throw InvalidArgument("SOD, SID and OID must be positive");
  if (std::abs(sid_mm - (sod_mm + oid_mm)) > 1e-9 * sid_mm)
    throw InvalidArgument("SID must equal SOD + OID (got SID " + std::to_string(sid_mm) + ", SOD + OID " +
                          std::to_string(sod_mm + oid_mm) + ")");
  if (!(detector_size_mm[0] > 0.0) || !(detector_size_mm[1] > 0.0)) throw InvalidArgument("detector size must be positive");
  if (detector_pixels[0] <= 0 || detector_pixels[1] <= 0) throw InvalidArgument("detector pixel counts must be positive");
  if (view_angles_deg.empty()) throw InvalidArgument("at least one view angle is required");
  std::set<double> seen;
  for (double a : view_angles_deg) {
    if (!std::isfinite(a)) throw InvalidArgument("view angles must be finite");
    if (!seen.insert(a).second) throw InvalidArgument("view angles must be distinct");
  }
}

double ProjectionGeometry::fan_angle_deg() const {
  return 2.0 * std::atan(0.5 * detector_size_mm[0] / sid_mm) * 180.0 / std::numbers::pi;
}

namespace {

json geometry_to_json(const ProjectionGeometry& g) {
  return json{{"sod_mm", g.sod_mm},
              {"sid_mm", g.sid_mm},
              {"oid_mm", g.oid_mm},
              {"detector_size_mm", g.detector_size_mm},
              {"detector_pixels", g.detector_pixels},
              {"view_angles_deg", g.view_angles_deg}};
}

ProjectionGeometry geometry_from_json(const json& j) {
  ProjectionGeometry g;
  try {
    g.sod_mm = j.value("sod_mm", g.sod_mm);
    g.sid_mm = j.value("sid_mm", g.sid_mm);
    g.oid_mm = j.value("oid_mm", g.oid_mm);
    g.detector_size_mm = j.value("detector_size_mm", g.detector_size_mm);
    g.detector_pixels = j.value("detector_pixels", g.detector_pixels);
    g.view_angles_deg = j.value("view_angles_deg", g.view_angles_deg);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed projection geometry: ") + e.what());
  }
  g.validate();
  return g;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

// Parametric range [t0, t1] where origin + t * dir is inside [lo, hi] on every axis.
bool clip_to_box(const Vec3& origin, const Vec3& dir, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < lo[a] || origin[a] > hi[a]) return false;
      continue;
    }
    double ta = (lo[a] - origin[a]) / dir[a];
    double tb = (hi[a] - origin[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return false;
  }
  return true;
}

inline double sample(const float* mu, int nx, int ny, int nz, std::size_t stride_y, std::size_t stride_z, double fx,
                     double fy, double fz) {
  fx = fx < 0.0 ? 0.0 : (fx > nx - 1 ? nx - 1 : fx);
  fy = fy < 0.0 ? 0.0 : (fy > ny - 1 ? ny - 1 : fy);
  fz = fz < 0.0 ? 0.0 : (fz > nz - 1 ? nz - 1 : fz);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
  const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
  const std::size_t sx = x0 + 1 < nx ? 1 : 0;
  const std::size_t sy = y0 + 1 < ny ? stride_y : 0;
  const std::size_t sz = z0 + 1 < nz ? stride_z : 0;
  const float* p = mu + x0 + stride_y * y0 + stride_z * z0;
  const double c00 = p[0] + tx * (p[sx] - p[0]);
  const double c10 = p[sy] + tx * (p[sy + sx] - p[sy]);
  const double c01 = p[sz] + tx * (p[sz + sx] - p[sz]);
  const double c11 = p[sz + sy] + tx * (p[sz + sy + sx] - p[sz + sy]);
  const double c0 = c00 + ty * (c10 - c00);
  const double c1 = c01 + ty * (c11 - c01);
  return c0 + tz * (c1 - c0);
}

constexpr int kBlock = 8;

// Per 8^3 block of voxels: 1 if any voxel the trilinear stencil can touch from a
// sample whose floor index lies in the block is nonzero. Samples in empty blocks
// contribute exactly zero and can be skipped.
struct Occupancy {
  int bx = 0, by = 0, bz = 0;
  std::vector<std::uint8_t> flags;

  explicit Occupancy(const AttenuationVolume& v) {
    const Dims3& d = v.geometry.dims;
    bx = (d[0] + kBlock - 1) / kBlock;
    by = (d[1] + kBlock - 1) / kBlock;
    bz = (d[2] + kBlock - 1) / kBlock;
    flags.assign(static_cast<std::size_t>(bx) * by * bz, 0);
    for (int k = 0; k < d[2]; ++k)
      for (int j = 0; j < d[1]; ++j)
        for (int i = 0; i < d[0]; ++i) {
          if (v.mu[v.geometry.index(i, j, k)] == 0.0f) continue;
          // Voxel (i, j, k) is read from floor indices i-1..i (likewise j, k).
          for (int kk = std::max(0, k - 1) / kBlock; kk <= k / kBlock; ++kk)
            for (int jj = std::max(0, j - 1) / kBlock; jj <= j / kBlock; ++jj)
              for (int ii = std::max(0, i - 1) / kBlock; ii <= i / kBlock; ++ii)
                flags[(static_cast<std::size_t>(kk) * by + jj) * bx + ii] = 1;
        }
  }

  bool occupied(int i, int j, int k) const {
    return flags[(static_cast<std::size_t>(k / kBlock) * by + j / kBlock) * bx + i / kBlock] != 0;
  }
};

// Parameter at which the ray leaves the block holding floor index (i, j, k).
double block_exit(const Vec3& q0, const Vec3& dq, int i, int j, int k) {
  const int idx[3] = {i, j, k};
  double t = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dq[a] == 0.0) continue;
    const double lo = static_cast<double>(idx[a] / kBlock * kBlock);
    const double edge = dq[a] > 0.0 ? lo + kBlock : lo;
    t = std::min(t, (edge - q0[a]) / dq[a]);
  }
  return t;
}

// Exact length of each pixel ray inside the union of voxel boxes with value 1.
Image<float> mask_path_lengths(const BinaryVolume& mask, const ProjectionGeometry& geometry, double angle_deg) {
  geometry.validate();
  const GridGeometry& g = mask.geometry();
  const int cols = geometry.detector_pixels[0];
  const int rows = geometry.detector_pixels[1];
  const double pu = geometry.pixel_pitch_u();
  const double pv = geometry.pixel_pitch_v();
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 source{geometry.sod_mm * s, -geometry.sod_mm * c, 0.0};
  const int n[3] = {g.dims[0], g.dims[1], g.dims[2]};
  const Vec3 lo{-0.5, -0.5, -0.5};
  const Vec3 hi{n[0] - 0.5, n[1] - 0.5, n[2] - 0.5};
  Vec3 q0;
  for (int a = 0; a < 3; ++a) q0[a] = (source[a] - g.origin[a]) / g.spacing[a];
  const std::uint8_t* m = mask.voxels().data();

  Image<float> out(cols, rows);
  parallel_for(static_cast<std::size_t>(rows), [&](std::size_t row) {
    const double v = (0.5 * rows - static_cast<double>(row) - 0.5) * pv;
    for (int col = 0; col < cols; ++col) {
      const double u = (col + 0.5 - 0.5 * cols) * pu;
      const Vec3 pixel{u * c - geometry.oid_mm * s, u * s + geometry.oid_mm * c, v};
      Vec3 dq{pixel[0] - source[0], pixel[1] - source[1], pixel[2] - source[2]};
      const double length = std::sqrt(dq[0] * dq[0] + dq[1] * dq[1] + dq[2] * dq[2]);
      for (int a = 0; a < 3; ++a) dq[a] /= length * g.spacing[a];
      double t0 = 0.0, t1 = length;
      double sum = 0.0;
      if (clip_to_box(q0, dq, lo, hi, t0, t1)) {
        const double tm = 0.5 * (t0 + t1);
        int idx[3], step[3];
        double next[3], delta[3];
        for (int a = 0; a < 3; ++a) {
          // Cell containing the ray just after entry; the midpoint breaks ties on faces.
          const double entry = q0[a] + t0 * dq[a];
          const double mid = q0[a] + tm * dq[a];
          idx[a] = std::clamp(static_cast<int>(std::floor((std::abs(entry - mid) < 1e-12 ? mid : entry) + 0.5)), 0,
                              n[a] - 1);
          if (dq[a] > 0.0) {
            step[a] = 1;
            next[a] = (idx[a] + 0.5 - q0[a]) / dq[a];
            delta[a] = 1.0 / dq[a];
          } else if (dq[a] < 0.0) {
            step[a] = -1;
            next[a] = (idx[a] - 0.5 - q0[a]) / dq[a];
            delta[a] = -1.0 / dq[a];
          } else {
            step[a] = 0;
            next[a] = delta[a] = std::numeric_limits<double>::infinity();
          }
        }
        double t = t0;
        while (t < t1) {
          const int a = next[0] <= next[1] ? (next[0] <= next[2] ? 0 : 2) : (next[1] <= next[2] ? 1 : 2);
          const double exit = std::min(next[a], t1);
          if (m[g.index(idx[0], idx[1], idx[2])]) sum += exit - t;
          t = exit;
          idx[a] += step[a];
          next[a] += delta[a];
          if (idx[a] < 0 || idx[a] >= n[a]) break;
        }
      }
      out.at(col, static_cast<int>(row)) = static_cast<float>(sum);
    }
  });
  return out;
}

}  // namespace

ProjectionGeometry load_geometry(const std::filesystem::path& path) { return geometry_from_json(read_json(path)); }

void save_geometry(const ProjectionGeometry& geometry, const std::filesystem::path& path) {
  geometry.validate();
  write_json(geometry_to_json(geometry), path);
}

AttenuationVolume AttenuationVolume::from_ct(const CtVolume& volume, const AttenuationModel& model) {
  if (!(model.mu_water_per_mm > 0.0)) throw InvalidArgument("mu_water must be positive");
  AttenuationVolume out{volume.geometry(), std::vector<float>(volume.voxels().size())};
  std::transform(volume.voxels().begin(), volume.voxels().end(), out.mu.begin(),
                 [&model](float hu) { return static_cast<float>(model.mu(hu)); });
  return out;
}

AttenuationVolume AttenuationVolume::from_mask(const BinaryVolume& mask) {
  return {mask.geometry(), std::vector<float>(mask.voxels().begin(), mask.voxels().end())};
}

Image<float> integrate_rays(const AttenuationVolume& volume, const ProjectionGeometry& geometry, double angle_deg) {
  geometry.validate();
  const GridGeometry& g = volume.geometry;
  g.validate();
  if (volume.mu.size() != g.voxel_count()) throw InvalidArgument("attenuation volume size does not match its grid");

  const int cols = geometry.detector_pixels[0];
  const int rows = geometry.detector_pixels[1];
  const double pu = geometry.pixel_pitch_u();
  const double pv = geometry.pixel_pitch_v();
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 source{geometry.sod_mm * s, -geometry.sod_mm * c, 0.0};
  const double step = 0.5 * std::min({g.spacing[0], g.spacing[1], g.spacing[2]});

  const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  const std::size_t stride_y = static_cast<std::size_t>(nx);
  const std::size_t stride_z = static_cast<std::size_t>(nx) * ny;
  const Vec3 lo{-0.5, -0.5, -0.5};
  const Vec3 hi{nx - 0.5, ny - 0.5, nz - 0.5};
  Vec3 q0;
  for (int a = 0; a < 3; ++a) q0[a] = (source[a] - g.origin[a]) / g.spacing[a];
  const float* mu = volume.mu.data();
  const Occupancy occupancy(volume);
  // Sample coordinates inside [0, d - 1) need no clamping and have both stencil neighbors.
  const bool fast_ok = nx > 1 && ny > 1 && nz > 1;
  const Vec3 inner_lo{0.0, 0.0, 0.0};
  const Vec3 inner_hi{std::nextafter(nx - 1.0, 0.0), std::nextafter(ny - 1.0, 0.0), std::nextafter(nz - 1.0, 0.0)};

  Image<float> out(cols, rows);
  parallel_for(static_cast<std::size_t>(rows), [&](std::size_t row) {
    const double v = (0.5 * rows - static_cast<double>(row) - 0.5) * pv;
    for (int col = 0; col < cols; ++col) {
      const double u = (col + 0.5 - 0.5 * cols) * pu;
      const Vec3 pixel{u * c - geometry.oid_mm * s, u * s + geometry.oid_mm * c, v};
      Vec3 dir{pixel[0] - source[0], pixel[1] - source[1], pixel[2] - source[2]};
      const double length = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      Vec3 dq;
      for (int a = 0; a < 3; ++a) {
        dir[a] /= length;
        dq[a] = dir[a] / g.spacing[a];
      }
      double t0 = 0.0, t1 = length;
      double sum = 0.0;
      if (clip_to_box(q0, dq, lo, hi, t0, t1)) {
        const auto k0 = static_cast<long>(std::floor(t0 / step));
        const auto k1 = static_cast<long>(std::ceil(t1 / step));
        // Full cells whose midpoints lie where no clamping is needed take the fast path.
        long f0 = k1, f1 = k1;
        double ta = t0, tb = t1;
        if (fast_ok && clip_to_box(q0, dq, inner_lo, inner_hi, ta, tb)) {
          f0 = std::max(static_cast<long>(std::ceil(t0 / step)), static_cast<long>(std::ceil(ta / step - 0.5)));
          f1 = std::min(static_cast<long>(std::floor(t1 / step)) - 1, static_cast<long>(std::floor(tb / step - 0.5)));
          if (f1 < f0) f0 = f1 = k1;
          else ++f1;
        }
        auto slow = [&](long k) {
          const double a = std::max(t0, k * step);
          const double b = std::min(t1, (k + 1) * step);
          if (b <= a) return;
          const double t = 0.5 * (a + b);
          sum += (b - a) * sample(mu, nx, ny, nz, stride_y, stride_z, q0[0] + t * dq[0], q0[1] + t * dq[1],
                                  q0[2] + t * dq[2]);
        };
        for (long k = k0; k < std::min(f0, k1); ++k) slow(k);
        double fast = 0.0;
        for (long k = f0; k < f1; ++k) {
          const double t = (k + 0.5) * step;
          const double fx = q0[0] + t * dq[0], fy = q0[1] + t * dq[1], fz = q0[2] + t * dq[2];
          const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
          if (!occupancy.occupied(x0, y0, z0)) {
            const double exit = block_exit(q0, dq, x0, y0, z0);
            k = std::max(k, static_cast<long>(std::floor(exit / step - 0.5)));
            continue;
          }
          const float tx = static_cast<float>(fx - x0), ty = static_cast<float>(fy - y0),
                      tz = static_cast<float>(fz - z0);
          const float* p = mu + x0 + stride_y * y0 + stride_z * z0;
          const float c00 = p[0] + tx * (p[1] - p[0]);
          const float c10 = p[stride_y] + tx * (p[stride_y + 1] - p[stride_y]);
          const float c01 = p[stride_z] + tx * (p[stride_z + 1] - p[stride_z]);
          const float c11 = p[stride_z + stride_y] + tx * (p[stride_z + stride_y + 1] - p[stride_z + stride_y]);
          const float c0 = c00 + ty * (c10 - c00);
          const float c1 = c01 + ty * (c11 - c01);
          fast += c0 + tz * (c1 - c0);
        }
        sum += fast * step;
        for (long k = std::max(f1, k0); k < k1; ++k) slow(k);
      }
      out.at(col, static_cast<int>(row)) = static_cast<float>(sum);
    }
  });
  return out;
}

ProjectionImage project_view(const CtVolume& volume, const ProjectionGeometry& geometry, double angle_deg,
                             const AttenuationModel& model) {
  const AttenuationVolume mu = AttenuationVolume::from_ct(volume, model);
  return {integrate_rays(mu, geometry, angle_deg), angle_deg, geometry, ImageKind::intensity};
}

std::vector<ProjectionImage> project_all_views(const CtVolume& volume, const ProjectionGeometry& geometry,
                                               const AttenuationModel& model) {
  geometry.validate();
  const AttenuationVolume mu = AttenuationVolume::from_ct(volume, model);
  std::vector<ProjectionImage> views;
  views.reserve(geometry.view_angles_deg.size());
  for (double angle : geometry.view_angles_deg)
    views.push_back({integrate_rays(mu, geometry, angle), angle, geometry, ImageKind::intensity});
  return views;
}

ProjectionImage project_binary_mask(const BinaryVolume& mask, const ProjectionGeometry& geometry, double angle_deg,
                                    double min_path_mm) {
  if (!(min_path_mm > 0.0)) throw InvalidArgument("minimum path length must be positive");
  Image<float> path = mask_path_lengths(mask, geometry, angle_deg);
  for (float& p : path.pixels) p = p > min_path_mm ? 1.0f : 0.0f;
  return {std::move(path), angle_deg, geometry, ImageKind::mask};
}

Gray8 to_display(const ProjectionImage& image, int out_width, int out_height) {
  if (image.kind != ImageKind::intensity) throw InvalidArgument("display rendering needs an intensity image");
  if (out_width <= 0 || out_height <= 0) throw InvalidArgument("display size must be positive");
  Image<float> negated = image.pixels;
  for (float& p : negated.pixels) p = -p;
  const Image<float> sized = resize_bilinear(negated, out_width, out_height);

  const auto [lo_it, hi_it] = std::minmax_element(sized.pixels.begin(), sized.pixels.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<int> bins(sized.size(), 0);
  if (hi > lo) {
    for (std::size_t i = 0; i < sized.size(); ++i)
      bins[i] = std::min(255, static_cast<int>((sized.pixels[i] - lo) / (hi - lo) * 256.0));
  }
  std::array<std::size_t, 256> histogram{};
  for (int b : bins) ++histogram[b];
  std::array<std::uint8_t, 256> level{};
  std::size_t cumulative = 0;
  const double n = static_cast<double>(sized.size());
  for (int b = 0; b < 256; ++b) {
    cumulative += histogram[b];
    level[b] = static_cast<std::uint8_t>(std::lround(255.0 * cumulative / n));
  }
  Gray8 out(out_width, out_height);
  for (std::size_t i = 0; i < bins.size(); ++i) out.pixels[i] = level[bins[i]];
  return out;
}

std::string angle_tag(double angle_deg) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+g", angle_deg);
  return buf;
}

namespace {
std::filesystem::path sidecar_for(const std::filesystem::path& pgm_path) {
  std::filesystem::path p = pgm_path;
  p.replace_extension(".json");
  return p;
}
}  // namespace

void save_projection(const ProjectionImage& image, const std::filesystem::path& pgm_path) {
  json side;
  side["view_angle_deg"] = image.view_angle_deg;
  side["geometry"] = geometry_to_json(image.geometry);
  if (image.kind == ImageKind::mask) {
    Gray8 out(image.pixels.width, image.pixels.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = image.pixels.pixels[i] > 0.5f ? 255 : 0;
    write_pgm(out, pgm_path);
    side["kind"] = "mask";
    side["scale"] = 1.0 / 255.0;
  } else {
    const float max_value = *std::max_element(image.pixels.pixels.begin(), image.pixels.pixels.end());
    const double scale = max_value > 0.0f ? max_value / 65535.0 : 1.0;
    Gray16 out(image.pixels.width, image.pixels.height);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double q = std::max(0.0, image.pixels.pixels[i] / scale);
      out.pixels[i] = static_cast<std::uint16_t>(std::min(65535L, std::lround(q)));
    }
    write_pgm16(out, pgm_path);
    side["kind"] = "intensity";
    side["scale"] = scale;
  }
  write_json(side, sidecar_for(pgm_path));
}

ProjectionImage load_projection(const std::filesystem::path& pgm_path) {
  const json side = read_json(sidecar_for(pgm_path));
  ProjectionImage image;
  double scale = 1.0;
  std::string kind;
  try {
    image.view_angle_deg = side.at("view_angle_deg").get<double>();
    scale = side.at("scale").get<double>();
    kind = side.at("kind").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError(sidecar_for(pgm_path).string() + ": " + e.what());
  }
  image.geometry = geometry_from_json(side.value("geometry", json::object()));
  const Gray16 raw = read_pgm(pgm_path);
  image.pixels = Image<float>(raw.width, raw.height);
  if (kind == "mask") {
    image.kind = ImageKind::mask;
    for (std::size_t i = 0; i < raw.size(); ++i) image.pixels.pixels[i] = raw.pixels[i] > 0 ? 1.0f : 0.0f;
  } else if (kind == "intensity") {
    image.kind = ImageKind::intensity;
    for (std::size_t i = 0; i < raw.size(); ++i) image.pixels.pixels[i] = static_cast<float>(raw.pixels[i] * scale);
  } else {
    throw FormatError(sidecar_for(pgm_path).string() + ": unknown image kind '" + kind + "'");
  }
  return image;
}

}  // namespace dtsforge

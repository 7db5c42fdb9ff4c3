#include "dtsforge/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "dtsforge/error.hpp"
#include "dtsforge/metrics.hpp"
#include "dtsforge/parallel.hpp"
#include "dtsforge/random.hpp"

namespace dtsforge {

using nlohmann::json;

namespace {
constexpr double kPi = std::numbers::pi;
double sq(double v) { return v * v; }
}  // namespace

double Ellipsoid::level(const Vec3& p) const {
  return sq((p[0] - center[0]) / radii[0]) + sq((p[1] - center[1]) / radii[1]) + sq((p[2] - center[2]) / radii[2]);
}

bool Sphere::contains(const Vec3& p) const {
  return sq(p[0] - center[0]) + sq(p[1] - center[1]) + sq(p[2] - center[2]) <= sq(radius);
}

bool BedShell::contains(const Vec3& p) const {
  const double dx = p[0] - axis_x, dy = p[1] - axis_y;
  const double r = std::hypot(dx, dy);
  if (r < inner_radius || r > inner_radius + thickness) return false;
  return std::abs(std::atan2(dx, dy)) <= half_angle_deg * kPi / 180.0;
}

bool Block::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a)
    if (std::abs(p[a] - center[a]) > half[a]) return false;
  return true;
}

namespace {

// Points on the ellipsoid surface, roughly uniform in the two surface angles.
std::vector<Vec3> surface_samples(const Vec3& c, const Vec3& r, int n_theta = 48, int n_phi = 96) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(n_theta + 1) * n_phi);
  for (int i = 0; i <= n_theta; ++i) {
    const double theta = kPi * i / n_theta;
    for (int j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * kPi * j / n_phi;
      pts.push_back({c[0] + r[0] * std::sin(theta) * std::cos(phi), c[1] + r[1] * std::sin(theta) * std::sin(phi),
                     c[2] + r[2] * std::cos(theta)});
    }
  }
  return pts;
}

// Boundary of the bed's cross-section (inner arc, outer arc, end caps) in the xy plane.
std::vector<std::array<double, 2>> bed_outline(const BedShell& b, int n = 720) {
  std::vector<std::array<double, 2>> pts;
  const double half = b.half_angle_deg * kPi / 180.0;
  for (int i = 0; i <= n; ++i) {
    const double a = -half + 2.0 * half * i / n;
    for (double r : {b.inner_radius, b.inner_radius + b.thickness})
      pts.push_back({b.axis_x + r * std::sin(a), b.axis_y + r * std::cos(a)});
  }
  for (int i = 0; i <= 20; ++i) {
    const double r = b.inner_radius + b.thickness * i / 20.0;
    for (double a : {-half, half}) pts.push_back({b.axis_x + r * std::sin(a), b.axis_y + r * std::cos(a)});
  }
  return pts;
}

}  // namespace

void PhantomSpec::validate() const {
  grid.validate();
  for (const auto* e : {&body, &lungs[0], &lungs[1]})
    for (double r : e->radii)
      if (!(r > 0.0)) throw InvalidArgument("ellipsoid radii must be positive");

  for (std::size_t i = 0; i < lungs.size(); ++i)
    for (const auto& p : surface_samples(lungs[i].center, lungs[i].radii))
      if (!body.contains(p)) throw InvalidArgument("lung " + std::to_string(i) + " extends outside the body");

  for (std::size_t i = 0; i < lesions.size(); ++i) {
    const Sphere& s = lesions[i];
    if (!(s.radius > 0.0)) throw InvalidArgument("lesion radius must be positive");
    const auto pts = surface_samples(s.center, {s.radius, s.radius, s.radius}, 24, 48);
    const bool inside = std::any_of(lungs.begin(), lungs.end(), [&](const Ellipsoid& lung) {
      return std::all_of(pts.begin(), pts.end(), [&](const Vec3& p) { return lung.contains(p); });
    });
    if (!inside) throw InvalidArgument("lesion " + std::to_string(i) + " is not entirely inside one lung");
  }

  for (std::size_t i = 0; i < occluders.size(); ++i) {
    const Block& b = occluders[i];
    for (int sx = -1; sx <= 1; sx += 2)
      for (int sy = -1; sy <= 1; sy += 2)
        for (int sz = -1; sz <= 1; sz += 2)
          if (!body.contains({b.center[0] + sx * b.half[0], b.center[1] + sy * b.half[1], b.center[2] + sz * b.half[2]}))
            throw InvalidArgument("occluder " + std::to_string(i) + " extends outside the body");
  }

  if (!(bed.inner_radius > 0.0) || !(bed.thickness > 0.0) || !(bed.half_angle_deg > 0.0))
    throw InvalidArgument("bed shell parameters must be positive");
  // The widest body cross-section is at the body's center z; the bed is a z-extrusion.
  const double z = body.center[2];
  double gap = std::numeric_limits<double>::infinity();
  std::vector<std::array<double, 2>> body_ring;
  for (int i = 0; i < 3600; ++i) {
    const double a = 2.0 * kPi * i / 3600;
    body_ring.push_back({body.center[0] + body.radii[0] * std::cos(a), body.center[1] + body.radii[1] * std::sin(a)});
  }
  for (const auto& q : bed_outline(bed)) {
    if (body.contains({q[0], q[1], z})) throw InvalidArgument("bed intersects the body");
    for (const auto& p : body_ring) gap = std::min(gap, std::hypot(p[0] - q[0], p[1] - q[1]));
  }
  for (const auto& p : body_ring)
    if (bed.contains({p[0], p[1], z})) throw InvalidArgument("bed intersects the body");
  if (gap < min_bed_gap_mm)
    throw InvalidArgument("bed is " + std::to_string(gap) + " mm from the body, minimum is 5 mm");

  if ((label == PhantomLabel::abnormal) != !lesions.empty())
    throw InvalidArgument("label must be abnormal exactly when lesions are present");
}

namespace {

json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

json ellipsoid_json(const Ellipsoid& e) { return {{"center", vec_json(e.center)}, {"radii", vec_json(e.radii)}, {"hu", e.hu}}; }

Ellipsoid ellipsoid_from(const json& j) {
  return {j.at("center").get<Vec3>(), j.at("radii").get<Vec3>(), j.at("hu").get<double>()};
}

}  // namespace

void save_phantom_spec(const PhantomSpec& spec, const std::filesystem::path& path) {
  json j;
  j["seed"] = spec.seed;
  j["dims"] = spec.grid.dims;
  j["spacing_mm"] = vec_json(spec.grid.spacing);
  j["origin_mm"] = vec_json(spec.grid.origin);
  j["body"] = ellipsoid_json(spec.body);
  j["lungs"] = json::array({ellipsoid_json(spec.lungs[0]), ellipsoid_json(spec.lungs[1])});
  j["bed"] = {{"axis_x", spec.bed.axis_x},
              {"axis_y", spec.bed.axis_y},
              {"inner_radius", spec.bed.inner_radius},
              {"thickness", spec.bed.thickness},
              {"half_angle_deg", spec.bed.half_angle_deg},
              {"hu", spec.bed.hu}};
  j["lesions"] = json::array();
  for (const auto& s : spec.lesions)
    j["lesions"].push_back({{"center", vec_json(s.center)}, {"radius", s.radius}, {"hu", s.hu}});
  j["occluders"] = json::array();
  for (const auto& b : spec.occluders)
    j["occluders"].push_back({{"center", vec_json(b.center)}, {"half", vec_json(b.half)}, {"hu", b.hu}});
  j["label"] = spec.label == PhantomLabel::abnormal ? "abnormal" : "normal";
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << std::setprecision(17) << j.dump(2) << '\n';
  if (!out) throw FormatError("failed writing " + path.string());
}

PhantomSpec load_phantom_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  PhantomSpec spec;
  try {
    const json j = json::parse(in);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("dims")) {
      spec.grid.dims = j.at("dims").get<Dims3>();
      spec.grid.spacing = j.at("spacing_mm").get<Vec3>();
      spec.grid.origin = j.contains("origin_mm") ? j.at("origin_mm").get<Vec3>()
                                                 : GridGeometry::centered(spec.grid.dims, spec.grid.spacing).origin;
    }
    if (j.contains("body")) spec.body = ellipsoid_from(j.at("body"));
    if (j.contains("lungs")) {
      const auto& l = j.at("lungs");
      if (l.size() != 2) throw FormatError(path.string() + ": exactly two lungs are required");
      spec.lungs = {ellipsoid_from(l[0]), ellipsoid_from(l[1])};
    }
    if (j.contains("bed")) {
      const auto& b = j.at("bed");
      spec.bed = {b.at("axis_x").get<double>(),       b.at("axis_y").get<double>(),
                  b.at("inner_radius").get<double>(), b.at("thickness").get<double>(),
                  b.at("half_angle_deg").get<double>(), b.at("hu").get<double>()};
    }
    for (const auto& s : j.value("lesions", json::array()))
      spec.lesions.push_back({s.at("center").get<Vec3>(), s.at("radius").get<double>(), s.value("hu", 50.0)});
    for (const auto& b : j.value("occluders", json::array()))
      spec.occluders.push_back({b.at("center").get<Vec3>(), b.at("half").get<Vec3>(), b.at("hu").get<double>()});
    const std::string label = j.value("label", spec.lesions.empty() ? "normal" : "abnormal");
    if (label != "normal" && label != "abnormal") throw FormatError(path.string() + ": unknown label " + label);
    spec.label = label == "abnormal" ? PhantomLabel::abnormal : PhantomLabel::normal;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

Phantom generate(const PhantomSpec& spec) {
  spec.validate();
  const GridGeometry& g = spec.grid;
  std::vector<float> hu(g.voxel_count(), static_cast<float>(kAirHu));
  std::vector<std::uint8_t> subject(g.voxel_count(), 0), lung(g.voxel_count(), 0);

  parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < g.dims[1]; ++j) {
      for (int i = 0; i < g.dims[0]; ++i) {
        const Vec3 p = g.center_of(i, j, k);
        const std::size_t idx = g.index(i, j, k);
        double v = kAirHu;
        if (spec.body.contains(p)) {
          v = spec.body.hu;
          subject[idx] = 1;
        }
        for (const auto& l : spec.lungs) {
          if (l.contains(p)) {
            v = l.hu;
            lung[idx] = 1;
          }
        }
        for (const auto& s : spec.lesions)
          if (s.contains(p)) v = s.hu;
        for (const auto& b : spec.occluders)
          if (b.contains(p)) v = b.hu;
        if (spec.bed.contains(p)) v = spec.bed.hu;
        hu[idx] = static_cast<float>(v);
      }
    }
  });
  return {CtVolume(g, std::move(hu)), BinaryVolume(g, std::move(subject)), BinaryVolume(g, std::move(lung)),
          spec.label};
}

PhantomSpec random_spec(std::uint64_t seed, PhantomLabel label, const CohortOptions& options) {
  Rng rng(seed);
  PhantomSpec s;
  s.seed = seed;
  s.grid = options.grid;
  s.label = label;

  const double rx = rng.uniform(130.0, 145.0), ry = rng.uniform(88.0, 100.0);
  const double cy = rng.uniform(-14.0, -6.0);
  s.body = {{rng.uniform(-4.0, 4.0), cy, 0.0}, {rx, ry, 600.0}, 0.0};

  const double lung_x = rx * rng.uniform(0.43, 0.46);
  const double lung_y = cy - rng.uniform(3.0, 7.0);
  const Vec3 lung_r{rx * rng.uniform(0.28, 0.31), ry * rng.uniform(0.57, 0.62), rng.uniform(56.0, 64.0)};
  s.lungs = {Ellipsoid{{s.body.center[0] - lung_x, lung_y, rng.uniform(-4.0, 4.0)}, lung_r, -800.0},
             Ellipsoid{{s.body.center[0] + lung_x, lung_y, rng.uniform(-4.0, 4.0)}, lung_r, -800.0}};

  const double gap = rng.uniform(8.0, 16.0);
  s.bed.inner_radius = rng.uniform(380.0, 420.0);
  s.bed.thickness = rng.uniform(8.0, 12.0);
  s.bed.half_angle_deg = rng.uniform(18.0, 21.0);
  s.bed.axis_x = s.body.center[0];
  s.bed.axis_y = cy + ry + gap - s.bed.inner_radius;

  const Ellipsoid& side = s.lungs[rng.below(2)];
  const Vec3 spot{side.center[0] + rng.uniform(-6.0, 6.0), side.center[1] + rng.uniform(-5.0, 5.0),
                  side.center[2] + rng.uniform(-15.0, 15.0)};
  if (label == PhantomLabel::abnormal) s.lesions.push_back({spot, 10.0, 50.0});
  if (rng.bernoulli(options.occluded_fraction)) {
    // Centred on the frontal ray from the source through the spot, so the block's
    // shadow is concentric with the lesion's in that view.
    const Vec3 source{0.0, -options.source_distance_mm, 0.0};
    const double t = (spot[1] - options.block_depth_mm - source[1]) / (spot[1] - source[1]);
    const Vec3 c{source[0] + t * (spot[0] - source[0]), spot[1] - options.block_depth_mm,
                 source[2] + t * (spot[2] - source[2])};
    s.occluders.push_back({c, {12.0, 6.0, 12.0}, 30000.0});
  }
  s.validate();
  return s;
}

void write_phantom(const Phantom& phantom, const PhantomSpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_phantom_spec(spec, dir / "spec.json");
  save_volume(phantom.volume, dir / "ct.json");
  save_binary_volume(phantom.subject_truth, dir / "subject_truth.json");
  save_binary_volume(phantom.lung_truth, dir / "lung_truth.json");
}

std::vector<CohortEntry> generate_cohort(const std::filesystem::path& out_dir, int n_normal, int n_abnormal,
                                         std::uint64_t seed, const CohortOptions& options) {
  if (n_normal < 0 || n_abnormal < 0) throw InvalidArgument("cohort counts must be non-negative");
  std::filesystem::create_directories(out_dir);
  Rng rng(seed);
  std::vector<CohortEntry> entries;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_normal + n_abnormal; ++i) {
    std::ostringstream id;
    id << 'p' << std::setw(3) << std::setfill('0') << i;
    const PhantomLabel label = i < n_normal ? PhantomLabel::normal : PhantomLabel::abnormal;
    entries.push_back({id.str(), label, out_dir / id.str()});
    seeds.push_back(rng.next());
  }
  parallel_for(entries.size(), [&](std::size_t i) {
    const PhantomSpec spec = random_spec(seeds[i], entries[i].label, options);
    write_phantom(generate(spec), spec, entries[i].dir);
  });
  LabelMap truth;
  for (const auto& e : entries) truth[e.patient_id] = e.label == PhantomLabel::abnormal ? 1 : 0;
  write_labels(out_dir / "truth.csv", truth);
  return entries;
}

CtVolume sphere_volume(const GridGeometry& grid, const Vec3& center, double radius, double hu_inside,
                       double hu_outside, int samples) {
  grid.validate();
  if (!(radius > 0.0) || samples < 1) throw InvalidArgument("sphere radius and sample count must be positive");
  std::vector<float> hu(grid.voxel_count(), static_cast<float>(hu_outside));
  const double r2 = radius * radius;
  const double half_diag = 0.5 * std::sqrt(sq(grid.spacing[0]) + sq(grid.spacing[1]) + sq(grid.spacing[2]));
  parallel_for(static_cast<std::size_t>(grid.dims[2]), [&](std::size_t kz) {
    const int k = static_cast<int>(kz);
    for (int j = 0; j < grid.dims[1]; ++j) {
      for (int i = 0; i < grid.dims[0]; ++i) {
        const Vec3 p = grid.center_of(i, j, k);
        const double d = std::sqrt(sq(p[0] - center[0]) + sq(p[1] - center[1]) + sq(p[2] - center[2]));
        double frac;
        if (d + half_diag <= radius) {
          frac = 1.0;
        } else if (d - half_diag >= radius) {
          frac = 0.0;
        } else {
          int inside = 0;
          for (int a = 0; a < samples; ++a)
            for (int b = 0; b < samples; ++b)
              for (int c = 0; c < samples; ++c) {
                const double qx = p[0] + ((a + 0.5) / samples - 0.5) * grid.spacing[0] - center[0];
                const double qy = p[1] + ((b + 0.5) / samples - 0.5) * grid.spacing[1] - center[1];
                const double qz = p[2] + ((c + 0.5) / samples - 0.5) * grid.spacing[2] - center[2];
                inside += qx * qx + qy * qy + qz * qz <= r2;
              }
          frac = static_cast<double>(inside) / (samples * samples * samples);
        }
        hu[grid.index(i, j, k)] = static_cast<float>(hu_outside + frac * (hu_inside - hu_outside));
      }
    }
  });
  return CtVolume(grid, std::move(hu));
}

}  // namespace dtsforge

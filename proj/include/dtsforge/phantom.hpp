#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dtsforge/volume.hpp"

namespace dtsforge {

struct Ellipsoid {
  Vec3 center{};
  Vec3 radii{1.0, 1.0, 1.0};
  double hu = 0.0;

  /// sum((p - c)^2 / r^2); <= 1 inside.
  double level(const Vec3& p) const;
  bool contains(const Vec3& p) const { return level(p) <= 1.0; }
};

struct Sphere {
  Vec3 center{};
  double radius = 10.0;
  double hu = 50.0;

  bool contains(const Vec3& p) const;
};

/// Curved patient tray: the part of a z-aligned cylindrical shell (axis through
/// (axis_x, axis_y)) within half_angle_deg of the +y (posterior) direction.
struct BedShell {
  double axis_x = 0.0;
  double axis_y = -305.0;
  double inner_radius = 400.0;
  double thickness = 10.0;
  double half_angle_deg = 20.0;
  double hu = 300.0;

  bool contains(const Vec3& p) const;
};

/// Axis-aligned box, used for dense blocks that shadow a lesion in some views.
struct Block {
  Vec3 center{};
  Vec3 half{12.0, 6.0, 12.0};
  double hu = 30000.0;

  bool contains(const Vec3& p) const;
};

enum class PhantomLabel { normal, abnormal };

struct PhantomSpec {
  std::uint64_t seed = 0;
  GridGeometry grid = GridGeometry::centered({200, 180, 64}, {1.5, 1.5, 2.5});
  Ellipsoid body{{0.0, -10.0, 0.0}, {140.0, 95.0, 600.0}, 0.0};
  std::array<Ellipsoid, 2> lungs{Ellipsoid{{-63.0, -15.0, 0.0}, {42.0, 57.0, 60.0}, -800.0},
                                 Ellipsoid{{63.0, -15.0, 0.0}, {42.0, 57.0, 60.0}, -800.0}};
  BedShell bed{};
  std::vector<Sphere> lesions;
  std::vector<Block> occluders;
  PhantomLabel label = PhantomLabel::normal;

  /// Lungs inside the body, each lesion inside one lung, bed at least min_bed_gap_mm
  /// from the body, occluders inside the body, label abnormal iff lesions exist.
  /// Containment is checked on dense surface samples.
  void validate() const;

  static constexpr double min_bed_gap_mm = 5.0;
};

PhantomSpec load_phantom_spec(const std::filesystem::path& path);
void save_phantom_spec(const PhantomSpec& spec, const std::filesystem::path& path);

struct Phantom {
  CtVolume volume;
  BinaryVolume subject_truth;  // body ellipsoid
  BinaryVolume lung_truth;     // union of the lung ellipsoids
  PhantomLabel label;
};

/// Voxelizes the spec at voxel centers. Painting order: air, body, lungs, lesions,
/// occluders, bed.
Phantom generate(const PhantomSpec& spec);

struct CohortOptions {
  GridGeometry grid = PhantomSpec{}.grid;
  /// Fraction of abnormal phantoms whose lesion gets a dense block between it and the
  /// frontal-view source. Normal phantoms receive a block with the same probability
  /// at a random lung position, so block presence carries no label information.
  double occluded_fraction = 1.0;
  /// Frontal source position used to aim the block, and how far anterior to the
  /// lesion center the block sits.
  double source_distance_mm = 541.0;
  double block_depth_mm = 50.0;
};

/// Jittered anatomy drawn from seed. Abnormal specs carry one 20 mm lesion.
PhantomSpec random_spec(std::uint64_t seed, PhantomLabel label, const CohortOptions& options = {});

struct CohortEntry {
  std::string patient_id;
  PhantomLabel label;
  std::filesystem::path dir;
};

/// Writes <out_dir>/<id>/{spec,ct,subject_truth,lung_truth}.json (+ .raw payloads)
/// and <out_dir>/truth.csv. Normal patients come first; ids are p000, p001, ...
std::vector<CohortEntry> generate_cohort(const std::filesystem::path& out_dir, int n_normal, int n_abnormal,
                                         std::uint64_t seed, const CohortOptions& options = {});

/// Writes the files of one phantom into dir.
void write_phantom(const Phantom& phantom, const PhantomSpec& spec, const std::filesystem::path& dir);

/// Sphere with partial-volume edges: each voxel holds the HU mix given by the
/// fraction of samples^3 sub-voxel points inside the sphere.
CtVolume sphere_volume(const GridGeometry& grid, const Vec3& center, double radius, double hu_inside,
                       double hu_outside = kAirHu, int samples = 4);

}  // namespace dtsforge

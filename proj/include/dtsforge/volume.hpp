#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dtsforge {

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<int, 3>;

/// Placement of a voxel grid in patient space (mm, isocenter at the world origin).
/// Voxel (i, j, k) has its center at origin + (i, j, k) * spacing. Axes are
/// x = lateral, y = anterior-posterior, z = superior-inferior; axial slices have fixed k.
struct GridGeometry {
  Dims3 dims{1, 1, 1};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{0.0, 0.0, 0.0};

  std::size_t voxel_count() const;
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  Vec3 center_of(int i, int j, int k) const {
    return {origin[0] + i * spacing[0], origin[1] + j * spacing[1], origin[2] + k * spacing[2]};
  }
  /// Throws InvalidArgument unless dims are positive and spacing positive and finite.
  void validate() const;

  /// Grid of the given dims and spacing whose voxel centers are symmetric about the isocenter.
  static GridGeometry centered(Dims3 dims, Vec3 spacing);

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

inline constexpr double kAirHu = -1000.0;

/// Scalar CT volume in Hounsfield units, stored x-fastest. Immutable after construction.
class CtVolume {
 public:
  CtVolume(GridGeometry geometry, std::vector<float> voxels, double background_fill = kAirHu);

  const GridGeometry& geometry() const { return geometry_; }
  const Dims3& dims() const { return geometry_.dims; }
  const Vec3& spacing() const { return geometry_.spacing; }
  const Vec3& origin() const { return geometry_.origin; }
  double background_fill() const { return background_fill_; }
  const std::vector<float>& voxels() const { return voxels_; }
  float at(int i, int j, int k) const { return voxels_[geometry_.index(i, j, k)]; }

  friend bool operator==(const CtVolume&, const CtVolume&) = default;

 private:
  GridGeometry geometry_;
  std::vector<float> voxels_;
  double background_fill_;
};

/// Binary volume (masks); every voxel is 0 or 1.
class BinaryVolume {
 public:
  BinaryVolume(GridGeometry geometry, std::vector<std::uint8_t> voxels);

  const GridGeometry& geometry() const { return geometry_; }
  const Dims3& dims() const { return geometry_.dims; }
  const std::vector<std::uint8_t>& voxels() const { return voxels_; }
  std::uint8_t at(int i, int j, int k) const { return voxels_[geometry_.index(i, j, k)]; }
  std::size_t count() const;

  friend bool operator==(const BinaryVolume&, const BinaryVolume&) = default;

 private:
  GridGeometry geometry_;
  std::vector<std::uint8_t> voxels_;
};

/// Reads a JSON header and its sibling raw little-endian f32 payload.
CtVolume load_volume(const std::filesystem::path& header_path);

/// Writes header_path and a sibling ".raw" payload. The round trip is bit-exact.
void save_volume(const CtVolume& volume, const std::filesystem::path& header_path);

/// Binary masks share the volume format; loading rejects values other than 0 and 1.
BinaryVolume load_binary_volume(const std::filesystem::path& header_path);
void save_binary_volume(const BinaryVolume& volume, const std::filesystem::path& header_path);

/// Path of the raw payload that save_volume writes next to header_path.
std::filesystem::path payload_path_for(const std::filesystem::path& header_path);

/// Trilinear resampling onto an isotropic grid with the same physical center.
/// Output dims are round-half-up(dims * spacing / target_mm), at least 1. Samples
/// outside the input voxel cells take the background fill. A volume that is already
/// at the target spacing is returned unchanged.
CtVolume resample_isotropic(const CtVolume& volume, double target_mm = 1.0);

/// Resamples a mask by trilinear interpolation and re-binarizes at 0.5.
BinaryVolume resample_isotropic(const BinaryVolume& volume, double target_mm = 1.0);

/// Voxel is 1 iff its HU value is >= threshold_hu.
BinaryVolume binarize(const CtVolume& volume, double threshold_hu);

/// Voxels where mask is 0 take the volume's background fill; others are kept.
CtVolume apply_mask(const CtVolume& volume, const BinaryVolume& mask);

}  // namespace dtsforge

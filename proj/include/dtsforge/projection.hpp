#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "dtsforge/image.hpp"
#include "dtsforge/volume.hpp"

namespace dtsforge {

/// Cone-beam source/detector placement.
///
/// Convention: at angle 0 the point source sits anterior to the subject at
/// (0, -sod, 0) and the flat detector is posterior, centered at (0, +oid, 0), with
/// detector columns along +x and rows running from +z (row 0) to -z. A view at angle
/// theta rotates the source-detector pair by theta about the z (superior-inferior)
/// axis through the isocenter; positive angles move the source toward +x.
struct ProjectionGeometry {
  double sod_mm = 541.0;
  double sid_mm = 949.0;
  double oid_mm = 408.0;
  std::array<double, 2> detector_size_mm{500.0, 500.0};  // width (columns), height (rows)
  std::array<int, 2> detector_pixels{512, 512};          // columns, rows
  std::vector<double> view_angles_deg{-60.0, -30.0, 0.0, 30.0, 60.0};

  /// Rejects non-positive distances, sid != sod + oid, an empty or repeated view list.
  void validate() const;

  double pixel_pitch_u() const { return detector_size_mm[0] / detector_pixels[0]; }
  double pixel_pitch_v() const { return detector_size_mm[1] / detector_pixels[1]; }
  /// Full fan angle subtended by the detector width at the source.
  double fan_angle_deg() const;
  double magnification() const { return sid_mm / sod_mm; }

  friend bool operator==(const ProjectionGeometry&, const ProjectionGeometry&) = default;
};

ProjectionGeometry load_geometry(const std::filesystem::path& path);
void save_geometry(const ProjectionGeometry& geometry, const std::filesystem::path& path);

/// HU to linear attenuation: mu_water * (1 + HU/1000), zero below -1000 HU.
struct AttenuationModel {
  double mu_water_per_mm = 0.02;

  double mu(double hu) const {
    const double m = mu_water_per_mm * (1.0 + hu / 1000.0);
    return m > 0.0 ? m : 0.0;
  }
};

/// Linear attenuation coefficients (1/mm) on a voxel grid. Zero outside the grid.
struct AttenuationVolume {
  GridGeometry geometry;
  std::vector<float> mu;

  static AttenuationVolume from_ct(const CtVolume& volume, const AttenuationModel& model);
  static AttenuationVolume from_mask(const BinaryVolume& mask);
};

enum class ImageKind { intensity, mask };

struct ProjectionImage {
  Image<float> pixels;  // line integrals (intensity) or {0,1} (mask)
  double view_angle_deg = 0.0;
  ProjectionGeometry geometry;
  ImageKind kind = ImageKind::intensity;
};

/// Integral of mu along the ray from the source to each detector pixel center.
/// Rays are sampled every min(spacing)/2 mm on a grid anchored at the source, using
/// trilinear interpolation; each sample is weighted by its overlap with the volume.
Image<float> integrate_rays(const AttenuationVolume& volume, const ProjectionGeometry& geometry, double angle_deg);

ProjectionImage project_view(const CtVolume& volume, const ProjectionGeometry& geometry, double angle_deg,
                             const AttenuationModel& model = {});

/// One image per geometry view angle, in list order.
std::vector<ProjectionImage> project_all_views(const CtVolume& volume, const ProjectionGeometry& geometry,
                                               const AttenuationModel& model = {});

/// Pixel is 1 iff the ray's intersection length with the union of voxel boxes
/// whose value is 1 exceeds min_path_mm (exact, no interpolation).
ProjectionImage project_binary_mask(const BinaryVolume& mask, const ProjectionGeometry& geometry, double angle_deg,
                                    double min_path_mm = 1.0);

/// Radiograph-style 8-bit rendering: negated line integrals, bilinear resize, then
/// 256-bin histogram equalization where bin b maps to round(255 * cdf(b) / N).
Gray8 to_display(const ProjectionImage& image, int out_width = 512, int out_height = 512);

/// File stem used for a view, e.g. "+30" or "-60".
std::string angle_tag(double angle_deg);

/// Stores an intensity image as 16-bit PGM plus a JSON sidecar carrying the scale
/// (value = sample * scale), angle, kind and geometry. Mask images are stored as
/// 8-bit PGM with 0/255 samples. The sidecar sits next to the PGM with a .json suffix.
void save_projection(const ProjectionImage& image, const std::filesystem::path& pgm_path);
ProjectionImage load_projection(const std::filesystem::path& pgm_path);

}  // namespace dtsforge

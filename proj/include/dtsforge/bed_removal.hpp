#pragma once

#include "dtsforge/image.hpp"
#include "dtsforge/volume.hpp"

namespace dtsforge {

/// Axial-slice subject mask (1 = subject).
using SliceMask = Mask2D;

struct BedRemovalConfig {
  double threshold_hu = -500.0;  // midway between air and water
  int median_kernel = 5;
  int erode_radius = 2;
  int dilate_radius = 2;

  void validate() const;
};

/// Stage 1: pixel is 1 iff HU >= threshold.
SliceMask threshold_slice(const Image<float>& slice, const BedRemovalConfig& cfg);

/// Stage 2: binary median filter, then erosion, then dilation, all with square
/// windows and replicate-edge padding.
SliceMask denoise_binary(const SliceMask& mask, const BedRemovalConfig& cfg);

/// Stage 3: the 8-connected foreground component whose hole-filled area is largest,
/// returned with its holes filled. Ties go to the component met first in raster order.
SliceMask largest_component_mask(const SliceMask& mask);

struct BedRemovalResult {
  CtVolume subject;     // voxels outside the mask set to the background fill
  BinaryVolume mask;    // stacked per-slice subject masks
};

/// Stages 1-4 applied independently to every axial slice.
BedRemovalResult strip_bed(const CtVolume& volume, const BedRemovalConfig& cfg = {});

/// Axial slice k as a 2D image (x across, y down).
Image<float> axial_slice(const CtVolume& volume, int k);

}  // namespace dtsforge

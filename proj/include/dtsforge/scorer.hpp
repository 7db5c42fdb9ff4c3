#pragma once

#include <string>

#include "dtsforge/ensemble.hpp"
#include "dtsforge/projection.hpp"

namespace dtsforge {

/// Deterministic per-view lesion detector used in place of a trained network.
///
/// Box means of half-width inner_half_mm are compared along four directions (the two
/// axes and the two diagonals): d = centre - (side_a + side_b) / 2, with the side boxes
/// side_offset_mm away on either side. The response is min(d) - anisotropy_weight *
/// (max(d) - min(d)) over the valid directions, so a compact blob brighter than its
/// surround scores high while linear ramps score zero and edges and ridges score below
/// zero. A direction is valid when neither side box comes within saturation_margin_mm of
/// a saturated pixel (line integral >= saturation, where the detector is starved and
/// nothing behind can be seen). Lengths are in detector millimetres.
///
/// A pixel is eligible when its inner box lies inside the lung mask, every side box lies
/// inside the image, no saturated pixel lies within inner_half_mm + saturation_margin_mm
/// and at least min_directions directions are valid. With peak the largest eligible
/// response, prob_abnormal = 1 / (1 + exp(-(peak - response_cutoff) / response_width)),
/// and 0 when no pixel is eligible.
struct ScorerConfig {
  double inner_half_mm = 6.0;
  double side_offset_mm = 24.0;
  double anisotropy_weight = 1.0;
  double response_cutoff = 0.1;
  double response_width = 0.01;
  double saturation = 6.0;
  double saturation_margin_mm = 8.0;
  int min_directions = 3;
  double decision_cutoff = kDefaultCutoff;

  void validate() const;
};

/// Blob response map, same size as the image; 0 where fewer than min_directions are valid.
Image<float> lesion_response(const ProjectionImage& image, const ScorerConfig& cfg = {});

/// Pixels the scorer counts (1) given an optional lung mask of the same size.
Mask2D eligible_pixels(const ProjectionImage& image, const ProjectionImage* lung_mask, const ScorerConfig& cfg = {});

ViewPrediction threshold_scorer(const ProjectionImage& image, const ScorerConfig& cfg = {},
                                const std::string& patient_id = {});
ViewPrediction threshold_scorer(const ProjectionImage& image, const ProjectionImage& lung_mask,
                                const ScorerConfig& cfg = {}, const std::string& patient_id = {});

}  // namespace dtsforge

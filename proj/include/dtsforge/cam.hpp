#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dtsforge/image.hpp"
#include "dtsforge/projection.hpp"

namespace dtsforge {

/// h x w x c activation tensor, channel fastest: value (y, x, k) at (y * w + x) * c + k.
struct ActivationMap {
  int h = 0, w = 0, c = 0;
  std::vector<float> values;
  double view_angle_deg = 0.0;
  std::string patient_id;

  ActivationMap() = default;
  ActivationMap(int h, int w, int c, double view_angle_deg = 0.0, std::string patient_id = {});

  float& at(int y, int x, int k) { return values[(static_cast<std::size_t>(y) * w + x) * c + k]; }
  float at(int y, int x, int k) const { return values[(static_cast<std::size_t>(y) * w + x) * c + k]; }

  friend bool operator==(const ActivationMap&, const ActivationMap&) = default;
};

/// Single-channel map from a 2D image (width -> w, height -> h).
ActivationMap activation_from_image(const Image<float>& image, double view_angle_deg = 0.0,
                                    std::string patient_id = {});

/// Spatial lung mask for an activation map: width w, height h, values {0,1}.
using FeatureMask = Mask2D;

/// Nearest-neighbor resize of a projected mask to h x w.
FeatureMask align_mask(const ProjectionImage& mask, int h, int w);

/// out(y, x, k) = a(y, x, k) * m(y, x) for every channel.
ActivationMap refine(const ActivationMap& a, const FeatureMask& m);

enum class ChannelReduce { mean, max };

/// Collapses channels to a w x h image.
Image<float> reduce_channels(const ActivationMap& a, ChannelReduce mode);

/// Heat overlay on an 8-bit base image.
///
/// Channels are reduced, negative values clipped to 0, the map is bilinearly resized
/// to the base, then min-max normalized over the pixels where mask is 1 (all pixels
/// when mask is null) and clamped to [0, 1]. Pixels with heat 0 keep the base gray;
/// the rest are blended as 0.6 * base + 0.4 * jet(heat). An all-zero map returns the
/// base unchanged.
RgbImage render_overlay(const ActivationMap& a, const Gray8& base, ChannelReduce mode = ChannelReduce::mean,
                        const FeatureMask* mask = nullptr);

/// Jet colormap, heat in [0, 1].
Rgb8 jet(double heat);

/// One JSON header line {h, w, c, patient_id, view_angle_deg} followed by
/// h * w * c little-endian f32 values in (y, x, k) order, channel fastest.
void write_activation(const std::filesystem::path& path, const ActivationMap& a);
ActivationMap read_activation(const std::filesystem::path& path);

}  // namespace dtsforge

#include "dtsforge/scorer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "dtsforge/error.hpp"

namespace dtsforge {

void ScorerConfig::validate() const {
  if (!(inner_half_mm > 0.0) || !(side_offset_mm > inner_half_mm))
    throw InvalidArgument("scorer boxes need 0 < inner half-width < side offset");
  if (!(anisotropy_weight >= 0.0)) throw InvalidArgument("anisotropy weight must be non-negative");
  if (!(response_width > 0.0)) throw InvalidArgument("response width must be positive");
  if (!(saturation_margin_mm >= 0.0)) throw InvalidArgument("saturation margin must be non-negative");
  if (min_directions < 1 || min_directions > 4) throw InvalidArgument("min_directions must lie in [1, 4]");
  if (!(decision_cutoff >= 0.0 && decision_cutoff <= 1.0)) throw InvalidArgument("decision cutoff must lie in [0, 1]");
}

namespace {

// Summed-area table with a zero first row and column.
class Integral {
 public:
  template <typename T>
  explicit Integral(const Image<T>& img) : w_(img.width), h_(img.height), s_((w_ + 1) * (h_ + 1), 0.0) {
    for (int y = 0; y < h_; ++y) {
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += static_cast<double>(img.at(x, y));
        s_[idx(x + 1, y + 1)] = s_[idx(x + 1, y)] + row;
      }
    }
  }

  // Sum over the clipped box [x0, x1] x [y0, y1]; area receives the clipped pixel count.
  double box(int x0, int y0, int x1, int y1, long* area = nullptr) const {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, w_ - 1);
    y1 = std::min(y1, h_ - 1);
    if (x1 < x0 || y1 < y0) {
      if (area) *area = 0;
      return 0.0;
    }
    if (area) *area = static_cast<long>(x1 - x0 + 1) * (y1 - y0 + 1);
    return s_[idx(x1 + 1, y1 + 1)] - s_[idx(x0, y1 + 1)] - s_[idx(x1 + 1, y0)] + s_[idx(x0, y0)];
  }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w_ + 1) + x; }
  int w_, h_;
  std::vector<double> s_;
};

// Box geometry in pixels along x (columns) and y (rows).
struct Footprint {
  int half_x, half_y;                   // inner box half-widths
  std::array<std::array<int, 2>, 4> dir;  // side box displacement per direction
  int reach_x, reach_y;                 // farthest side box edge
  int margin_x, margin_y;               // saturation exclusion half-widths
};

Footprint footprint(const ProjectionImage& image, const ScorerConfig& cfg) {
  const double pu = image.geometry.detector_size_mm[0] / image.pixels.width;
  const double pv = image.geometry.detector_size_mm[1] / image.pixels.height;
  auto px = [](double mm, double pitch) { return std::max(1, static_cast<int>(std::lround(mm / pitch))); };
  Footprint f{};
  f.half_x = px(cfg.inner_half_mm, pu);
  f.half_y = px(cfg.inner_half_mm, pv);
  const int ox = std::max(f.half_x + 1, px(cfg.side_offset_mm, pu));
  const int oy = std::max(f.half_y + 1, px(cfg.side_offset_mm, pv));
  const int qx = std::max(f.half_x + 1, px(cfg.side_offset_mm / std::numbers::sqrt2, pu));
  const int qy = std::max(f.half_y + 1, px(cfg.side_offset_mm / std::numbers::sqrt2, pv));
  f.dir = {{{ox, 0}, {0, oy}, {qx, qy}, {qx, -qy}}};
  f.reach_x = std::max(ox, qx) + f.half_x;
  f.reach_y = std::max(oy, qy) + f.half_y;
  f.margin_x = f.half_x + static_cast<int>(std::lround(cfg.saturation_margin_mm / pu));
  f.margin_y = f.half_y + static_cast<int>(std::lround(cfg.saturation_margin_mm / pv));
  return f;
}

Mask2D saturated_pixels(const ProjectionImage& image, const ScorerConfig& cfg) {
  Mask2D out(image.pixels.width, image.pixels.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = image.pixels.pixels[i] >= cfg.saturation;
  return out;
}

// Directional second differences at one pixel plus which directions are valid.
struct Directions {
  std::array<double, 4> d{};
  std::array<bool, 4> valid{};
  int n_valid = 0;

  double response(double weight) const {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int k = 0; k < 4; ++k) {
      if (!valid[k]) continue;
      lo = std::min(lo, d[k]);
      hi = std::max(hi, d[k]);
    }
    return lo - weight * (hi - lo);
  }
};

class DirectionProbe {
 public:
  DirectionProbe(const ProjectionImage& image, const ScorerConfig& cfg)
      : fp_(dtsforge::footprint(image, cfg)), w_(image.pixels.width), h_(image.pixels.height), values_(image.pixels),
        saturated_(saturated_pixels(image, cfg)) {}

  const Footprint& footprint() const { return fp_; }

  Directions at(int x, int y) const {
    Directions out;
    const double centre = mean(x, y);
    for (int k = 0; k < 4; ++k) {
      const auto [dx, dy] = fp_.dir[k];
      out.d[k] = centre - 0.5 * (mean(x - dx, y - dy) + mean(x + dx, y + dy));
      out.valid[k] = clear(x - dx, y - dy) && clear(x + dx, y + dy);
      out.n_valid += out.valid[k];
    }
    return out;
  }

  bool centre_clear(int x, int y) const {
    return saturated_.box(x - fp_.margin_x, y - fp_.margin_y, x + fp_.margin_x, y + fp_.margin_y) == 0.0;
  }

 private:
  double mean(int cx, int cy) const {
    long area = 0;
    const double s = values_.box(cx - fp_.half_x, cy - fp_.half_y, cx + fp_.half_x, cy + fp_.half_y, &area);
    return area > 0 ? s / static_cast<double>(area) : 0.0;
  }

  // Side box centre inside the image with no saturated pixel within the margin.
  bool clear(int cx, int cy) const {
    return cx >= 0 && cy >= 0 && cx < w_ && cy < h_ && centre_clear(cx, cy);
  }

  Footprint fp_;
  int w_, h_;
  Integral values_, saturated_;
};

void check_intensity(const ProjectionImage& image) {
  if (image.kind != ImageKind::intensity) throw InvalidArgument("scorer needs an intensity image");
}

}  // namespace

Image<float> lesion_response(const ProjectionImage& image, const ScorerConfig& cfg) {
  cfg.validate();
  check_intensity(image);
  const DirectionProbe probe(image, cfg);
  Image<float> out(image.pixels.width, image.pixels.height);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const Directions d = probe.at(x, y);
      out.at(x, y) = d.n_valid >= cfg.min_directions ? static_cast<float>(d.response(cfg.anisotropy_weight)) : 0.0f;
    }
  }
  return out;
}

Mask2D eligible_pixels(const ProjectionImage& image, const ProjectionImage* lung_mask, const ScorerConfig& cfg) {
  cfg.validate();
  check_intensity(image);
  const int w = image.pixels.width, h = image.pixels.height;
  Mask2D lung(w, h, 1);
  if (lung_mask) {
    if (lung_mask->kind != ImageKind::mask) throw InvalidArgument("lung mask must be a mask-kind image");
    if (!lung_mask->pixels.same_shape(image.pixels)) throw InvalidArgument("lung mask and image differ in size");
    for (std::size_t i = 0; i < lung.size(); ++i) lung.pixels[i] = lung_mask->pixels.pixels[i] > 0.5f;
  }
  const DirectionProbe probe(image, cfg);
  const Footprint& fp = probe.footprint();
  const double inner_area = static_cast<double>(2 * fp.half_x + 1) * (2 * fp.half_y + 1);
  const Integral lung_sum(lung);
  Mask2D out(w, h);
  for (int y = fp.reach_y; y < h - fp.reach_y; ++y) {
    for (int x = fp.reach_x; x < w - fp.reach_x; ++x) {
      out.at(x, y) = lung_sum.box(x - fp.half_x, y - fp.half_y, x + fp.half_x, y + fp.half_y) == inner_area &&
                     probe.centre_clear(x, y) && probe.at(x, y).n_valid >= cfg.min_directions;
    }
  }
  return out;
}

namespace {

ViewPrediction score(const ProjectionImage& image, const ProjectionImage* lung_mask, const ScorerConfig& cfg,
                     const std::string& patient_id) {
  const Image<float> response = lesion_response(image, cfg);
  const Mask2D eligible = eligible_pixels(image, lung_mask, cfg);
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < eligible.size(); ++i)
    if (eligible.pixels[i]) peak = std::max(peak, static_cast<double>(response.pixels[i]));
  const double prob =
      std::isfinite(peak) ? 1.0 / (1.0 + std::exp(-(peak - cfg.response_cutoff) / cfg.response_width)) : 0.0;
  return {patient_id, image.view_angle_deg, prob, prob >= cfg.decision_cutoff ? 1 : 0, cfg.decision_cutoff};
}

}  // namespace

ViewPrediction threshold_scorer(const ProjectionImage& image, const ScorerConfig& cfg, const std::string& patient_id) {
  return score(image, nullptr, cfg, patient_id);
}

ViewPrediction threshold_scorer(const ProjectionImage& image, const ProjectionImage& lung_mask,
                                const ScorerConfig& cfg, const std::string& patient_id) {
  return score(image, &lung_mask, cfg, patient_id);
}

}  // namespace dtsforge

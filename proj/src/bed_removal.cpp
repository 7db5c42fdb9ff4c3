#include "dtsforge/bed_removal.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#include "dtsforge/error.hpp"
#include "dtsforge/parallel.hpp"

namespace dtsforge {

void BedRemovalConfig::validate() const {
  if (median_kernel <= 0 || median_kernel % 2 == 0) throw InvalidArgument("median kernel must be odd and positive");
  if (erode_radius < 0 || dilate_radius < 0) throw InvalidArgument("morphology radii must be non-negative");
}

SliceMask threshold_slice(const Image<float>& slice, const BedRemovalConfig& cfg) {
  SliceMask mask(slice.width, slice.height);
  std::transform(slice.pixels.begin(), slice.pixels.end(), mask.pixels.begin(),
                 [t = cfg.threshold_hu](float hu) { return hu >= t ? 1 : 0; });
  return mask;
}

namespace {

// Per-pixel count of ones in a (2r+1)^2 window, replicate-edge padding.
std::vector<int> window_counts(const SliceMask& m, int r) {
  const int w = m.width, h = m.height;
  std::vector<int> rows(m.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int d = -r; d <= r; ++d) s += m.at(std::clamp(x + d, 0, w - 1), y);
      rows[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  std::vector<int> out(m.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int s = 0;
      for (int d = -r; d <= r; ++d) s += rows[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  }
  return out;
}

// Binary erosion is min over the window (all ones), dilation is max (any one).
SliceMask morph(const SliceMask& m, int r, bool erode) {
  if (r == 0) return m;
  const auto counts = window_counts(m, r);
  const int full = (2 * r + 1) * (2 * r + 1);
  SliceMask out(m.width, m.height);
  for (std::size_t i = 0; i < counts.size(); ++i) out.pixels[i] = erode ? counts[i] == full : counts[i] > 0;
  return out;
}

}  // namespace

SliceMask denoise_binary(const SliceMask& mask, const BedRemovalConfig& cfg) {
  cfg.validate();
  const int r = cfg.median_kernel / 2;
  const int majority = (cfg.median_kernel * cfg.median_kernel + 1) / 2;
  const auto counts = window_counts(mask, r);
  SliceMask median(mask.width, mask.height);
  for (std::size_t i = 0; i < counts.size(); ++i) median.pixels[i] = counts[i] >= majority;
  return morph(morph(median, cfg.erode_radius, true), cfg.dilate_radius, false);
}

SliceMask largest_component_mask(const SliceMask& mask) {
  const int w = mask.width, h = mask.height;
  SliceMask result(w, h);
  std::vector<int> label(mask.size(), 0);
  std::vector<int> stack;

  struct Box {
    int x0, y0, x1, y1;
  };
  std::vector<Box> boxes;

  // 8-connected labelling.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t seed = static_cast<std::size_t>(y) * w + x;
      if (!mask.pixels[seed] || label[seed]) continue;
      const int id = static_cast<int>(boxes.size()) + 1;
      Box box{x, y, x, y};
      label[seed] = id;
      stack.assign(1, static_cast<int>(seed));
      while (!stack.empty()) {
        const int p = stack.back();
        stack.pop_back();
        const int px = p % w, py = p / w;
        box.x0 = std::min(box.x0, px);
        box.x1 = std::max(box.x1, px);
        box.y0 = std::min(box.y0, py);
        box.y1 = std::max(box.y1, py);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = px + dx, ny = py + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
            if (mask.pixels[q] && !label[q]) {
              label[q] = id;
              stack.push_back(static_cast<int>(q));
            }
          }
        }
      }
      boxes.push_back(box);
    }
  }
  if (boxes.empty()) return result;

  // Filled region of component `id`: everything in its box (padded by one pixel) that
  // the 4-connected outside flood cannot reach. `filled` is indexed in padded-box space.
  auto fill_component = [&](int id, std::vector<std::uint8_t>& reached, int& bw, int& bh) {
    const Box& b = boxes[id - 1];
    bw = b.x1 - b.x0 + 3;
    bh = b.y1 - b.y0 + 3;
    reached.assign(static_cast<std::size_t>(bw) * bh, 0);
    auto is_wall = [&](int bx, int by) {
      const int x = bx + b.x0 - 1, y = by + b.y0 - 1;
      if (x < 0 || y < 0 || x >= w || y >= h) return false;
      return label[static_cast<std::size_t>(y) * w + x] == id;
    };
    stack.assign(1, 0);
    reached[0] = 1;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      const int px = p % bw, py = p / bw;
      constexpr int kDx[4] = {1, -1, 0, 0};
      constexpr int kDy[4] = {0, 0, 1, -1};
      for (int n = 0; n < 4; ++n) {
        const int nx = px + kDx[n], ny = py + kDy[n];
        if (nx < 0 || ny < 0 || nx >= bw || ny >= bh) continue;
        const std::size_t q = static_cast<std::size_t>(ny) * bw + nx;
        if (reached[q] || is_wall(nx, ny)) continue;
        reached[q] = 1;
        stack.push_back(static_cast<int>(q));
      }
    }
    return static_cast<long>(reached.size()) - static_cast<long>(std::count(reached.begin(), reached.end(), 1));
  };

  std::vector<std::uint8_t> reached;
  int bw = 0, bh = 0;
  int best = 0;
  long best_area = -1;
  for (int id = 1; id <= static_cast<int>(boxes.size()); ++id) {
    const long area = fill_component(id, reached, bw, bh);
    if (area > best_area) {
      best_area = area;
      best = id;
    }
  }

  fill_component(best, reached, bw, bh);
  const Box& b = boxes[best - 1];
  for (int by = 1; by < bh - 1; ++by)
    for (int bx = 1; bx < bw - 1; ++bx)
      if (!reached[static_cast<std::size_t>(by) * bw + bx]) result.at(bx + b.x0 - 1, by + b.y0 - 1) = 1;
  return result;
}

Image<float> axial_slice(const CtVolume& volume, int k) {
  const Dims3& d = volume.dims();
  Image<float> slice(d[0], d[1]);
  const float* src = volume.voxels().data() + volume.geometry().index(0, 0, k);
  std::copy(src, src + slice.size(), slice.pixels.begin());
  return slice;
}

BedRemovalResult strip_bed(const CtVolume& volume, const BedRemovalConfig& cfg) {
  cfg.validate();
  const Dims3& d = volume.dims();
  const std::size_t slice_size = static_cast<std::size_t>(d[0]) * d[1];
  std::vector<std::uint8_t> mask_bits(volume.voxels().size());
  std::vector<float> subject = volume.voxels();
  const auto fill = static_cast<float>(volume.background_fill());

  parallel_for(static_cast<std::size_t>(d[2]), [&](std::size_t k) {
    const Image<float> slice = axial_slice(volume, static_cast<int>(k));
    const SliceMask m = largest_component_mask(denoise_binary(threshold_slice(slice, cfg), cfg));
    std::copy(m.pixels.begin(), m.pixels.end(), mask_bits.begin() + static_cast<std::ptrdiff_t>(k * slice_size));
    for (std::size_t i = 0; i < slice_size; ++i)
      if (!m.pixels[i]) subject[k * slice_size + i] = fill;
  });

  return {CtVolume(volume.geometry(), std::move(subject), volume.background_fill()),
          BinaryVolume(volume.geometry(), std::move(mask_bits))};
}

}  // namespace dtsforge

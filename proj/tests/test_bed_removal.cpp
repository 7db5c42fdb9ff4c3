#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>

#include "dtsforge/bed_removal.hpp"
#include "dtsforge/error.hpp"
#include "dtsforge/metrics.hpp"
#include "dtsforge/phantom.hpp"
#include "support.hpp"

using namespace dtsforge;

namespace {

// Brute-force window ops with replicate-edge padding.
int window_ones(const SliceMask& m, int x, int y, int r) {
  int n = 0;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      n += m.at(std::clamp(x + dx, 0, m.width - 1), std::clamp(y + dy, 0, m.height - 1));
  return n;
}

SliceMask oracle_denoise(const SliceMask& m, const BedRemovalConfig& cfg) {
  const int r = cfg.median_kernel / 2;
  const int area = cfg.median_kernel * cfg.median_kernel;
  SliceMask med(m.width, m.height), ero(m.width, m.height), dil(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) med.at(x, y) = 2 * window_ones(m, x, y, r) > area;
  const int re = cfg.erode_radius, rd = cfg.dilate_radius;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) ero.at(x, y) = window_ones(med, x, y, re) == (2 * re + 1) * (2 * re + 1);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) dil.at(x, y) = window_ones(ero, x, y, rd) > 0;
  return dil;
}

// Labels 8-connected components; returns the label image and the component count.
std::vector<int> label8(const SliceMask& m, int& count) {
  std::vector<int> lab(m.size(), 0);
  count = 0;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y) || lab[y * m.width + x]) continue;
      ++count;
      std::deque<std::pair<int, int>> q{{x, y}};
      lab[y * m.width + x] = count;
      while (!q.empty()) {
        auto [cx, cy] = q.front();
        q.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
            if (m.at(nx, ny) && !lab[ny * m.width + nx]) {
              lab[ny * m.width + nx] = count;
              q.push_back({nx, ny});
            }
          }
      }
    }
  return lab;
}

// Component `id` with holes filled: pixels not 4-reachable from outside the image
// through non-component pixels.
SliceMask filled(const std::vector<int>& lab, int w, int h, int id) {
  const int pw = w + 2, ph = h + 2;
  std::vector<char> seen(static_cast<std::size_t>(pw) * ph, 0);
  auto wall = [&](int px, int py) {
    const int x = px - 1, y = py - 1;
    return x >= 0 && y >= 0 && x < w && y < h && lab[y * w + x] == id;
  };
  std::deque<std::pair<int, int>> q{{0, 0}};
  seen[0] = 1;
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop_front();
    const int nb[4][2] = {{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}};
    for (auto& n : nb) {
      if (n[0] < 0 || n[1] < 0 || n[0] >= pw || n[1] >= ph) continue;
      if (seen[n[1] * pw + n[0]] || wall(n[0], n[1])) continue;
      seen[n[1] * pw + n[0]] = 1;
      q.push_back({n[0], n[1]});
    }
  }
  SliceMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.at(x, y) = !seen[(y + 1) * pw + x + 1];
  return out;
}

SliceMask oracle_largest(const SliceMask& m) {
  int count = 0;
  const auto lab = label8(m, count);
  SliceMask best(m.width, m.height);
  long best_area = -1;
  for (int id = 1; id <= count; ++id) {
    auto f = filled(lab, m.width, m.height, id);
    const long area = std::count(f.pixels.begin(), f.pixels.end(), 1);
    if (area > best_area) {
      best_area = area;
      best = std::move(f);
    }
  }
  return best;
}

SliceMask disc(int w, int h, double cx, double cy, double r, SliceMask m = {}) {
  if (m.empty()) m = SliceMask(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.at(x, y) = 1;
  return m;
}

}  // namespace

TEST(Threshold, CheckerboardAndBoundaries) {
  Image<float> slice(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) slice.at(x, y) = (x + y) % 2 ? 0.0f : -1000.0f;
  const auto m = threshold_slice(slice, {});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(m.at(x, y), (x + y) % 2);

  EXPECT_EQ(std::count(m.pixels.begin(), m.pixels.end(), 1), 8);
  const auto air = threshold_slice(Image<float>(5, 5, -1000.0f), {});
  EXPECT_EQ(std::count(air.pixels.begin(), air.pixels.end(), 1), 0);
  const auto at = threshold_slice(Image<float>(5, 5, -500.0f), {});
  EXPECT_EQ(std::count(at.pixels.begin(), at.pixels.end(), 1), 25);
}

TEST(Denoise, ConfigValidation) {
  BedRemovalConfig cfg;
  cfg.median_kernel = 4;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.median_kernel = 5;
  cfg.erode_radius = -1;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(Denoise, IsolatedPixelRemoved) {
  SliceMask m(15, 15);
  m.at(7, 7) = 1;
  const auto out = denoise_binary(m, {});
  EXPECT_EQ(std::count(out.pixels.begin(), out.pixels.end(), 1), 0);
}

TEST(Denoise, AllOnesStaysAllOnes) {
  SliceMask m(12, 9, 1);
  EXPECT_EQ(denoise_binary(m, {}), m);
}

TEST(Denoise, SolidBlockPreservedUpToBoundaryRing) {
  SliceMask m(140, 140);
  for (int y = 20; y < 120; ++y)
    for (int x = 20; x < 120; ++x) m.at(x, y) = 1;
  BedRemovalConfig cfg;
  const auto out = denoise_binary(m, cfg);
  const int ring = cfg.erode_radius + cfg.dilate_radius;
  for (int y = 0; y < 140; ++y)
    for (int x = 0; x < 140; ++x) {
      const bool deep_in = x >= 20 + ring && x < 120 - ring && y >= 20 + ring && y < 120 - ring;
      const bool far_out = x < 20 - ring || x >= 120 + ring || y < 20 - ring || y >= 120 + ring;
      if (deep_in) { EXPECT_EQ(out.at(x, y), 1); }
      if (far_out) { EXPECT_EQ(out.at(x, y), 0); }
    }
  EXPECT_EQ(out, oracle_denoise(m, cfg));
}

TEST(DenoiseProperty, MatchesBruteForceOracle) {
  dtsforge::Rng rng(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int w = 3 + static_cast<int>(rng.below(30)), h = 3 + static_cast<int>(rng.below(30));
    const auto m = testing_support::random_mask(rng, w, h, rng.uniform(0.2, 0.8));
    BedRemovalConfig cfg;
    cfg.median_kernel = 1 + 2 * static_cast<int>(rng.below(4));
    cfg.erode_radius = static_cast<int>(rng.below(4));
    cfg.dilate_radius = static_cast<int>(rng.below(4));
    ASSERT_EQ(denoise_binary(m, cfg), oracle_denoise(m, cfg)) << "trial " << trial;
  }
}

TEST(LargestComponent, TwoDiscsKeepsTheLarger) {
  auto m = disc(200, 120, 60, 60, 40);
  m = disc(200, 120, 160, 60, 10, m);
  const auto out = largest_component_mask(m);
  EXPECT_EQ(out, disc(200, 120, 60, 60, 40));
}

TEST(LargestComponent, AnnulusIsFilled) {
  auto m = disc(100, 100, 50, 50, 30);
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x)
      if ((x - 50) * (x - 50) + (y - 50) * (y - 50) <= 15 * 15) m.at(x, y) = 0;
  EXPECT_EQ(largest_component_mask(m), disc(100, 100, 50, 50, 30));
}

TEST(LargestComponent, FilledAreaDecidesNotPixelCount) {
  // A thin ring enclosing a large area beats a solid disc with more foreground pixels.
  SliceMask m(120, 60);
  for (int x = 5; x <= 55; ++x) m.at(x, 5) = m.at(x, 55) = 1;
  for (int y = 5; y <= 55; ++y) m.at(5, y) = m.at(55, y) = 1;
  m = disc(120, 60, 90, 30, 18, m);
  const auto out = largest_component_mask(m);
  EXPECT_EQ(out.at(30, 30), 1);
  EXPECT_EQ(out.at(90, 30), 0);
}

TEST(LargestComponent, EmptyMaskGivesEmpty) {
  SliceMask m(7, 5);
  EXPECT_EQ(largest_component_mask(m), m);
}

TEST(LargestComponentProperty, MatchesFloodFillOracleAndIsSingleComponent) {
  dtsforge::Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(40)), h = 1 + static_cast<int>(rng.below(40));
    const auto m = testing_support::random_mask(rng, w, h, rng.uniform(0.1, 0.7));
    const auto out = largest_component_mask(m);
    ASSERT_EQ(out, oracle_largest(m)) << "trial " << trial;
    int count = 0;
    label8(out, count);
    ASSERT_LE(count, 1);
    ASSERT_EQ(largest_component_mask(out), out);
  }
}

TEST(StripBed, PhantomRemovesBedAndMatchesTruth) {
  const auto spec = random_spec(101, PhantomLabel::abnormal);
  const auto ph = generate(spec);
  const auto res = strip_bed(ph.volume);
  long bed_left = 0, invented = 0;
  for (std::size_t i = 0; i < res.subject.voxels().size(); ++i) {
    const float in = ph.volume.voxels()[i], out = res.subject.voxels()[i];
    if (out != in && out != -1000.0f) ++invented;
    if (out == static_cast<float>(spec.bed.hu)) ++bed_left;
  }
  EXPECT_EQ(bed_left, 0);
  EXPECT_EQ(invented, 0);

  long inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < res.mask.voxels().size(); ++i) {
    a += res.mask.voxels()[i];
    b += ph.subject_truth.voxels()[i];
    inter += res.mask.voxels()[i] & ph.subject_truth.voxels()[i];
  }
  EXPECT_GE(2.0 * inter / (a + b), 0.99);
}

TEST(StripBed, IdempotentOnItsOwnOutput) {
  const auto ph = generate(random_spec(55, PhantomLabel::normal));
  const auto once = strip_bed(ph.volume);
  const auto twice = strip_bed(once.subject);
  EXPECT_EQ(twice.subject, once.subject);
}

TEST(StripBed, PerSliceSingleComponent) {
  const auto ph = generate(random_spec(9, PhantomLabel::abnormal));
  const auto res = strip_bed(ph.volume);
  const auto& d = res.mask.dims();
  for (int k = 0; k < d[2]; ++k) {
    SliceMask s(d[0], d[1]);
    for (int j = 0; j < d[1]; ++j)
      for (int i = 0; i < d[0]; ++i) s.at(i, j) = res.mask.at(i, j, k);
    int count = 0;
    label8(s, count);
    EXPECT_LE(count, 1) << "slice " << k;
  }
}

TEST(StripBed, AllAirGivesEmptyMask) {
  const auto g = GridGeometry::centered({20, 20, 3}, {1, 1, 1});
  const CtVolume air(g, std::vector<float>(g.voxel_count(), -1000.0f));
  const auto res = strip_bed(air);
  EXPECT_EQ(res.mask.count(), 0u);
  EXPECT_EQ(res.subject, air);
}

TEST(StripBed, BedFreeSubjectUnchanged) {
  auto spec = PhantomSpec{};
  spec.grid = GridGeometry::centered({120, 100, 8}, {2.5, 2.5, 5.0});
  spec.bed.hu = -1000.0;
  const auto ph = generate(spec);
  const auto res = strip_bed(ph.volume);
  for (std::size_t i = 0; i < res.subject.voxels().size(); ++i)
    if (ph.subject_truth.voxels()[i] && ph.volume.voxels()[i] >= -500.0f) {
      ASSERT_EQ(res.subject.voxels()[i], ph.volume.voxels()[i]);
    }
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "dtsforge/volume.hpp"

namespace dtsforge::detail {

// Trilinear sample at continuous voxel index (fx, fy, fz) with clamp-to-edge
// neighbors. Callers decide what happens outside the voxel cells.
template <typename T>
inline double sample_trilinear(const T* data, const Dims3& dims, double fx, double fy, double fz) {
  fx = std::clamp(fx, 0.0, static_cast<double>(dims[0] - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(dims[1] - 1));
  fz = std::clamp(fz, 0.0, static_cast<double>(dims[2] - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int z0 = static_cast<int>(fz);
  const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
  const std::size_t sx = x0 + 1 < dims[0] ? 1 : 0;
  const std::size_t sy = y0 + 1 < dims[1] ? static_cast<std::size_t>(dims[0]) : 0;
  const std::size_t sz = z0 + 1 < dims[2] ? static_cast<std::size_t>(dims[0]) * dims[1] : 0;
  const T* p = data + static_cast<std::size_t>(x0) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(y0) + static_cast<std::size_t>(dims[1]) * z0);
  const double c00 = p[0] + tx * (static_cast<double>(p[sx]) - p[0]);
  const double c10 = p[sy] + tx * (static_cast<double>(p[sy + sx]) - p[sy]);
  const double c01 = p[sz] + tx * (static_cast<double>(p[sz + sx]) - p[sz]);
  const double c11 = p[sz + sy] + tx * (static_cast<double>(p[sz + sy + sx]) - p[sz + sy]);
  const double c0 = c00 + ty * (c10 - c00);
  const double c1 = c01 + ty * (c11 - c01);
  return c0 + tz * (c1 - c0);
}

inline bool inside_cells(const Dims3& dims, double fx, double fy, double fz, double eps = 1e-9) {
  return fx >= -0.5 - eps && fx <= dims[0] - 0.5 + eps && fy >= -0.5 - eps && fy <= dims[1] - 0.5 + eps &&
         fz >= -0.5 - eps && fz <= dims[2] - 0.5 + eps;
}

}  // namespace dtsforge::detail

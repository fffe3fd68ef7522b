#pragma once

// Single-point trilinear sampler shared by the scalar table and the vector
// tables' boundary lanes, so every variant rounds identically at the edges.

#include <cmath>
#include <cstddef>

#include "eigenpatch/simd/kernels.hpp"

namespace eigenpatch::simd::detail {

inline double corner(const VolumeView& v, std::ptrdiff_t x, std::ptrdiff_t y,
                     std::ptrdiff_t z) {
  if (x < 0 || y < 0 || z < 0 || x >= v.nx || y >= v.ny || z >= v.nz) return 0.0;
  return static_cast<double>(v.data[x + v.nx * (y + v.ny * z)]);
}

inline double lerp(double a, double b, double f) { return a + f * (b - a); }

inline float trilinear_point(const VolumeView& v, double x, double y, double z) {
  const double xf = std::floor(x);
  const double yf = std::floor(y);
  const double zf = std::floor(z);
  // Entirely outside, including the one-voxel fade band.
  if (xf < -1.0 || yf < -1.0 || zf < -1.0 || xf >= static_cast<double>(v.nx) ||
      yf >= static_cast<double>(v.ny) || zf >= static_cast<double>(v.nz)) {
    return 0.0f;
  }
  const auto x0 = static_cast<std::ptrdiff_t>(xf);
  const auto y0 = static_cast<std::ptrdiff_t>(yf);
  const auto z0 = static_cast<std::ptrdiff_t>(zf);
  const double fx = x - xf;
  const double fy = y - yf;
  const double fz = z - zf;

  const double c00 = lerp(corner(v, x0, y0, z0), corner(v, x0 + 1, y0, z0), fx);
  const double c10 = lerp(corner(v, x0, y0 + 1, z0), corner(v, x0 + 1, y0 + 1, z0), fx);
  const double c01 = lerp(corner(v, x0, y0, z0 + 1), corner(v, x0 + 1, y0, z0 + 1), fx);
  const double c11 =
      lerp(corner(v, x0, y0 + 1, z0 + 1), corner(v, x0 + 1, y0 + 1, z0 + 1), fx);
  const double c0 = lerp(c00, c10, fy);
  const double c1 = lerp(c01, c11, fy);
  return static_cast<float>(lerp(c0, c1, fz));
}

}  // namespace eigenpatch::simd::detail

#pragma once

// Data-parallel inner loops shared by the volume, registration and kernel
// modules. Every kernel has a portable scalar reference; vector variants are
// selected once at startup from the host CPU features and must agree with the
// reference within the tolerances pinned in tests/simd_kernels_test.cpp.

#include <cstddef>
#include <string_view>

namespace eigenpatch::simd {

/// Geometry of a dense x-fastest float volume, as seen by the kernels.
struct VolumeView {
  const float* data;
  std::ptrdiff_t nx, ny, nz;
};

struct KernelTable {
  std::string_view name;

  /// Sum of (a[i]-b[i])^2.
  double (*squared_distance)(const float* a, const float* b, std::size_t n);
  /// Sum of a[i]*b[i].
  double (*dot)(const float* a, const float* b, std::size_t n);
  /// Sum of x[i], accumulated in double.
  double (*sum)(const float* x, std::size_t n);
  /// Sum of (x[i]-mean)^2, accumulated in double.
  double (*sum_squared_deviation)(const float* x, std::size_t n, double mean);
  /// out[i] = (x[i] - shift) * scale.
  void (*shift_scale)(const float* x, std::size_t n, double shift, double scale,
                      float* out);
  /// Trilinear samples of `src` at origin + i*step for i in [0, n). Corners
  /// outside the volume read as zero.
  void (*trilinear_row)(const VolumeView& src, const double origin[3],
                        const double step[3], std::size_t n, float* out);
};

const KernelTable& scalar_kernels();
/// nullptr when the build or the host lacks the instruction set.
const KernelTable* avx2_kernels();
const KernelTable* neon_kernels();

/// Best table for this host. Setting EIGENPATCH_SIMD=scalar forces the
/// reference path.
const KernelTable& active_kernels();

}  // namespace eigenpatch::simd

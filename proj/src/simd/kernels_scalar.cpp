#include <cstddef>

#include "eigenpatch/simd/kernels.hpp"
#include "trilinear_point.hpp"

namespace eigenpatch::simd {
namespace {

double squared_distance_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

double dot_scalar(const float* a, const float* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

double sum_scalar(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sum_squared_deviation_scalar(const float* x, std::size_t n, double mean) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - mean;
    acc += d * d;
  }
  return acc;
}

void shift_scale_scalar(const float* x, std::size_t n, double shift, double scale,
                        float* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>((static_cast<double>(x[i]) - shift) * scale);
  }
}

void trilinear_row_scalar(const VolumeView& src, const double origin[3],
                          const double step[3], std::size_t n, float* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    out[i] = detail::trilinear_point(src, origin[0] + t * step[0],
                                     origin[1] + t * step[1], origin[2] + t * step[2]);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      "scalar",          squared_distance_scalar, dot_scalar,
      sum_scalar,        sum_squared_deviation_scalar,
      shift_scale_scalar, trilinear_row_scalar,
  };
  return table;
}

}  // namespace eigenpatch::simd

#include <algorithm>
#include <cstddef>

#include "eigenpatch/simd/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace eigenpatch::simd {
namespace {

constexpr std::size_t kBlock = 1024;

double squared_distance_neon(const float* a, const float* b, std::size_t n) {
  double total = 0.0;
  std::size_t i = 0;
  while (i + 8 <= n) {
    const std::size_t end = std::min(n - (n - i) % 8, i + kBlock);
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    for (; i + 8 <= end; i += 8) {
      const float32x4_t d0 = vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i));
      const float32x4_t d1 = vsubq_f32(vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
      acc0 = vfmaq_f32(acc0, d0, d0);
      acc1 = vfmaq_f32(acc1, d1, d1);
    }
    total += static_cast<double>(vaddvq_f32(vaddq_f32(acc0, acc1)));
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += d * d;
  }
  return total;
}

double dot_neon(const float* a, const float* b, std::size_t n) {
  double total = 0.0;
  std::size_t i = 0;
  while (i + 8 <= n) {
    const std::size_t end = std::min(n - (n - i) % 8, i + kBlock);
    float32x4_t acc0 = vdupq_n_f32(0.0f);
    float32x4_t acc1 = vdupq_n_f32(0.0f);
    for (; i + 8 <= end; i += 8) {
      acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
      acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
    }
    total += static_cast<double>(vaddvq_f32(vaddq_f32(acc0, acc1)));
  }
  for (; i < n; ++i) total += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return total;
}

double sum_neon(const float* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    acc0 = vaddq_f64(acc0, vcvt_f64_f32(vget_low_f32(v)));
    acc1 = vaddq_f64(acc1, vcvt_high_f64_f32(v));
  }
  double total = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) total += x[i];
  return total;
}

double sum_squared_deviation_neon(const float* x, std::size_t n, double mean) {
  const float64x2_t m = vdupq_n_f64(mean);
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const float64x2_t d0 = vsubq_f64(vcvt_f64_f32(vget_low_f32(v)), m);
    const float64x2_t d1 = vsubq_f64(vcvt_high_f64_f32(v), m);
    acc0 = vfmaq_f64(acc0, d0, d0);
    acc1 = vfmaq_f64(acc1, d1, d1);
  }
  double total = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - mean;
    total += d * d;
  }
  return total;
}

}  // namespace

const KernelTable* neon_kernels() {
  // Shift/scale and trilinear sampling stay on the reference path here.
  static const KernelTable table{
      "neon",
      squared_distance_neon,
      dot_neon,
      sum_neon,
      sum_squared_deviation_neon,
      scalar_kernels().shift_scale,
      scalar_kernels().trilinear_row,
  };
  return &table;
}

}  // namespace eigenpatch::simd

#else

namespace eigenpatch::simd {
const KernelTable* neon_kernels() { return nullptr; }
}  // namespace eigenpatch::simd

#endif

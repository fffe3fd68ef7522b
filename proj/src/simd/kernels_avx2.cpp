// Compiled with -mavx2 -mfma -ffp-contract=off; only reached after the
// dispatcher has confirmed host support.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>

#include "eigenpatch/simd/kernels.hpp"
#include "trilinear_point.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace eigenpatch::simd {
namespace {

// Float lanes are flushed into a double accumulator every kBlock elements.
constexpr std::size_t kBlock = 1024;

inline double hsum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  const __m256d wide = _mm256_add_pd(_mm256_cvtps_pd(lo), _mm256_cvtps_pd(hi));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, wide);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double squared_distance_avx2(const float* a, const float* b, std::size_t n) {
  double total = 0.0;
  std::size_t i = 0;
  while (i + 16 <= n) {
    const std::size_t end = std::min(n - (n - i) % 16, i + kBlock);
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    for (; i + 16 <= end; i += 16) {
      const __m256 d0 = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
      const __m256 d1 =
          _mm256_sub_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8));
      acc0 = _mm256_fmadd_ps(d0, d0, acc0);
      acc1 = _mm256_fmadd_ps(d1, d1, acc1);
    }
    total += hsum(_mm256_add_ps(acc0, acc1));
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += d * d;
  }
  return total;
}

double dot_avx2(const float* a, const float* b, std::size_t n) {
  double total = 0.0;
  std::size_t i = 0;
  while (i + 16 <= n) {
    const std::size_t end = std::min(n - (n - i) % 16, i + kBlock);
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    for (; i + 16 <= end; i += 16) {
      acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
      acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8),
                             acc1);
    }
    total += hsum(_mm256_add_ps(acc0, acc1));
  }
  for (; i < n; ++i) total += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return total;
}

double sum_avx2(const float* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    acc0 = _mm256_add_pd(acc0, _mm256_cvtps_pd(_mm256_castps256_ps128(v)));
    acc1 = _mm256_add_pd(acc1, _mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)));
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) total += x[i];
  return total;
}

double sum_squared_deviation_avx2(const float* x, std::size_t n, double mean) {
  const __m256d m = _mm256_set1_pd(mean);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 v = _mm256_loadu_ps(x + i);
    const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(v)), m);
    const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(v, 1)), m);
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double d = static_cast<double>(x[i]) - mean;
    total += d * d;
  }
  return total;
}

void shift_scale_avx2(const float* x, std::size_t n, double shift, double scale,
                      float* out) {
  const __m256d s = _mm256_set1_pd(shift);
  const __m256d k = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_cvtps_pd(_mm_loadu_ps(x + i));
    _mm_storeu_ps(out + i, _mm256_cvtpd_ps(_mm256_mul_pd(_mm256_sub_pd(v, s), k)));
  }
  for (; i < n; ++i) {
    out[i] = static_cast<float>((static_cast<double>(x[i]) - shift) * scale);
  }
}

inline __m256d lerp4(__m256d a, __m256d b, __m256d f) {
  return _mm256_add_pd(a, _mm256_mul_pd(f, _mm256_sub_pd(b, a)));
}

inline __m256d gather4(const float* base, __m128i idx) {
  return _mm256_cvtps_pd(_mm_i32gather_ps(base, idx, 4));
}

void trilinear_row_avx2(const VolumeView& src, const double origin[3],
                        const double step[3], std::size_t n, float* out) {
  const std::ptrdiff_t total = src.nx * src.ny * src.nz;
  std::size_t i = 0;
  if (total <= std::numeric_limits<std::int32_t>::max() && src.nx >= 2 && src.ny >= 2 &&
      src.nz >= 2) {
    const __m256d ox = _mm256_set1_pd(origin[0]);
    const __m256d oy = _mm256_set1_pd(origin[1]);
    const __m256d oz = _mm256_set1_pd(origin[2]);
    const __m256d sx = _mm256_set1_pd(step[0]);
    const __m256d sy = _mm256_set1_pd(step[1]);
    const __m256d sz = _mm256_set1_pd(step[2]);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d xmax = _mm256_set1_pd(static_cast<double>(src.nx - 2));
    const __m256d ymax = _mm256_set1_pd(static_cast<double>(src.ny - 2));
    const __m256d zmax = _mm256_set1_pd(static_cast<double>(src.nz - 2));
    const auto nx = static_cast<std::int32_t>(src.nx);
    const auto nxy = static_cast<std::int32_t>(src.nx * src.ny);
    const __m128i vnx = _mm_set1_epi32(nx);
    const __m128i vnxy = _mm_set1_epi32(nxy);
    const __m128i o_x = _mm_set1_epi32(1);
    const __m128i o_y = _mm_set1_epi32(nx);
    const __m128i o_z = _mm_set1_epi32(nxy);
    const __m256d lane = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);

    for (; i + 4 <= n; i += 4) {
      const __m256d t = _mm256_add_pd(_mm256_set1_pd(static_cast<double>(i)), lane);
      const __m256d x = _mm256_add_pd(ox, _mm256_mul_pd(t, sx));
      const __m256d y = _mm256_add_pd(oy, _mm256_mul_pd(t, sy));
      const __m256d z = _mm256_add_pd(oz, _mm256_mul_pd(t, sz));
      const __m256d xf = _mm256_floor_pd(x);
      const __m256d yf = _mm256_floor_pd(y);
      const __m256d zf = _mm256_floor_pd(z);
      const __m256d inside = _mm256_and_pd(
          _mm256_and_pd(_mm256_and_pd(_mm256_cmp_pd(xf, zero, _CMP_GE_OQ),
                                      _mm256_cmp_pd(xf, xmax, _CMP_LE_OQ)),
                        _mm256_and_pd(_mm256_cmp_pd(yf, zero, _CMP_GE_OQ),
                                      _mm256_cmp_pd(yf, ymax, _CMP_LE_OQ))),
          _mm256_and_pd(_mm256_cmp_pd(zf, zero, _CMP_GE_OQ),
                        _mm256_cmp_pd(zf, zmax, _CMP_LE_OQ)));
      if (_mm256_movemask_pd(inside) != 0xF) {
        alignas(32) double px[4], py[4], pz[4];
        _mm256_store_pd(px, x);
        _mm256_store_pd(py, y);
        _mm256_store_pd(pz, z);
        for (int l = 0; l < 4; ++l) out[i + l] = detail::trilinear_point(src, px[l], py[l], pz[l]);
        continue;
      }
      const __m128i ix = _mm256_cvttpd_epi32(xf);
      const __m128i iy = _mm256_cvttpd_epi32(yf);
      const __m128i iz = _mm256_cvttpd_epi32(zf);
      const __m128i base = _mm_add_epi32(
          ix, _mm_add_epi32(_mm_mullo_epi32(iy, vnx), _mm_mullo_epi32(iz, vnxy)));
      const __m256d fx = _mm256_sub_pd(x, xf);
      const __m256d fy = _mm256_sub_pd(y, yf);
      const __m256d fz = _mm256_sub_pd(z, zf);

      const __m128i b_y = _mm_add_epi32(base, o_y);
      const __m128i b_z = _mm_add_epi32(base, o_z);
      const __m128i b_yz = _mm_add_epi32(b_y, o_z);
      const __m256d c00 =
          lerp4(gather4(src.data, base), gather4(src.data, _mm_add_epi32(base, o_x)), fx);
      const __m256d c10 =
          lerp4(gather4(src.data, b_y), gather4(src.data, _mm_add_epi32(b_y, o_x)), fx);
      const __m256d c01 =
          lerp4(gather4(src.data, b_z), gather4(src.data, _mm_add_epi32(b_z, o_x)), fx);
      const __m256d c11 =
          lerp4(gather4(src.data, b_yz), gather4(src.data, _mm_add_epi32(b_yz, o_x)), fx);
      const __m256d c0 = lerp4(c00, c10, fy);
      const __m256d c1 = lerp4(c01, c11, fy);
      _mm_storeu_ps(out + i, _mm256_cvtpd_ps(lerp4(c0, c1, fz)));
    }
  }
  for (; i < n; ++i) {
    const double t = static_cast<double>(i);
    out[i] = detail::trilinear_point(src, origin[0] + t * step[0], origin[1] + t * step[1],
                                     origin[2] + t * step[2]);
  }
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{
      "avx2",          squared_distance_avx2, dot_avx2,
      sum_avx2,        sum_squared_deviation_avx2,
      shift_scale_avx2, trilinear_row_avx2,
  };
  if (!__builtin_cpu_supports("avx2") || !__builtin_cpu_supports("fma")) return nullptr;
  return &table;
}

}  // namespace eigenpatch::simd

#else

namespace eigenpatch::simd {
const KernelTable* avx2_kernels() { return nullptr; }
}  // namespace eigenpatch::simd

#endif

#include "dfusion/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>

#define DFUSION_AVX2 __attribute__((target("avx2")))

namespace dfusion::simd::detail {
namespace {

DFUSION_AVX2 void fuse_avx2(double* tsdf, double* weight, const double* sample_d,
                            const double* sample_weight, std::size_t n, double weight_max) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d wmax = _mm256_set1_pd(weight_max);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(sample_weight + i);
    const __m256d active = _mm256_cmp_pd(w, zero, _CMP_GT_OQ);
    if (_mm256_movemask_pd(active) == 0) {
      continue;
    }
    const __m256d old_d = _mm256_loadu_pd(tsdf + i);
    const __m256d old_w = _mm256_loadu_pd(weight + i);
    const __m256d d = _mm256_loadu_pd(sample_d + i);
    const __m256d sum_w = _mm256_add_pd(old_w, w);
    // Same operation order as the scalar path so results are bit-identical.
    const __m256d num = _mm256_add_pd(_mm256_mul_pd(old_d, old_w), _mm256_mul_pd(d, w));
    // Inactive lanes may divide by zero; the blend discards them.
    const __m256d new_d = _mm256_div_pd(num, sum_w);
    const __m256d new_w = _mm256_min_pd(sum_w, wmax);
    _mm256_storeu_pd(tsdf + i, _mm256_blendv_pd(old_d, new_d, active));
    _mm256_storeu_pd(weight + i, _mm256_blendv_pd(old_w, new_w, active));
  }
  for (; i < n; ++i) {
    const double w = sample_weight[i];
    if (w > 0.0) {
      const double old_w = weight[i];
      const double sum_w = old_w + w;
      tsdf[i] = (tsdf[i] * old_w + sample_d[i] * w) / sum_w;
      weight[i] = std::min(sum_w, weight_max);
    }
  }
}

DFUSION_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1,
                         _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) {
    s += a[i] * b[i];
  }
  return s;
}

DFUSION_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

DFUSION_AVX2 void xpby_avx2(const double* x, double beta, double* y, std::size_t n) {
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) {
    y[i] = x[i] + beta * y[i];
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static constexpr KernelTable table{fuse_avx2, dot_avx2, axpy_avx2, xpby_avx2};
  return table;
}

}  // namespace dfusion::simd::detail

#endif

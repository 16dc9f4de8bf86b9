#include "dfusion/simd/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <algorithm>

namespace dfusion::simd::detail {
namespace {

void fuse_neon(double* tsdf, double* weight, const double* sample_d, const double* sample_weight,
               std::size_t n, double weight_max) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  const float64x2_t wmax = vdupq_n_f64(weight_max);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t w = vld1q_f64(sample_weight + i);
    const uint64x2_t active = vcgtq_f64(w, zero);
    if ((vgetq_lane_u64(active, 0) | vgetq_lane_u64(active, 1)) == 0) {
      continue;
    }
    const float64x2_t old_d = vld1q_f64(tsdf + i);
    const float64x2_t old_w = vld1q_f64(weight + i);
    const float64x2_t d = vld1q_f64(sample_d + i);
    const float64x2_t sum_w = vaddq_f64(old_w, w);
    // Separate multiply and add (no fused vfma) to match the scalar path.
    const float64x2_t num = vaddq_f64(vmulq_f64(old_d, old_w), vmulq_f64(d, w));
    const float64x2_t new_d = vdivq_f64(num, sum_w);
    const float64x2_t new_w = vminq_f64(sum_w, wmax);
    vst1q_f64(tsdf + i, vbslq_f64(active, new_d, old_d));
    vst1q_f64(weight + i, vbslq_f64(active, new_w, old_w));
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

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) {
    s += a[i] * b[i];
  }
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

void xpby_neon(const double* x, double beta, double* y, std::size_t n) {
  const float64x2_t vb = vdupq_n_f64(beta);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(x + i), vmulq_f64(vb, vld1q_f64(y + i))));
  }
  for (; i < n; ++i) {
    y[i] = x[i] + beta * y[i];
  }
}

}  // namespace

const KernelTable& neon_kernels() {
  static constexpr KernelTable table{fuse_neon, dot_neon, axpy_neon, xpby_neon};
  return table;
}

}  // namespace dfusion::simd::detail

#endif

#include "dfusion/simd/kernels.hpp"

#include <algorithm>

namespace dfusion::simd::detail {
namespace {

void fuse_scalar(double* tsdf, double* weight, const double* sample_d, const double* sample_weight,
                 std::size_t n, double weight_max) {
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sample_weight[i];
    if (w > 0.0) {
      const double old_w = weight[i];
      const double sum_w = old_w + w;
      tsdf[i] = (tsdf[i] * old_w + sample_d[i] * w) / sum_w;
      weight[i] = std::min(sum_w, weight_max);
    }
  }
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += a[i] * b[i];
  }
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] += alpha * x[i];
  }
}

void xpby_scalar(const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = x[i] + beta * y[i];
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static constexpr KernelTable table{fuse_scalar, dot_scalar, axpy_scalar, xpby_scalar};
  return table;
}

}  // namespace dfusion::simd::detail

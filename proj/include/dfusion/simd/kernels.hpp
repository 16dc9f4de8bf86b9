#pragma once

// Data-parallel inner loops with a scalar reference implementation and
// vectorized variants picked at runtime from the host CPU.
//
// fuse_running_average is bit-exact across variants (same IEEE operation
// sequence per lane). The reductions (dot) reassociate and agree with the
// scalar path only up to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace dfusion::simd {

enum class Isa { scalar, avx2, neon };

[[nodiscard]] std::string_view isa_name(Isa isa);

/// True when the variant is compiled in and the CPU can run it.
[[nodiscard]] bool isa_supported(Isa isa);

/// Best supported variant, unless overridden by force_isa() or the
/// DFUSION_ISA environment variable ("scalar", "avx2", "neon").
[[nodiscard]] Isa active_isa();

/// Throws std::invalid_argument when the variant is not supported.
void force_isa(Isa isa);

/// For each i with sample_weight[i] > 0:
///   tsdf[i]   <- (tsdf[i] * weight[i] + sample_d[i] * sample_weight[i]) / (weight[i] + sample_weight[i])
///   weight[i] <- min(weight[i] + sample_weight[i], weight_max)
/// Entries with sample_weight[i] == 0 are left untouched.
void fuse_running_average(std::span<double> tsdf, std::span<double> weight,
                          std::span<const double> sample_d, std::span<const double> sample_weight,
                          double weight_max);

[[nodiscard]] double dot(std::span<const double> a, std::span<const double> b);

/// y <- y + alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// y <- x + beta * y
void xpby(std::span<const double> x, double beta, std::span<double> y);

/// Per-variant entry points, exposed for equivalence testing.
struct KernelTable {
  void (*fuse_running_average)(double* tsdf, double* weight, const double* sample_d,
                               const double* sample_weight, std::size_t n, double weight_max);
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  void (*xpby)(const double* x, double beta, double* y, std::size_t n);
};

/// Throws std::invalid_argument when the variant is not supported.
[[nodiscard]] const KernelTable& kernels_for(Isa isa);

namespace detail {
const KernelTable& scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_kernels();
#endif
#if defined(__aarch64__)
const KernelTable& neon_kernels();
#endif
}  // namespace detail

}  // namespace dfusion::simd

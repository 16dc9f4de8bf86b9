#include "dfusion/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace dfusion::simd {
namespace {

Isa detect_best() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) {
    return Isa::avx2;
  }
#endif
#if defined(__aarch64__)
  return Isa::neon;
#endif
  return Isa::scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("DFUSION_ISA"); env != nullptr) {
    const std::string name(env);
    for (const Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (name == isa_name(isa) && isa_supported(isa)) {
        return isa;
      }
    }
  }
  return detect_best();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

const KernelTable& active_table() { return kernels_for(current().load(std::memory_order_relaxed)); }

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": span length mismatch");
  }
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("SIMD variant not supported on this host: " +
                                std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("SIMD variant not supported on this host: " +
                                std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::avx2:
      return detail::avx2_kernels();
#endif
#if defined(__aarch64__)
    case Isa::neon:
      return detail::neon_kernels();
#endif
    default:
      return detail::scalar_kernels();
  }
}

void fuse_running_average(std::span<double> tsdf, std::span<double> weight,
                          std::span<const double> sample_d, std::span<const double> sample_weight,
                          double weight_max) {
  check_sizes(tsdf.size(), weight.size(), "fuse_running_average");
  check_sizes(tsdf.size(), sample_d.size(), "fuse_running_average");
  check_sizes(tsdf.size(), sample_weight.size(), "fuse_running_average");
  active_table().fuse_running_average(tsdf.data(), weight.data(), sample_d.data(),
                                      sample_weight.data(), tsdf.size(), weight_max);
}

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size(), "dot");
  return active_table().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_sizes(x.size(), y.size(), "axpy");
  active_table().axpy(alpha, x.data(), y.data(), x.size());
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  check_sizes(x.size(), y.size(), "xpby");
  active_table().xpby(x.data(), beta, y.data(), x.size());
}

}  // namespace dfusion::simd

#include "dfusion/simd/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>
#include <vector>

using namespace dfusion::simd;

namespace {

std::vector<Isa> supported_vector_isas() {
  std::vector<Isa> out;
  for (const Isa isa : {Isa::avx2, Isa::neon}) {
    if (isa_supported(isa)) {
      out.push_back(isa);
    }
  }
  return out;
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) {
    x = u(rng);
  }
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Sizes that exercise empty input, partial vectors and the scalar tail.
const std::vector<std::size_t> kSizes{0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 67, 1000, 4099};

}  // namespace

TEST_CASE("scalar is always available and the active variant is supported") {
  CHECK(isa_supported(Isa::scalar));
  CHECK(isa_supported(active_isa()));
  MESSAGE("active kernels: " << isa_name(active_isa()));
  for (const Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (!isa_supported(isa)) {
      CHECK_THROWS_AS(force_isa(isa), std::invalid_argument);
      CHECK_THROWS_AS((void)kernels_for(isa), std::invalid_argument);
    }
  }
}

TEST_CASE("fuse_running_average matches the scalar reference bit for bit") {
  const auto isas = supported_vector_isas();
  if (isas.empty()) {
    MESSAGE("no vector variant on this CPU; scalar only");
  }
  std::mt19937_64 rng(1);
  for (const Isa isa : isas) {
    for (const std::size_t n : kSizes) {
      const auto tsdf0 = random_values(rng, n, -1.0, 1.0);
      auto weight0 = random_values(rng, n, 0.0, 32.0);
      const auto d = random_values(rng, n, -1.0, 1.0);
      auto w = random_values(rng, n, 0.0, 2.0);
      // Mix in untouched entries, fresh voxels and saturated weights.
      for (std::size_t i = 0; i < n; ++i) {
        if (i % 3 == 0) {
          w[i] = 0.0;
        }
        if (i % 5 == 0) {
          weight0[i] = 0.0;
        }
        if (i % 7 == 0) {
          weight0[i] = 32.0;
        }
      }
      auto ts = tsdf0;
      auto ws = weight0;
      auto tv = tsdf0;
      auto wv = weight0;
      detail::scalar_kernels().fuse_running_average(ts.data(), ws.data(), d.data(), w.data(), n, 32.0);
      kernels_for(isa).fuse_running_average(tv.data(), wv.data(), d.data(), w.data(), n, 32.0);
      CHECK_MESSAGE(bit_equal(ts, tv), isa_name(isa) << " n=" << n);
      CHECK_MESSAGE(bit_equal(ws, wv), isa_name(isa) << " n=" << n);
    }
  }
}

TEST_CASE("scalar fuse_running_average follows the running-mean formula") {
  std::vector<double> tsdf{0.2, 0.5, 1.0, -0.3};
  std::vector<double> weight{1.0, 0.0, 32.0, 2.0};
  const std::vector<double> d{0.4, -0.7, 0.0, 0.9};
  const std::vector<double> w{1.0, 1.0, 1.0, 0.0};
  detail::scalar_kernels().fuse_running_average(tsdf.data(), weight.data(), d.data(), w.data(), 4, 32.0);
  CHECK(tsdf[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(weight[0] == 2.0);
  CHECK(tsdf[1] == -0.7);
  CHECK(weight[1] == 1.0);
  CHECK(tsdf[2] == doctest::Approx(32.0 / 33.0).epsilon(1e-15));
  CHECK(weight[2] == 32.0);
  CHECK(tsdf[3] == -0.3);
  CHECK(weight[3] == 2.0);
}

TEST_CASE("axpy and xpby match the scalar reference bit for bit") {
  std::mt19937_64 rng(2);
  for (const Isa isa : supported_vector_isas()) {
    for (const std::size_t n : kSizes) {
      const auto x = random_values(rng, n, -5.0, 5.0);
      const auto y0 = random_values(rng, n, -5.0, 5.0);
      auto ys = y0;
      auto yv = y0;
      detail::scalar_kernels().axpy(0.37, x.data(), ys.data(), n);
      kernels_for(isa).axpy(0.37, x.data(), yv.data(), n);
      CHECK_MESSAGE(bit_equal(ys, yv), isa_name(isa) << " axpy n=" << n);
      ys = y0;
      yv = y0;
      detail::scalar_kernels().xpby(x.data(), -1.3, ys.data(), n);
      kernels_for(isa).xpby(x.data(), -1.3, yv.data(), n);
      CHECK_MESSAGE(bit_equal(ys, yv), isa_name(isa) << " xpby n=" << n);
    }
  }
}

TEST_CASE("dot agrees with the scalar reference up to reassociation") {
  std::mt19937_64 rng(3);
  for (const Isa isa : supported_vector_isas()) {
    for (const std::size_t n : kSizes) {
      const auto a = random_values(rng, n, -1.0, 1.0);
      const auto b = random_values(rng, n, -1.0, 1.0);
      const double s = detail::scalar_kernels().dot(a.data(), b.data(), n);
      const double v = kernels_for(isa).dot(a.data(), b.data(), n);
      double abs_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        abs_sum += std::abs(a[i] * b[i]);
      }
      CHECK_MESSAGE(std::abs(s - v) <= 1e-15 * static_cast<double>(n + 1) * abs_sum, isa_name(isa) << " n=" << n);
    }
  }
}

TEST_CASE("dispatching wrappers follow force_isa") {
  const Isa before = active_isa();
  std::mt19937_64 rng(4);
  const auto x = random_values(rng, 37, -1.0, 1.0);
  for (const Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
    if (!isa_supported(isa)) {
      continue;
    }
    force_isa(isa);
    CHECK(active_isa() == isa);
    std::vector<double> y(37, 1.0);
    axpy(2.0, x, y);
    std::vector<double> ref(37, 1.0);
    kernels_for(isa).axpy(2.0, x.data(), ref.data(), 37);
    CHECK(bit_equal(y, ref));
  }
  force_isa(before);
  std::vector<double> short_y(3);
  CHECK_THROWS_AS(axpy(1.0, x, short_y), std::invalid_argument);
}

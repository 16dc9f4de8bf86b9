#include "dfusion/scene.hpp"
#include "dfusion/tsdf_volume.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace dfusion;

namespace {

const CameraIntrinsics kCam{400.0, 400.0, 160.0, 120.0, 320, 240};

ObservationFrame constant_frame(double depth, Rgb color = Rgb{10, 20, 30}) {
  return build_frame(0, DepthMap(kCam.width, kCam.height, depth), ColorMap(kCam.width, kCam.height, color),
                     kCam, FilterParams{.enabled = false});
}

VolumeConfig small_volume(bool exclusion = true) {
  // 8 mm voxels around z = 0.5.
  VolumeConfig cfg = VolumeConfig::centered(Vec3(0.0, 0.0, 0.5), 0.128, 16, 0.02);
  cfg.behind_surface_exclusion = exclusion;
  return cfg;
}

// The update a frame contributes to a point that is not warped, computed
// straight from the pinhole model and the truncation rule.
std::optional<std::pair<double, Rgb>> oracle_update(const Vec3& x, const ObservationFrame& f, double tau,
                                                    bool exclusion) {
  if (x.z() <= 0.0) {
    return std::nullopt;
  }
  const double u = std::round(kCam.fx * x.x() / x.z() + kCam.cx);
  const double v = std::round(kCam.fy * x.y() / x.z() + kCam.cy);
  if (u < 0 || v < 0 || u >= kCam.width || v >= kCam.height) {
    return std::nullopt;
  }
  const double d = f.depth.at(static_cast<int>(u), static_cast<int>(v));
  if (!is_valid_depth(d)) {
    return std::nullopt;
  }
  const double sdf = d - x.z();
  if (exclusion && sdf < -tau) {
    return std::nullopt;
  }
  return std::make_pair(std::clamp(sdf / tau, -1.0, 1.0), f.color.at(static_cast<int>(u), static_cast<int>(v)));
}

ObservationFrame noisy_plane(double depth, double sigma, std::uint64_t seed, int t) {
  RenderedFrame raw{DepthMap(kCam.width, kCam.height, depth), ColorMap(kCam.width, kCam.height)};
  std::mt19937_64 rng(seed + static_cast<std::uint64_t>(t));
  std::uniform_int_distribution<int> c(0, 255);
  for (auto& px : raw.color.pixels()) {
    px = Rgb{static_cast<std::uint8_t>(c(rng)), static_cast<std::uint8_t>(c(rng)), static_cast<std::uint8_t>(c(rng))};
  }
  CorruptionSpec noise;
  noise.depth_noise_sigma = sigma;
  noise.seed = seed;
  raw = corrupt_frame(raw, noise, t);
  return build_frame(t, raw.depth, raw.color, kCam, FilterParams{.enabled = false});
}

// Fills the volume with a truncated analytic signed distance, positive
// outside.
template <typename Sdf>
void fill(TsdfVolume& vol, Sdf sdf) {
  const int r = vol.resolution();
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < r; ++j) {
      for (int i = 0; i < r; ++i) {
        vol.set_voxel(i, j, k, sdf(vol.voxel_center(i, j, k)) / vol.config().tau, 1.0, Rgb{200, 100, 50});
      }
    }
  }
}

double angle_deg(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("create_volume examples") {
  VolumeConfig large;
  large.side_length = 0.7;
  large.resolution = 512;
  CHECK(large.voxel_size() == doctest::Approx(0.001367).epsilon(1e-3));
  CHECK_NOTHROW(large.validate());

  VolumeConfig tiny;
  tiny.side_length = 0.08;
  tiny.resolution = 8;
  const TsdfVolume vol = create_volume(tiny);
  CHECK(vol.voxel_count() == 512);
  for (std::size_t i = 0; i < vol.voxel_count(); ++i) {
    CHECK(vol.weight_values()[i] == 0.0);
    CHECK(vol.tsdf_values()[i] == 1.0);
    CHECK(vol.color_values()[i] == Rgb{});
  }

  VolumeConfig thin = tiny;
  thin.tau = 0.5 * thin.voxel_size();
  CHECK_THROWS_AS((void)create_volume(thin), std::invalid_argument);
  VolumeConfig coarse = tiny;
  coarse.resolution = 7;
  coarse.tau = 0.02;
  CHECK_THROWS_AS((void)create_volume(coarse), std::invalid_argument);
  VolumeConfig weights = tiny;
  weights.default_new_weight = 40.0;
  CHECK_THROWS_AS((void)create_volume(weights), std::invalid_argument);
}

TEST_CASE("create_volume enforces the memory budget") {
  VolumeConfig cfg;
  cfg.side_length = 0.7;
  cfg.resolution = 512;
  cfg.memory_budget_bytes = std::size_t{1} << 30;
  try {
    (void)create_volume(cfg);
    FAIL("expected a budget error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("512") != std::string::npos);
  }
}

TEST_CASE("compute_voxel_update examples") {
  VolumeConfig tau1 = small_volume();
  tau1.tau = 0.01;
  const DeformationGraph identity;
  const Vec3 x(0.0, 0.0, 0.5);

  const auto half = compute_voxel_update(x, identity, constant_frame(0.505), tau1);
  REQUIRE(half);
  CHECK(half->d == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(half->c == Rgb{10, 20, 30});
  CHECK(half->omega == tau1.default_new_weight);

  const auto sat = compute_voxel_update(x, identity, constant_frame(0.55), tau1);
  REQUIRE(sat);
  CHECK(sat->d == 1.0);

  CHECK_FALSE(compute_voxel_update(x, identity, constant_frame(0.45), tau1));
  // Literal clamp with the exclusion off.
  tau1.behind_surface_exclusion = false;
  const auto clamped = compute_voxel_update(x, identity, constant_frame(0.45), tau1);
  REQUIRE(clamped);
  CHECK(clamped->d == -1.0);
  // Just behind the surface: clamp, not exclusion.
  tau1.behind_surface_exclusion = true;
  const auto near = compute_voxel_update(x, identity, constant_frame(0.495), tau1);
  REQUIRE(near);
  CHECK(near->d == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("compute_voxel_update returns nothing off-image, behind the camera or on invalid depth") {
  const VolumeConfig cfg = small_volume();
  const DeformationGraph identity;
  CHECK_FALSE(compute_voxel_update(Vec3(1.0, 0.0, 0.5), identity, constant_frame(0.5), cfg));
  CHECK_FALSE(compute_voxel_update(Vec3(0.0, 0.0, -0.5), identity, constant_frame(0.5), cfg));
  CHECK_FALSE(compute_voxel_update(Vec3(0.0, 0.0, 0.5), identity, constant_frame(kInvalidDepth), cfg));
}

TEST_CASE("compute_voxel_update warps the voxel through the graph") {
  const VolumeConfig cfg = small_volume();
  DeformationGraph g;
  g.rigid = RigidTransform::from_translation(Vec3(0.0, 0.0, 0.005));
  const auto upd = compute_voxel_update(Vec3(0.0, 0.0, 0.5), g, constant_frame(0.51), cfg);
  REQUIRE(upd);
  CHECK(upd->d == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("fuse_frame examples") {
  VolumeConfig cfg = small_volume();
  cfg.tau = 0.01;
  // Voxel (8, 8, 8) on the optical axis at z = 0.5.
  cfg.origin = Vec3(0.0, 0.0, 0.5) - 8.0 * cfg.voxel_size() * Vec3::Ones();
  TsdfVolume vol = create_volume(cfg);
  const Vec3 c = vol.voxel_center(8, 8, 8);
  REQUIRE(c.head<2>().norm() < 1e-12);
  const ObservationFrame f = constant_frame(c.z() + 0.004);

  fuse_frame(vol, DeformationGraph{}, f);
  CHECK(vol.tsdf(8, 8, 8) == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(vol.weight(8, 8, 8) == 1.0);
  CHECK(vol.color(8, 8, 8) == Rgb{10, 20, 30});

  vol.set_voxel(8, 8, 8, 0.2, 1.0, Rgb{});
  fuse_frame(vol, DeformationGraph{}, f);
  CHECK(vol.tsdf(8, 8, 8) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(vol.weight(8, 8, 8) == 2.0);

  vol.set_voxel(8, 8, 8, 0.4, 32.0, Rgb{});
  fuse_frame(vol, DeformationGraph{}, f);
  CHECK(vol.weight(8, 8, 8) == 32.0);
  CHECK(vol.tsdf(8, 8, 8) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("fusing one frame repeatedly converges monotonically") {
  VolumeConfig cfg = small_volume();
  TsdfVolume vol = create_volume(cfg);
  const ObservationFrame f = noisy_plane(0.5, 0.003, 4, 0);
  // Start from an arbitrary observed state so convergence has distance to cover.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int r = vol.resolution();
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < r; ++j) {
      for (int i = 0; i < r; ++i) {
        vol.set_voxel(i, j, k, u(rng), 1.0, Rgb{});
      }
    }
  }
  const std::vector<double> initial(vol.tsdf_values().begin(), vol.tsdf_values().end());
  std::vector<double> target(initial.size(), std::nan(""));
  for (int k = 0; k < r; ++k) {
    for (int j = 0; j < r; ++j) {
      for (int i = 0; i < r; ++i) {
        if (const auto o = oracle_update(vol.voxel_center(i, j, k), f, cfg.tau, true)) {
          target[vol.index(i, j, k)] = o->first;
        }
      }
    }
  }
  std::vector<double> prev = initial;
  for (int n = 0; n < 40; ++n) {
    fuse_frame(vol, DeformationGraph{}, f);
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (std::isnan(target[i])) {
        CHECK(vol.tsdf_values()[i] == initial[i]);
        continue;
      }
      CHECK(std::abs(vol.tsdf_values()[i] - target[i]) <= std::abs(prev[i] - target[i]) + 1e-15);
    }
    prev.assign(vol.tsdf_values().begin(), vol.tsdf_values().end());
  }
  int touched = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) {
    if (!std::isnan(target[i])) {
      ++touched;
      CHECK(std::abs(prev[i] - target[i]) <= std::abs(initial[i] - target[i]) / cfg.omega_max + 1e-15);
    }
  }
  CHECK(touched > 100);
}

TEST_CASE("fusion is the running mean of the samples") {
  const VolumeConfig cfg = small_volume();
  TsdfVolume vol = create_volume(cfg);
  const int r = vol.resolution();
  std::vector<double> sum(vol.voxel_count(), 0.0);
  std::vector<int> count(vol.voxel_count(), 0);
  for (int t = 0; t < 20; ++t) {
    const ObservationFrame f = noisy_plane(0.5, 0.002, 77, t);
    for (int k = 0; k < r; ++k) {
      for (int j = 0; j < r; ++j) {
        for (int i = 0; i < r; ++i) {
          if (const auto o = oracle_update(vol.voxel_center(i, j, k), f, cfg.tau, true)) {
            sum[vol.index(i, j, k)] += o->first;
            ++count[vol.index(i, j, k)];
          }
        }
      }
    }
    fuse_frame(vol, DeformationGraph{}, f);
    // Color is replaced, never averaged.
    for (int k = 0; k < r; ++k) {
      for (int j = 0; j < r; ++j) {
        for (int i = 0; i < r; ++i) {
          if (const auto o = oracle_update(vol.voxel_center(i, j, k), f, cfg.tau, true)) {
            REQUIRE(vol.color(i, j, k) == o->second);
          }
        }
      }
    }
  }
  int checked = 0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(vol.weight_values()[i] == count[i]);
    if (count[i] > 0) {
      CHECK(std::abs(vol.tsdf_values()[i] - sum[i] / count[i]) <= 1e-9);
      ++checked;
    } else {
      CHECK(vol.tsdf_values()[i] == 1.0);
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("D and weight stay in bounds under arbitrary fusion") {
  VolumeConfig cfg = small_volume(false);
  cfg.omega_max = 5.0;
  TsdfVolume vol = create_volume(cfg);
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-0.03, 0.03);
  std::vector<Vec3> nodes;
  for (int i = 0; i < 12; ++i) {
    nodes.emplace_back(u(rng) * 2, u(rng) * 2, 0.5 + u(rng));
  }
  for (int t = 0; t < 12; ++t) {
    DeformationGraph g = build_graph(nodes, 3, 0.03);
    for (auto& n : g.nodes) {
      n.transform = se3_exp(Twist{Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), u(rng))});
    }
    RenderedFrame raw = render_frame(make_sphere(Vec3(u(rng), u(rng), 0.5), 0.05, 32, 16), kCam,
                                     RigidTransform::identity());
    CorruptionSpec noise;
    noise.depth_noise_sigma = 0.01;
    noise.seed = 5;
    raw = corrupt_frame(raw, noise, t);
    fuse_frame(vol, g, build_frame(t, raw.depth, raw.color, kCam), 3);
    for (std::size_t i = 0; i < vol.voxel_count(); ++i) {
      REQUIRE(vol.tsdf_values()[i] >= -1.0);
      REQUIRE(vol.tsdf_values()[i] <= 1.0);
      REQUIRE(vol.weight_values()[i] >= 0.0);
      REQUIRE(vol.weight_values()[i] <= cfg.omega_max);
    }
  }
  // Block mask agrees with the weights.
  const int b = vol.blocks_per_side();
  for (int bk = 0; bk < b; ++bk) {
    for (int bj = 0; bj < b; ++bj) {
      for (int bi = 0; bi < b; ++bi) {
        bool any = false;
        for (int k = bk * 8; k < std::min(bk * 8 + 8, vol.resolution()); ++k) {
          for (int j = bj * 8; j < std::min(bj * 8 + 8, vol.resolution()); ++j) {
            for (int i = bi * 8; i < std::min(bi * 8 + 8, vol.resolution()); ++i) {
              any = any || vol.weight(i, j, k) > 0.0;
            }
          }
        }
        CHECK(vol.block_observed(bi, bj, bk) == any);
      }
    }
  }
}

TEST_CASE("set_voxel clamps to the invariants") {
  TsdfVolume vol = create_volume(small_volume());
  vol.set_voxel(1, 2, 3, 4.0, 100.0, Rgb{1, 2, 3});
  CHECK(vol.tsdf(1, 2, 3) == 1.0);
  CHECK(vol.weight(1, 2, 3) == vol.config().omega_max);
  vol.set_voxel(1, 2, 3, -4.0, -1.0, Rgb{1, 2, 3});
  CHECK(vol.tsdf(1, 2, 3) == -1.0);
  CHECK(vol.weight(1, 2, 3) == 0.0);
}

TEST_CASE("extraction of an empty volume is empty") {
  CHECK(extract_reference_mesh(create_volume(small_volume())).empty());
}

TEST_CASE("extraction of an analytic sphere") {
  const Vec3 center(0.0, 0.0, 0.6);
  const double radius = 0.1;
  VolumeConfig cfg = VolumeConfig::centered(center, 0.3, 96, 0.01);
  TsdfVolume vol = create_volume(cfg);
  fill(vol, [&](const Vec3& p) { return (p - center).norm() - radius; });
  const TriangleMesh mesh = extract_reference_mesh(vol);
  REQUIRE(mesh.vertex_count() > 1000);
  CHECK_NOTHROW(mesh.validate());
  double worst = 0.0;
  double worst_normal = 0.0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    worst = std::max(worst, std::abs((mesh.vertices[i] - center).norm() - radius));
    worst_normal = std::max(worst_normal, angle_deg(mesh.normals[i], mesh.vertices[i] - center));
    CHECK(mesh.colors[i] == Rgb{200, 100, 50});
  }
  MESSAGE("sphere max radius error " << worst << " m, voxel " << cfg.voxel_size() << " m");
  CHECK(worst <= cfg.voxel_size());
  CHECK(worst_normal < 5.0);
}

TEST_CASE("extraction of an analytic plane") {
  const Vec3 n = Vec3(0.2, -0.3, -1.0).normalized();  // toward the camera
  const Vec3 p0(0.0, 0.0, 0.6);
  VolumeConfig cfg = VolumeConfig::centered(p0, 0.2, 64, 0.01);
  TsdfVolume vol = create_volume(cfg);
  fill(vol, [&](const Vec3& p) { return n.dot(p - p0); });
  const TriangleMesh mesh = extract_reference_mesh(vol);
  REQUIRE(mesh.vertex_count() > 1000);
  double worst = 0.0;
  double worst_normal = 0.0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    worst = std::max(worst, std::abs(n.dot(mesh.vertices[i] - p0)));
    worst_normal = std::max(worst_normal, angle_deg(mesh.normals[i], n));
  }
  CHECK(worst <= 0.1 * cfg.voxel_size());
  CHECK(worst_normal < 1.0);
  for (const auto& tri : mesh.triangles) {
    // Winding agrees with the normals.
    const Vec3 face = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]]).cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    if (face.norm() > 1e-12) {
      CHECK(face.dot(n) > 0.0);
    }
  }
}

TEST_CASE("extraction needs every cell corner observed") {
  const Vec3 p0(0.0, 0.0, 0.6);
  VolumeConfig cfg = VolumeConfig::centered(p0, 0.2, 32, 0.02);
  TsdfVolume vol = create_volume(cfg);
  fill(vol, [&](const Vec3& p) { return p0.z() - p.z(); });
  const std::size_t full = extract_reference_mesh(vol).vertex_count();
  // Unobserve the x < 0 half.
  for (int k = 0; k < 32; ++k) {
    for (int j = 0; j < 32; ++j) {
      for (int i = 0; i < 16; ++i) {
        vol.set_voxel(i, j, k, vol.tsdf(i, j, k), 0.0, Rgb{});
      }
    }
  }
  const TriangleMesh half = extract_reference_mesh(vol);
  CHECK(half.vertex_count() < full);
  for (const Vec3& v : half.vertices) {
    CHECK(v.x() >= vol.voxel_center(16, 0, 0).x() - 1e-12);
  }
}

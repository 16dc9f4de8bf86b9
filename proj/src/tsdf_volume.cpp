#include "dfusion/tsdf_volume.hpp"

#include "dfusion/simd/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace dfusion {
namespace {

#include "marching_cubes_tables.inc"

constexpr std::array<std::array<int, 3>, 8> kCorner{{
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
}};
constexpr std::array<std::array<int, 2>, 12> kEdgeCorners{{
    {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
}};

std::optional<VoxelUpdate> update_for_warped(const Vec3& xt, const ObservationFrame& frame,
                                             const VolumeConfig& config) {
  const auto pixel = project_to_pixel(xt, frame.intrinsics);
  if (!pixel) {
    return std::nullopt;
  }
  const auto [u, v] = *pixel;
  const double depth = frame.depth.at(u, v);
  if (!is_valid_depth(depth)) {
    return std::nullopt;
  }
  const double sdf = depth - xt.z();
  if (config.behind_surface_exclusion && sdf < -config.tau) {
    return std::nullopt;
  }
  return VoxelUpdate{std::clamp(sdf / config.tau, -1.0, 1.0), frame.color.at(u, v),
                     config.default_new_weight};
}

}  // namespace

VolumeConfig VolumeConfig::centered(const Vec3& center, double side_length, int resolution,
                                    double tau) {
  VolumeConfig c;
  c.side_length = side_length;
  c.resolution = resolution;
  c.tau = tau;
  const double h = side_length / resolution;
  c.origin = center - Vec3::Constant(0.5 * side_length - 0.5 * h);
  return c;
}

void VolumeConfig::validate() const {
  if (resolution < 8) {
    throw std::invalid_argument("volume: resolution must be at least 8");
  }
  if (!(side_length > 0.0)) {
    throw std::invalid_argument("volume: side length must be positive");
  }
  if (!(tau >= voxel_size())) {
    throw std::invalid_argument("volume: truncation distance " + std::to_string(tau) +
                                " is below the voxel size " + std::to_string(voxel_size()));
  }
  if (!(default_new_weight > 0.0) || !(omega_max >= default_new_weight)) {
    throw std::invalid_argument("volume: require omega_max >= default_new_weight > 0");
  }
}

TsdfVolume::TsdfVolume(const VolumeConfig& config) : config_(config) {
  config_.validate();
  const auto r = static_cast<std::size_t>(config_.resolution);
  const std::size_t count = r * r * r;
  if (count > config_.memory_budget_bytes / kBytesPerVoxel) {
    throw std::invalid_argument("volume: " + std::to_string(config_.resolution) +
                                "^3 voxels exceed the memory budget of " +
                                std::to_string(config_.memory_budget_bytes) + " bytes");
  }
  blocks_per_side_ = (config_.resolution + kBlockSize - 1) / kBlockSize;
  tsdf_.assign(count, 1.0);
  weight_.assign(count, 0.0);
  color_.assign(count, Rgb{});
  const auto b = static_cast<std::size_t>(blocks_per_side_);
  block_observed_.assign(b * b * b, 0);
}

void TsdfVolume::set_voxel(int i, int j, int k, double d, double weight, Rgb color) {
  const std::size_t idx = index(i, j, k);
  tsdf_[idx] = std::clamp(d, -1.0, 1.0);
  weight_[idx] = std::clamp(weight, 0.0, config_.omega_max);
  color_[idx] = color;
  if (weight_[idx] > 0.0) {
    block_observed_[block_index(i / kBlockSize, j / kBlockSize, k / kBlockSize)] = 1;
  }
}

bool TsdfVolume::block_observed(int bi, int bj, int bk) const {
  return block_observed_[block_index(bi, bj, bk)] != 0;
}

TsdfVolume create_volume(const VolumeConfig& config) { return TsdfVolume(config); }

std::optional<VoxelUpdate> compute_voxel_update(const Vec3& x0, const DeformationGraph& graph,
                                                const ObservationFrame& frame,
                                                const VolumeConfig& config, int influences) {
  SkinningBinding binding;
  if (!graph.nodes.empty()) {
    binding = compute_skinning(x0, graph, influences);
  }
  return update_for_warped(warp_point(x0, graph, binding), frame, config);
}

void fuse_frame(TsdfVolume& volume, const DeformationGraph& graph, const ObservationFrame& frame,
                int influences) {
  const VolumeConfig& cfg = volume.config_;
  const int res = cfg.resolution;
  const int bs = TsdfVolume::kBlockSize;
  const auto slab_stride = static_cast<std::size_t>(res) * static_cast<std::size_t>(res);

  std::vector<double> sample_d(slab_stride * bs, 0.0);
  std::vector<double> sample_w(slab_stride * bs, 0.0);
  std::vector<std::int32_t> candidates;

  for (int k0 = 0; k0 < res; k0 += bs) {
    const int k1 = std::min(k0 + bs, res);
    std::fill(sample_w.begin(), sample_w.end(), 0.0);
    for (int j0 = 0; j0 < res; j0 += bs) {
      const int j1 = std::min(j0 + bs, res);
      for (int i0 = 0; i0 < res; i0 += bs) {
        const int i1 = std::min(i0 + bs, res);
        const Vec3 lo = volume.voxel_center(i0, j0, k0);
        const Vec3 hi = volume.voxel_center(i1 - 1, j1 - 1, k1 - 1);
        if (!graph.nodes.empty()) {
          candidates = candidate_nodes(0.5 * (lo + hi), 0.5 * (hi - lo).norm(), graph, influences);
        }
        bool any = false;
        for (int k = k0; k < k1; ++k) {
          for (int j = j0; j < j1; ++j) {
            for (int i = i0; i < i1; ++i) {
              const Vec3 x0 = volume.voxel_center(i, j, k);
              SkinningBinding binding;
              if (!graph.nodes.empty()) {
                binding = compute_skinning(x0, graph, influences, candidates);
              }
              const auto upd = update_for_warped(warp_point(x0, graph, binding), frame, cfg);
              if (!upd) {
                continue;
              }
              const std::size_t local =
                  static_cast<std::size_t>(k - k0) * slab_stride + static_cast<std::size_t>(j) * res + i;
              sample_d[local] = upd->d;
              sample_w[local] = upd->omega;
              volume.color_[volume.index(i, j, k)] = upd->c;
              any = true;
            }
          }
        }
        if (any) {
          volume.block_observed_[volume.block_index(i0 / bs, j0 / bs, k0 / bs)] = 1;
        }
      }
    }
    const std::size_t begin = volume.index(0, 0, k0);
    const std::size_t n = static_cast<std::size_t>(k1 - k0) * slab_stride;
    simd::fuse_running_average(std::span(volume.tsdf_).subspan(begin, n),
                               std::span(volume.weight_).subspan(begin, n),
                               std::span<const double>(sample_d).first(n),
                               std::span<const double>(sample_w).first(n), cfg.omega_max);
  }
}

TriangleMesh extract_reference_mesh(const TsdfVolume& volume) {
  const int res = volume.resolution();
  const double h = volume.config().voxel_size();
  const auto tsdf = volume.tsdf_values();
  const auto weight = volume.weight_values();
  const auto colors = volume.color_values();

  auto observed = [&](int i, int j, int k) { return weight[volume.index(i, j, k)] > 0.0; };

  // Central differences where both neighbors are observed, one-sided
  // otherwise, zero when the axis has no observed neighbor.
  auto gradient = [&](int i, int j, int k) {
    Vec3 g = Vec3::Zero();
    const std::array<int, 3> p{i, j, k};
    for (int axis = 0; axis < 3; ++axis) {
      std::array<int, 3> lo = p;
      std::array<int, 3> hi = p;
      --lo[axis];
      ++hi[axis];
      const bool has_lo = lo[axis] >= 0 && observed(lo[0], lo[1], lo[2]);
      const bool has_hi = hi[axis] < res && observed(hi[0], hi[1], hi[2]);
      const double c = tsdf[volume.index(i, j, k)];
      if (has_lo && has_hi) {
        g[axis] = (tsdf[volume.index(hi[0], hi[1], hi[2])] - tsdf[volume.index(lo[0], lo[1], lo[2])]) /
                  (2.0 * h);
      } else if (has_hi) {
        g[axis] = (tsdf[volume.index(hi[0], hi[1], hi[2])] - c) / h;
      } else if (has_lo) {
        g[axis] = (c - tsdf[volume.index(lo[0], lo[1], lo[2])]) / h;
      }
    }
    return g;
  };

  TriangleMesh mesh;
  std::vector<Vec3> gradients;
  std::unordered_map<std::int64_t, std::int32_t> edge_vertex;

  auto vertex_on_edge = [&](const std::array<int, 3>& a, const std::array<int, 3>& b) {
    const std::size_t ia = volume.index(a[0], a[1], a[2]);
    const std::size_t ib = volume.index(b[0], b[1], b[2]);
    const std::size_t lo = std::min(ia, ib);
    const int axis = a[0] != b[0] ? 0 : (a[1] != b[1] ? 1 : 2);
    const std::int64_t key = static_cast<std::int64_t>(lo) * 3 + axis;
    if (const auto it = edge_vertex.find(key); it != edge_vertex.end()) {
      return it->second;
    }
    const double da = tsdf[ia];
    const double db = tsdf[ib];
    const double t = da / (da - db);
    const Vec3 pa = volume.voxel_center(a[0], a[1], a[2]);
    const Vec3 pb = volume.voxel_center(b[0], b[1], b[2]);
    mesh.vertices.push_back(pa + t * (pb - pa));
    gradients.push_back((1.0 - t) * gradient(a[0], a[1], a[2]) + t * gradient(b[0], b[1], b[2]));
    const Rgb ca = colors[ia];
    const Rgb cb = colors[ib];
    auto lerp = [t](std::uint8_t x, std::uint8_t y) {
      return static_cast<std::uint8_t>(std::clamp(std::lround((1.0 - t) * x + t * y), 0L, 255L));
    };
    mesh.colors.push_back(Rgb{lerp(ca.r, cb.r), lerp(ca.g, cb.g), lerp(ca.b, cb.b)});
    const auto id = static_cast<std::int32_t>(mesh.vertices.size() - 1);
    edge_vertex.emplace(key, id);
    return id;
  };

  const int bs = TsdfVolume::kBlockSize;
  const bool skip_free = volume.config().skip_free_space_cells;
  for (int k = 0; k + 1 < res; ++k) {
    for (int j = 0; j + 1 < res; ++j) {
      for (int i = 0; i + 1 < res; ++i) {
        if (!volume.block_observed(i / bs, j / bs, k / bs)) {
          i = (i / bs + 1) * bs - 1;
          continue;
        }
        bool all_observed = true;
        bool free_space = false;
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const std::size_t idx = volume.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (!(weight[idx] > 0.0)) {
            all_observed = false;
            break;
          }
          free_space = free_space || tsdf[idx] >= 1.0;
          if (tsdf[idx] < 0.0) {
            cube |= 1 << c;
          }
        }
        if (!all_observed || kEdgeTable[cube] == 0 || (skip_free && free_space)) {
          continue;
        }
        std::array<std::int32_t, 12> ids{};
        for (int e = 0; e < 12; ++e) {
          if ((kEdgeTable[cube] & (1 << e)) == 0) {
            continue;
          }
          const auto& ca = kCorner[kEdgeCorners[e][0]];
          const auto& cb = kCorner[kEdgeCorners[e][1]];
          ids[e] = vertex_on_edge({i + ca[0], j + ca[1], k + ca[2]}, {i + cb[0], j + cb[1], k + cb[2]});
        }
        for (int t = 0; kTriTable[cube][t] != -1; t += 3) {
          const std::int32_t a = ids[kTriTable[cube][t]];
          const std::int32_t b = ids[kTriTable[cube][t + 1]];
          const std::int32_t c = ids[kTriTable[cube][t + 2]];
          if (a == b || b == c || a == c) {
            continue;
          }
          // Wound so the face normal points toward positive TSDF.
          mesh.triangles.push_back({a, c, b});
        }
      }
    }
  }

  // Vertices whose gradient vanished fall back to the area-weighted face
  // normal.
  std::vector<Vec3> face_normals(mesh.vertices.size(), Vec3::Zero());
  for (const auto& tri : mesh.triangles) {
    const Vec3 n = (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                       .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]]);
    for (const auto idx : tri) {
      face_normals[idx] += n;
    }
  }
  mesh.normals.resize(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    Vec3 n = gradients[v];
    if (!(n.norm() > 1e-12)) {
      n = face_normals[v];
    }
    mesh.normals[v] = n.norm() > 0.0 ? Vec3(n.normalized()) : Vec3(0.0, 0.0, -1.0);
  }
  return mesh;
}

}  // namespace dfusion

#pragma once

// Reference-frame TSDF volume: per-voxel signed distance, color and weight,
// non-rigid projective fusion of live frames, and marching-cubes extraction.

#include "dfusion/deformation_graph.hpp"
#include "dfusion/frame.hpp"
#include "dfusion/geometry.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace dfusion {

struct VolumeConfig {
  double side_length = 0.35;           // meters
  int resolution = 128;                // voxels per side
  Vec3 origin = Vec3::Zero();          // center of voxel (0,0,0), reference frame
  double tau = 0.01;                   // truncation distance, meters
  double omega_max = 32.0;
  double default_new_weight = 1.0;
  bool behind_surface_exclusion = true;  // skip samples more than tau behind the surface
  // Extraction skips cells with a corner at exactly +1: such a voxel was only
  // ever seen as distant free space, so a sign change next to it is the
  // silhouette skirt behind an edge rather than a surface.
  bool skip_free_space_cells = true;
  std::size_t memory_budget_bytes = std::size_t{2} << 30;

  [[nodiscard]] double voxel_size() const { return side_length / resolution; }

  /// Volume of the given size whose voxel grid is centered on `center`.
  [[nodiscard]] static VolumeConfig centered(const Vec3& center, double side_length, int resolution,
                                             double tau = 0.01);

  /// Throws std::invalid_argument when an invariant fails.
  void validate() const;
};

struct VoxelUpdate {
  double d = 0.0;
  Rgb c;
  double omega = 0.0;
};

class TsdfVolume {
 public:
  static constexpr int kBlockSize = 8;
  static constexpr std::size_t kBytesPerVoxel = 2 * sizeof(double) + sizeof(Rgb);

  /// Free space everywhere: D = 1, weight 0, black. Throws
  /// std::invalid_argument on invalid configs or when the grid exceeds the
  /// memory budget.
  explicit TsdfVolume(const VolumeConfig& config);

  [[nodiscard]] const VolumeConfig& config() const { return config_; }
  [[nodiscard]] int resolution() const { return config_.resolution; }
  [[nodiscard]] std::size_t voxel_count() const { return tsdf_.size(); }

  [[nodiscard]] std::size_t index(int i, int j, int k) const {
    const auto r = static_cast<std::size_t>(config_.resolution);
    return static_cast<std::size_t>(i) + r * (static_cast<std::size_t>(j) + r * static_cast<std::size_t>(k));
  }
  [[nodiscard]] Vec3 voxel_center(int i, int j, int k) const {
    return config_.origin + config_.voxel_size() * Vec3(i, j, k);
  }

  [[nodiscard]] double tsdf(int i, int j, int k) const { return tsdf_[index(i, j, k)]; }
  [[nodiscard]] double weight(int i, int j, int k) const { return weight_[index(i, j, k)]; }
  [[nodiscard]] Rgb color(int i, int j, int k) const { return color_[index(i, j, k)]; }

  [[nodiscard]] std::span<const double> tsdf_values() const { return tsdf_; }
  [[nodiscard]] std::span<const double> weight_values() const { return weight_; }
  [[nodiscard]] std::span<const Rgb> color_values() const { return color_; }

  /// Direct write, for analytic fills in tests and tools. D is clamped to
  /// [-1, 1] and the weight to [0, omega_max].
  void set_voxel(int i, int j, int k, double d, double weight, Rgb color);

  /// Coarse occupancy: true when any voxel of the block has weight > 0.
  [[nodiscard]] bool block_observed(int bi, int bj, int bk) const;
  [[nodiscard]] int blocks_per_side() const { return blocks_per_side_; }

 private:
  friend void fuse_frame(TsdfVolume&, const DeformationGraph&, const ObservationFrame&, int);

  [[nodiscard]] std::size_t block_index(int bi, int bj, int bk) const {
    const auto b = static_cast<std::size_t>(blocks_per_side_);
    return static_cast<std::size_t>(bi) + b * (static_cast<std::size_t>(bj) + b * static_cast<std::size_t>(bk));
  }

  VolumeConfig config_;
  int blocks_per_side_ = 0;
  std::vector<double> tsdf_;
  std::vector<double> weight_;
  std::vector<Rgb> color_;
  std::vector<std::uint8_t> block_observed_;
};

[[nodiscard]] TsdfVolume create_volume(const VolumeConfig& config);

/// Sample contributed by `frame` to the voxel centered at x0, or empty when
/// the warped voxel leaves the image, lands on invalid depth, or (with
/// behind-surface exclusion) lies more than tau behind the observed surface.
[[nodiscard]] std::optional<VoxelUpdate> compute_voxel_update(const Vec3& x0,
                                                              const DeformationGraph& graph,
                                                              const ObservationFrame& frame,
                                                              const VolumeConfig& config,
                                                              int influences = 4);

/// Integrates one frame: running-average TSDF, color replacement, capped
/// weight. Voxels without a sample are untouched.
void fuse_frame(TsdfVolume& volume, const DeformationGraph& graph, const ObservationFrame& frame,
                int influences = 4);

/// Marching cubes over cells whose eight corners are all observed (and, with
/// skip_free_space_cells, below +1). Normals
/// follow the TSDF gradient toward free space (the observer side).
[[nodiscard]] TriangleMesh extract_reference_mesh(const TsdfVolume& volume);

}  // namespace dfusion

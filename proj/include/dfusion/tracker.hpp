#pragma once

// Per-frame non-rigid tracking: projective data association, point-to-plane
// data term, as-rigid-as-possible regularizer, and Levenberg-damped
// Gauss-Newton solved with block-Jacobi PCG.
//
// Unknowns are twist increments applied by left multiplication,
// T <- exp(delta) * T: one block per graph node followed by one block for the
// global rigid transform. Each increment is expressed about a pivot (see
// increment_pivots) so rotations do not drag a lever-arm translation.

#include "dfusion/block_system.hpp"
#include "dfusion/deformation_graph.hpp"
#include "dfusion/frame.hpp"
#include "dfusion/geometry.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace dfusion {

struct EnergyParams {
  double lambda_data = 1.0;
  double lambda_reg = 5.0;
  double max_corr_distance = 0.10;                          // meters
  double max_normal_angle = 30.0 * std::numbers::pi / 180.0;  // radians
  int gn_iterations = 10;
  int pcg_max_iterations = 200;
  double pcg_tolerance = 1e-6;
  double lm_damping_init = 1e-4;                            // relative to the mean diagonal of H
  // Outer iterations stop once an accepted step lowers the energy by no more
  // than this fraction. 0 runs all gn_iterations.
  double min_relative_decrease = 1e-3;

  static constexpr double kDampingMin = 1e-6;
  static constexpr double kDampingMax = 1e6;
  static constexpr int kMaxRetries = 5;

  /// Throws std::invalid_argument when a weight or threshold is not positive.
  void validate() const;
};

struct Correspondence {
  int vertex_index = 0;
  Vec3 target_point = Vec3::Zero();
  Vec3 target_normal = Vec3::UnitZ();
};

/// Projective association of live-frame points: project, read the feature
/// maps at the nearest pixel, keep pairs inside the distance and normal
/// gates.
[[nodiscard]] std::vector<Correspondence> associate(std::span<const Vec3> points,
                                                    std::span<const Vec3> normals,
                                                    const ObservationFrame& frame,
                                                    const EnergyParams& params);

/// Warps the reference mesh with `graph` and associates it against `frame`.
[[nodiscard]] std::vector<Correspondence> find_correspondences(
    const TriangleMesh& mesh0, std::span<const SkinningBinding> bindings,
    const DeformationGraph& graph, const ObservationFrame& frame, const EnergyParams& params);

/// Sum of squared point-to-plane residuals.
[[nodiscard]] double data_energy(std::span<const Correspondence> correspondences,
                                 std::span<const Vec3> warped_vertices);

/// Sum over nodes i and neighbors j of |T_i g_i - T_j g_i|^2.
[[nodiscard]] double reg_energy(const DeformationGraph& graph);

[[nodiscard]] inline double total_energy(double data, double reg, const EnergyParams& params) {
  return params.lambda_data * data + params.lambda_reg * reg;
}

[[nodiscard]] double total_energy(const DeformationGraph& graph, const TriangleMesh& mesh0,
                                  std::span<const SkinningBinding> bindings,
                                  std::span<const Correspondence> correspondences,
                                  const EnergyParams& params);

/// Rotation centers of the increments: the current position T_k g_k of
/// every node, then the warped node centroid for the rigid block.
[[nodiscard]] std::vector<Vec3> increment_pivots(const DeformationGraph& graph);

/// Gauss-Newton normal equations at the current estimate: H = J^T W J and
/// rhs = -J^T W r, with W the lambda weights. The gradient of the total
/// energy with respect to the increments is -2 * rhs. `damping` is stored on
/// the system and applied to every diagonal block.
[[nodiscard]] BlockSparseSystem linearize(const DeformationGraph& graph, const TriangleMesh& mesh0,
                                          std::span<const SkinningBinding> bindings,
                                          std::span<const Correspondence> correspondences,
                                          const EnergyParams& params, double damping);

/// Mean diagonal entry of H, or 1 for an all-zero diagonal. The damping
/// factor mu is unitless; track_frame adds mu * damping_scale(H) * I.
[[nodiscard]] double damping_scale(const BlockSparseSystem& system);

[[nodiscard]] PcgResult pcg_solve(const BlockSparseSystem& system, const EnergyParams& params);

/// T_i <- exp(delta_i) T_i for every node, then the rigid block, with each
/// delta_i taken about its pivot.
[[nodiscard]] DeformationGraph apply_update(const DeformationGraph& graph,
                                            std::span<const double> delta);

struct IterationDiagnostics {
  double energy_before = 0.0;
  double energy_after = 0.0;
  int correspondences = 0;
  int pcg_iterations = 0;
  int retries = 0;
  double damping = 0.0;
  bool accepted = false;
};

struct TrackDiagnostics {
  std::vector<IterationDiagnostics> iterations;
  bool lost_tracking = false;
  int correspondences = 0;  // from the last association
  double lambda_data = 0.0;
  double lambda_reg = 0.0;
};

struct TrackResult {
  DeformationGraph graph;
  TrackDiagnostics diagnostics;
};

[[nodiscard]] TrackResult track_frame(const DeformationGraph& graph_prev, const TriangleMesh& mesh0,
                                      std::span<const SkinningBinding> bindings,
                                      const ObservationFrame& frame, const EnergyParams& params);

}  // namespace dfusion

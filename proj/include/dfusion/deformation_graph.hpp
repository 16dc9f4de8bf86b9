#pragma once

// Embedded deformation graph: node sampling, k-NN connectivity, Gaussian
// skinning and the blending functions that carry reference-frame geometry
// into the live frame.

#include "dfusion/geometry.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dfusion {

struct GraphNode {
  Vec3 position = Vec3::Zero();  // reference frame
  RigidTransform transform;
  double radius = 0.0;
  std::vector<std::int32_t> neighbors;
};

struct DeformationGraph {
  RigidTransform rigid;
  std::vector<GraphNode> nodes;

  [[nodiscard]] std::size_t size() const { return nodes.size(); }

  /// Throws std::invalid_argument on bad radii, self loops or out-of-range
  /// neighbor indices.
  void validate() const;
};

inline constexpr int kMaxInfluences = 8;

/// Normalized Gaussian weights of a point over its nearest nodes.
struct SkinningBinding {
  std::array<std::int32_t, kMaxInfluences> nodes{};
  std::array<double, kMaxInfluences> weights{};
  int count = 0;

  [[nodiscard]] std::span<const std::int32_t> node_span() const {
    return {nodes.data(), static_cast<std::size_t>(count)};
  }
  [[nodiscard]] std::span<const double> weight_span() const {
    return {weights.data(), static_cast<std::size_t>(count)};
  }
};

struct GraphParams {
  double sampling_radius = 0.025;  // meters
  int n_neighbors = 4;             // graph edges per node
  double sigma = 0.025;            // node influence radius, meters
  int influences = 4;              // nodes per skinned point
  bool extend = true;              // grow the graph over new geometry
};

/// Greedy Poisson-disk subsampling of the mesh vertices in index order.
[[nodiscard]] std::vector<Vec3> sample_nodes(const TriangleMesh& mesh, double sampling_radius);

/// Identity transforms, uniform radius, neighbors = n_neighbors nearest
/// other nodes (ties to the lower index).
[[nodiscard]] DeformationGraph build_graph(std::span<const Vec3> positions, int n_neighbors,
                                           double sigma);

/// Indices of the k nearest nodes to p, closest first, ties to the lower
/// index.
[[nodiscard]] std::vector<std::int32_t> nearest_nodes(const Vec3& p, const DeformationGraph& graph,
                                                      int k);

/// Nodes that can appear among the k nearest of any point within `radius`
/// of `center`. Searching these alone gives the exact k nearest.
[[nodiscard]] std::vector<std::int32_t> candidate_nodes(const Vec3& center, double radius,
                                                        const DeformationGraph& graph, int k);

/// Throws std::invalid_argument when the graph is empty or k is outside
/// [1, kMaxInfluences].
[[nodiscard]] SkinningBinding compute_skinning(const Vec3& v0, const DeformationGraph& graph, int k);

/// Same binding as compute_skinning, searching only `candidates`.
[[nodiscard]] SkinningBinding compute_skinning(const Vec3& v0, const DeformationGraph& graph, int k,
                                               std::span<const std::int32_t> candidates);

[[nodiscard]] std::vector<SkinningBinding> compute_bindings(std::span<const Vec3> points,
                                                            const DeformationGraph& graph, int k);

/// Linear blend of node-transformed points followed by the rigid transform.
/// An empty binding applies the rigid transform alone.
[[nodiscard]] Vec3 warp_point(const Vec3& v0, const DeformationGraph& graph,
                              const SkinningBinding& binding);

/// Blends rotations only, then renormalizes. Throws std::domain_error when
/// the blended vector nearly cancels.
[[nodiscard]] Vec3 warp_normal(const Vec3& n0, const DeformationGraph& graph,
                               const SkinningBinding& binding);

[[nodiscard]] TriangleMesh warp_mesh(const TriangleMesh& mesh0, const DeformationGraph& graph,
                                     std::span<const SkinningBinding> bindings);

[[nodiscard]] TriangleMesh warp_mesh(const TriangleMesh& mesh0, const DeformationGraph& graph, int k);

/// Transform that maps `point` where the blend of the local node transforms
/// would (the rigid transform is not included), with the blended rotation
/// projected back onto SO(3).
[[nodiscard]] RigidTransform blended_transform(const Vec3& point, const DeformationGraph& graph,
                                               const SkinningBinding& binding);

/// Adds nodes at mesh vertices farther than sampling_radius from every node.
/// Existing nodes keep position, transform and radius; only neighbor sets
/// are recomputed.
[[nodiscard]] DeformationGraph extend_graph(const DeformationGraph& graph, const TriangleMesh& mesh,
                                            double sampling_radius, int n_neighbors, double sigma);

/// Recomputes every neighbor set with the build_graph rule.
void rebuild_neighbors(DeformationGraph& graph, int n_neighbors);

}  // namespace dfusion

#include "dfusion/deformation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace dfusion {
namespace {

using DistIndex = std::pair<double, std::int32_t>;

// k smallest (squared distance, index) pairs, lexicographic so ties go to the
// lower index.
template <typename IndexRange>
std::vector<DistIndex> k_smallest(const Vec3& p, const DeformationGraph& graph, int k,
                                  const IndexRange& indices, std::int32_t exclude = -1) {
  std::vector<DistIndex> all;
  all.reserve(indices.size());
  for (const std::int32_t i : indices) {
    if (i == exclude) {
      continue;
    }
    all.emplace_back((graph.nodes[i].position - p).squaredNorm(), i);
  }
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
  all.resize(take);
  return all;
}

struct AllNodes {
  std::size_t n;
  struct Iter {
    std::int32_t i;
    std::int32_t operator*() const { return i; }
    Iter& operator++() {
      ++i;
      return *this;
    }
    bool operator!=(const Iter& o) const { return i != o.i; }
  };
  [[nodiscard]] std::size_t size() const { return n; }
  [[nodiscard]] Iter begin() const { return {0}; }
  [[nodiscard]] Iter end() const { return {static_cast<std::int32_t>(n)}; }
};

// Fixed-capacity version of k_smallest for the skinning hot path; same
// ordering, no allocation.
template <typename IndexRange>
SkinningBinding skinning_over(const Vec3& v0, const DeformationGraph& graph, int k,
                              const IndexRange& indices) {
  std::array<double, kMaxInfluences> best_d2{};
  SkinningBinding b;
  for (const std::int32_t idx : indices) {
    const double d2 = (graph.nodes[idx].position - v0).squaredNorm();
    if (b.count == k && !(DistIndex(d2, idx) < DistIndex(best_d2[k - 1], b.nodes[k - 1]))) {
      continue;
    }
    int pos = b.count < k ? b.count++ : k - 1;
    while (pos > 0 && DistIndex(d2, idx) < DistIndex(best_d2[pos - 1], b.nodes[pos - 1])) {
      best_d2[pos] = best_d2[pos - 1];
      b.nodes[pos] = b.nodes[pos - 1];
      --pos;
    }
    best_d2[pos] = d2;
    b.nodes[pos] = idx;
  }

  double total = 0.0;
  for (int i = 0; i < b.count; ++i) {
    const double sigma = graph.nodes[b.nodes[i]].radius;
    b.weights[i] = std::exp(-best_d2[i] / (2.0 * sigma * sigma));
    total += b.weights[i];
  }
  if (total < 1e-30) {
    // Far from every node: bind rigidly to the closest one.
    b.count = 1;
    b.weights = {};
    b.weights[0] = 1.0;
    return b;
  }
  for (int i = 0; i < b.count; ++i) {
    b.weights[i] /= total;
  }
  return b;
}

void check_k(int k) {
  if (k < 1 || k > kMaxInfluences) {
    throw std::invalid_argument("skinning: k must lie in [1, " + std::to_string(kMaxInfluences) +
                                "], got " + std::to_string(k));
  }
}

}  // namespace

void DeformationGraph::validate() const {
  const auto n = static_cast<std::int32_t>(nodes.size());
  for (std::int32_t i = 0; i < n; ++i) {
    const auto& node = nodes[i];
    if (!(node.radius > 0.0)) {
      throw std::invalid_argument("graph: node " + std::to_string(i) + " has non-positive radius");
    }
    for (const auto j : node.neighbors) {
      if (j == i) {
        throw std::invalid_argument("graph: node " + std::to_string(i) + " lists itself");
      }
      if (j < 0 || j >= n) {
        throw std::invalid_argument("graph: node " + std::to_string(i) + " has neighbor out of range");
      }
    }
  }
}

std::vector<Vec3> sample_nodes(const TriangleMesh& mesh, double sampling_radius) {
  if (!(sampling_radius > 0.0)) {
    throw std::invalid_argument("sample_nodes: sampling radius must be positive");
  }
  const double r2 = sampling_radius * sampling_radius;
  std::vector<Vec3> nodes;
  for (const auto& v : mesh.vertices) {
    const bool covered = std::any_of(nodes.begin(), nodes.end(),
                                     [&](const Vec3& g) { return (g - v).squaredNorm() < r2; });
    if (!covered) {
      nodes.push_back(v);
    }
  }
  return nodes;
}

void rebuild_neighbors(DeformationGraph& graph, int n_neighbors) {
  if (n_neighbors < 1) {
    throw std::invalid_argument("graph: n_neighbors must be at least 1");
  }
  const AllNodes all{graph.nodes.size()};
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto nearest = k_smallest(graph.nodes[i].position, graph, n_neighbors, all,
                                    static_cast<std::int32_t>(i));
    auto& nb = graph.nodes[i].neighbors;
    nb.clear();
    for (const auto& [d2, j] : nearest) {
      nb.push_back(j);
    }
  }
}

DeformationGraph build_graph(std::span<const Vec3> positions, int n_neighbors, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("build_graph: sigma must be positive");
  }
  DeformationGraph graph;
  graph.nodes.reserve(positions.size());
  for (const auto& p : positions) {
    GraphNode node;
    node.position = p;
    node.radius = sigma;
    graph.nodes.push_back(std::move(node));
  }
  rebuild_neighbors(graph, n_neighbors);
  return graph;
}

std::vector<std::int32_t> nearest_nodes(const Vec3& p, const DeformationGraph& graph, int k) {
  const auto nearest = k_smallest(p, graph, k, AllNodes{graph.nodes.size()});
  std::vector<std::int32_t> out;
  out.reserve(nearest.size());
  for (const auto& [d2, i] : nearest) {
    out.push_back(i);
  }
  return out;
}

std::vector<std::int32_t> candidate_nodes(const Vec3& center, double radius,
                                          const DeformationGraph& graph, int k) {
  const auto nearest = k_smallest(center, graph, k, AllNodes{graph.nodes.size()});
  std::vector<std::int32_t> out;
  if (nearest.empty()) {
    return out;
  }
  // Any point q with |q - c| <= radius has d_k(q) <= d_k(c) + radius, so its
  // k nearest satisfy |n - c| <= d_k(c) + 2 radius. Small slack absorbs
  // rounding.
  const double bound = std::sqrt(nearest.back().first) + 2.0 * radius;
  const double bound2 = bound * bound * (1.0 + 1e-12) + 1e-18;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if ((graph.nodes[i].position - center).squaredNorm() <= bound2) {
      out.push_back(static_cast<std::int32_t>(i));
    }
  }
  return out;
}

SkinningBinding compute_skinning(const Vec3& v0, const DeformationGraph& graph, int k) {
  check_k(k);
  if (graph.nodes.empty()) {
    throw std::invalid_argument("compute_skinning: graph has no nodes");
  }
  return skinning_over(v0, graph, k, AllNodes{graph.nodes.size()});
}

SkinningBinding compute_skinning(const Vec3& v0, const DeformationGraph& graph, int k,
                                 std::span<const std::int32_t> candidates) {
  check_k(k);
  if (candidates.empty()) {
    throw std::invalid_argument("compute_skinning: empty candidate set");
  }
  return skinning_over(v0, graph, k, candidates);
}

std::vector<SkinningBinding> compute_bindings(std::span<const Vec3> points,
                                              const DeformationGraph& graph, int k) {
  std::vector<SkinningBinding> out;
  out.reserve(points.size());
  if (graph.nodes.empty()) {
    out.resize(points.size());
    return out;
  }
  for (const auto& p : points) {
    out.push_back(compute_skinning(p, graph, k));
  }
  return out;
}

Vec3 warp_point(const Vec3& v0, const DeformationGraph& graph, const SkinningBinding& binding) {
  if (binding.count == 0) {
    return graph.rigid.apply(v0);
  }
  Vec3 blended = Vec3::Zero();
  for (int i = 0; i < binding.count; ++i) {
    blended += binding.weights[i] * graph.nodes[binding.nodes[i]].transform.apply(v0);
  }
  return graph.rigid.apply(blended);
}

Vec3 warp_normal(const Vec3& n0, const DeformationGraph& graph, const SkinningBinding& binding) {
  Vec3 blended = Vec3::Zero();
  if (binding.count == 0) {
    blended = n0;
  } else {
    for (int i = 0; i < binding.count; ++i) {
      blended += binding.weights[i] * graph.nodes[binding.nodes[i]].transform.rotate(n0);
    }
  }
  blended = graph.rigid.rotate(blended);
  const double len = blended.norm();
  if (len < 1e-9) {
    throw std::domain_error("warp_normal: blended node rotations cancel");
  }
  return blended / len;
}

TriangleMesh warp_mesh(const TriangleMesh& mesh0, const DeformationGraph& graph,
                       std::span<const SkinningBinding> bindings) {
  if (bindings.size() != mesh0.vertices.size()) {
    throw std::invalid_argument("warp_mesh: one binding per vertex required");
  }
  TriangleMesh out;
  out.vertices.reserve(mesh0.vertices.size());
  out.normals.reserve(mesh0.normals.size());
  for (std::size_t i = 0; i < mesh0.vertices.size(); ++i) {
    out.vertices.push_back(warp_point(mesh0.vertices[i], graph, bindings[i]));
  }
  for (std::size_t i = 0; i < mesh0.normals.size(); ++i) {
    out.normals.push_back(warp_normal(mesh0.normals[i], graph, bindings[i]));
  }
  out.colors = mesh0.colors;
  out.triangles = mesh0.triangles;
  return out;
}

TriangleMesh warp_mesh(const TriangleMesh& mesh0, const DeformationGraph& graph, int k) {
  const auto bindings = compute_bindings(mesh0.vertices, graph, k);
  return warp_mesh(mesh0, graph, bindings);
}

RigidTransform blended_transform(const Vec3& point, const DeformationGraph& graph,
                                 const SkinningBinding& binding) {
  if (binding.count == 0) {
    return RigidTransform::identity();
  }
  Mat3 r = Mat3::Zero();
  Vec3 target = Vec3::Zero();
  for (int i = 0; i < binding.count; ++i) {
    const auto& t = graph.nodes[binding.nodes[i]].transform;
    r += binding.weights[i] * t.rotation();
    target += binding.weights[i] * t.apply(point);
  }
  const Mat3 rot = orthonormalize(r);
  return {rot, target - rot * point};
}

DeformationGraph extend_graph(const DeformationGraph& graph, const TriangleMesh& mesh,
                              double sampling_radius, int n_neighbors, double sigma) {
  if (!(sampling_radius > 0.0)) {
    throw std::invalid_argument("extend_graph: sampling radius must be positive");
  }
  const double r2 = sampling_radius * sampling_radius;
  DeformationGraph out = graph;
  const std::size_t old_count = graph.nodes.size();
  bool added = false;
  for (const auto& v : mesh.vertices) {
    const bool covered = std::any_of(out.nodes.begin(), out.nodes.end(), [&](const GraphNode& n) {
      return (n.position - v).squaredNorm() < r2;
    });
    if (covered) {
      continue;
    }
    GraphNode node;
    node.position = v;
    node.radius = sigma;
    if (old_count > 0) {
      const int k = std::min(n_neighbors, kMaxInfluences);
      node.transform = blended_transform(v, graph, compute_skinning(v, graph, std::max(k, 1)));
    }
    out.nodes.push_back(std::move(node));
    added = true;
  }
  if (added) {
    rebuild_neighbors(out, n_neighbors);
  }
  return out;
}

}  // namespace dfusion

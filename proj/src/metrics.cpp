#include "dfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dfusion {

std::optional<AlignmentError> alignment_error(const TriangleMesh& live_mesh,
                                              const ObservationFrame& frame,
                                              const EnergyParams& params) {
  if (live_mesh.normals.size() != live_mesh.vertices.size()) {
    throw std::invalid_argument("alignment_error: mesh needs one normal per vertex");
  }
  const auto corrs = associate(live_mesh.vertices, live_mesh.normals, frame, params);
  if (corrs.empty()) {
    return std::nullopt;
  }
  AlignmentError out;
  out.energy = data_energy(corrs, live_mesh.vertices);
  out.count = static_cast<int>(corrs.size());
  out.rms = std::sqrt(out.energy / out.count);
  return out;
}

// Region classification by barycentric sign tests.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double denom = d1 - d3;
    return denom > 0.0 ? Vec3(a + (d1 / denom) * ab) : a;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double denom = d2 - d6;
    return denom > 0.0 ? Vec3(a + (d2 / denom) * ac) : a;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double denom = (d4 - d3) + (d5 - d6);
    return denom > 0.0 ? Vec3(b + ((d4 - d3) / denom) * (c - b)) : b;
  }
  const double sum = va + vb + vc;
  if (!(std::abs(sum) > 0.0)) {
    // Degenerate (collinear) triangle: nearest of the three edges.
    const auto on_segment = [&](const Vec3& s0, const Vec3& s1) {
      const Vec3 d = s1 - s0;
      const double len2 = d.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((p - s0).dot(d) / len2, 0.0, 1.0) : 0.0;
      return Vec3(s0 + t * d);
    };
    Vec3 best = on_segment(a, b);
    for (const Vec3& q : {on_segment(b, c), on_segment(c, a)}) {
      if ((q - p).squaredNorm() < (best - p).squaredNorm()) {
        best = q;
      }
    }
    return best;
  }
  const double denom = 1.0 / sum;
  return a + ab * (vb * denom) + ac * (vc * denom);
}

namespace {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
  Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  [[nodiscard]] double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.squaredNorm();
  }
};

// Median-split bounding volume hierarchy over triangles. Queries return the
// exact minimum; the tree only prunes subtrees that cannot contain it.
class TriangleBvh {
 public:
  explicit TriangleBvh(const TriangleMesh& mesh) : mesh_(mesh) {
    order_.resize(mesh.triangles.size());
    std::iota(order_.begin(), order_.end(), 0);
    centroids_.reserve(mesh.triangles.size());
    for (const auto& t : mesh.triangles) {
      centroids_.push_back((mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0);
    }
    nodes_.reserve(2 * order_.size() / kLeafSize + 1);
    build(0, static_cast<int>(order_.size()));
  }

  [[nodiscard]] double squared_distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::max();
    query(0, p, best);
    return best;
  }

 private:
  static constexpr int kLeafSize = 4;

  struct Node {
    Aabb box;
    int begin = 0;
    int end = 0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    Aabb centroid_box;
    for (int i = begin; i < end; ++i) {
      const auto& t = mesh_.triangles[order_[i]];
      for (const auto v : t) {
        box.grow(mesh_.vertices[v]);
      }
      centroid_box.grow(centroids_[order_[i]]);
    }
    nodes_[id].box = box;
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    if (end - begin <= kLeafSize) {
      return id;
    }
    const Vec3 extent = centroid_box.hi - centroid_box.lo;
    int axis = 0;
    extent.maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) { return centroids_[a][axis] < centroids_[b][axis]; });
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void query(int id, const Vec3& p, double& best) const {
    const Node& node = nodes_[id];
    if (node.box.squared_distance(p) >= best) {
      return;
    }
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& t = mesh_.triangles[order_[i]];
        const Vec3 q = closest_point_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                                 mesh_.vertices[t[2]]);
        best = std::min(best, (q - p).squaredNorm());
      }
      return;
    }
    const double dl = nodes_[node.left].box.squared_distance(p);
    const double dr = nodes_[node.right].box.squared_distance(p);
    if (dl <= dr) {
      query(node.left, p, best);
      query(node.right, p, best);
    } else {
      query(node.right, p, best);
      query(node.left, p, best);
    }
  }

  const TriangleMesh& mesh_;
  std::vector<int> order_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

}  // namespace

SurfaceError surface_error(const TriangleMesh& live_mesh, const TriangleMesh& gt_mesh) {
  if (live_mesh.empty() || gt_mesh.empty() || gt_mesh.triangles.empty()) {
    throw std::invalid_argument("surface_error: both meshes must be non-empty");
  }
  const TriangleBvh bvh(gt_mesh);
  double sum = 0.0;
  double max2 = 0.0;
  for (const auto& v : live_mesh.vertices) {
    const double d2 = bvh.squared_distance(v);
    sum += d2;
    max2 = std::max(max2, d2);
  }
  return {std::sqrt(sum / static_cast<double>(live_mesh.vertices.size())), std::sqrt(max2)};
}

}  // namespace dfusion

#pragma once

// Independent oracles shared by the unit and acceptance tests: central
// finite differences of the tracking energy and dense direct solves of
// random SPD block systems.

#include "dfusion/block_system.hpp"
#include "dfusion/deformation_graph.hpp"
#include "dfusion/tracker.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace dfusion::testing {

struct GradientProblem {
  DeformationGraph graph;
  TriangleMesh mesh;
  std::vector<SkinningBinding> bindings;
  std::vector<Correspondence> correspondences;
};

inline Vec6 random_twist_vector(std::mt19937_64& rng, double bound) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Vec6 v;
  for (int i = 0; i < 6; ++i) {
    v[i] = u(rng);
  }
  return v;
}

/// Random points on a 30 x 20 cm patch at 0.6 m, `node_count` of them
/// promoted to graph nodes, every vertex paired with a random target plane
/// within a centimeter. Node and rigid transforms are random twists with
/// components bounded by `twist_bound`.
inline GradientProblem make_gradient_problem(std::mt19937_64& rng, int node_count, int vertex_count,
                                             double twist_bound, int n_neighbors = 4, int influences = 4) {
  std::uniform_real_distribution<double> ux(-0.15, 0.15);
  std::uniform_real_distribution<double> uy(-0.10, 0.10);
  std::uniform_real_distribution<double> uz(-0.02, 0.02);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  GradientProblem p;
  for (int i = 0; i < vertex_count; ++i) {
    p.mesh.vertices.emplace_back(ux(rng), uy(rng), 0.6 + uz(rng));
    p.mesh.normals.push_back(Vec3(0.3 * u(rng), 0.3 * u(rng), -1.0).normalized());
    p.mesh.colors.push_back(Rgb{});
  }
  std::vector<Vec3> nodes(p.mesh.vertices.begin(), p.mesh.vertices.begin() + node_count);
  p.graph = build_graph(nodes, n_neighbors, 0.05);
  for (auto& n : p.graph.nodes) {
    n.transform = se3_exp(Twist::from_vector(random_twist_vector(rng, twist_bound)));
  }
  p.graph.rigid = se3_exp(Twist::from_vector(random_twist_vector(rng, twist_bound)));
  p.bindings = compute_bindings(p.mesh.vertices, p.graph, influences);
  for (int i = 0; i < vertex_count; ++i) {
    const Vec3 n = Vec3(0.5 * u(rng), 0.5 * u(rng), -1.0).normalized();
    p.correspondences.push_back({i, p.mesh.vertices[i] + 0.01 * Vec3(u(rng), u(rng), u(rng)), n});
  }
  return p;
}

struct GradientCheck {
  double max_relative = 0.0;  // worst component, relative to the finite difference
  double vector_relative = 0.0;  // |g_analytic - g_fd| / |g_fd|
};

/// Central differences of total_energy along every increment coordinate,
/// compared with the analytic gradient -2 * rhs from linearize.
inline GradientCheck check_gradient(const GradientProblem& p, const EnergyParams& params, double step = 1e-6) {
  const BlockSparseSystem sys = linearize(p.graph, p.mesh, p.bindings, p.correspondences, params, 0.0);
  const int n = sys.dimension();
  std::vector<double> delta(static_cast<std::size_t>(n), 0.0);
  Eigen::VectorXd fd(n);
  Eigen::VectorXd an(n);
  for (int k = 0; k < n; ++k) {
    delta[k] = step;
    const double ep = total_energy(apply_update(p.graph, delta), p.mesh, p.bindings, p.correspondences, params);
    delta[k] = -step;
    const double em = total_energy(apply_update(p.graph, delta), p.mesh, p.bindings, p.correspondences, params);
    delta[k] = 0.0;
    fd[k] = (ep - em) / (2.0 * step);
    an[k] = -2.0 * sys.rhs()[k];
  }
  GradientCheck out;
  // Components that vanish analytically (a rotation about a pivot the
  // residual passes through) still carry finite-difference roundoff near
  // 1e-12, so each component is measured against at least 1e-6 of the
  // largest one.
  const double floor = std::max(1e-6 * fd.cwiseAbs().maxCoeff(), 1e-300);
  for (int k = 0; k < n; ++k) {
    out.max_relative = std::max(out.max_relative, std::abs(an[k] - fd[k]) / std::max(std::abs(fd[k]), floor));
  }
  out.vector_relative = (an - fd).norm() / std::max(fd.norm(), 1e-300);
  return out;
}

/// SPD block system assembled as J^T J from random residual blocks: every
/// unknown gets its own 8 x 6 block and each coupled pair a shared residual.
inline BlockSparseSystem random_spd_system(std::mt19937_64& rng, int blocks, double coupling) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution couple(coupling);
  auto random_block = [&](int rows) {
    Eigen::MatrixXd m(rows, 6);
    for (int i = 0; i < m.size(); ++i) {
      m.data()[i] = g(rng);
    }
    return m;
  };
  BlockSparseSystem sys(blocks);
  for (int i = 0; i < blocks; ++i) {
    const Eigen::MatrixXd j = random_block(8);
    sys.add(i, i, j.transpose() * j);
  }
  for (int i = 0; i < blocks; ++i) {
    for (int k = i + 1; k < blocks; ++k) {
      if (!couple(rng)) {
        continue;
      }
      const Eigen::MatrixXd ji = random_block(3);
      const Eigen::MatrixXd jk = random_block(3);
      sys.add(i, i, ji.transpose() * ji);
      sys.add(k, k, jk.transpose() * jk);
      sys.add(i, k, ji.transpose() * jk);
    }
  }
  for (double& b : sys.rhs()) {
    b = g(rng);
  }
  return sys;
}

inline Eigen::VectorXd dense_solve(const BlockSparseSystem& sys) {
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.rhs().data(), sys.dimension());
  return sys.to_dense().fullPivLu().solve(b);
}

inline double relative_error(std::span<const double> x, const Eigen::VectorXd& reference) {
  const Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return (v - reference).norm() / reference.norm();
}

}  // namespace dfusion::testing

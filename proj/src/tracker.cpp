#include "dfusion/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfusion {
namespace {

using Row6 = Eigen::Matrix<double, 1, 6>;
using Jac3x6 = Eigen::Matrix<double, 3, 6>;

std::vector<Vec3> warp_vertices(const TriangleMesh& mesh0, std::span<const SkinningBinding> bindings,
                                const DeformationGraph& graph) {
  std::vector<Vec3> out;
  out.reserve(mesh0.vertices.size());
  for (std::size_t i = 0; i < mesh0.vertices.size(); ++i) {
    out.push_back(warp_point(mesh0.vertices[i], graph, bindings[i]));
  }
  return out;
}

void check_bindings(const TriangleMesh& mesh0, std::span<const SkinningBinding> bindings) {
  if (bindings.size() != mesh0.vertices.size()) {
    throw std::invalid_argument("tracker: one skinning binding per reference vertex required");
  }
}

}  // namespace

void EnergyParams::validate() const {
  if (!(lambda_data > 0.0) || !(lambda_reg > 0.0)) {
    throw std::invalid_argument("energy params: lambda weights must be positive");
  }
  if (!(max_corr_distance > 0.0) || !(max_normal_angle > 0.0)) {
    throw std::invalid_argument("energy params: rejection gates must be positive");
  }
  if (gn_iterations < 1 || pcg_max_iterations < 1) {
    throw std::invalid_argument("energy params: iteration counts must be at least 1");
  }
  if (!(pcg_tolerance > 0.0) || !(lm_damping_init > 0.0)) {
    throw std::invalid_argument("energy params: tolerance and damping must be positive");
  }
  if (!(min_relative_decrease >= 0.0 && min_relative_decrease < 1.0)) {
    throw std::invalid_argument("energy params: min_relative_decrease must be in [0, 1)");
  }
}

std::vector<Correspondence> associate(std::span<const Vec3> points, std::span<const Vec3> normals,
                                      const ObservationFrame& frame, const EnergyParams& params) {
  const double cos_gate = std::cos(params.max_normal_angle);
  const double dist2_gate = params.max_corr_distance * params.max_corr_distance;
  std::vector<Correspondence> out;
  for (std::size_t m = 0; m < points.size(); ++m) {
    const auto pixel = project_to_pixel(points[m], frame.intrinsics);
    if (!pixel) {
      continue;
    }
    const auto [u, v] = *pixel;
    const auto& vd = frame.vertex_map.at(u, v);
    const auto& nd = frame.normal_map.at(u, v);
    if (!vd || !nd) {
      continue;
    }
    if ((points[m] - *vd).squaredNorm() > dist2_gate) {
      continue;
    }
    if (normals[m].dot(*nd) < cos_gate) {
      continue;
    }
    out.push_back({static_cast<int>(m), *vd, *nd});
  }
  return out;
}

std::vector<Correspondence> find_correspondences(const TriangleMesh& mesh0,
                                                 std::span<const SkinningBinding> bindings,
                                                 const DeformationGraph& graph,
                                                 const ObservationFrame& frame,
                                                 const EnergyParams& params) {
  check_bindings(mesh0, bindings);
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  points.reserve(mesh0.vertices.size());
  normals.reserve(mesh0.vertices.size());
  for (std::size_t i = 0; i < mesh0.vertices.size(); ++i) {
    points.push_back(warp_point(mesh0.vertices[i], graph, bindings[i]));
    normals.push_back(warp_normal(mesh0.normals[i], graph, bindings[i]));
  }
  return associate(points, normals, frame, params);
}

double data_energy(std::span<const Correspondence> correspondences,
                   std::span<const Vec3> warped_vertices) {
  double e = 0.0;
  for (const auto& c : correspondences) {
    const double r = c.target_normal.dot(warped_vertices[c.vertex_index] - c.target_point);
    e += r * r;
  }
  return e;
}

double reg_energy(const DeformationGraph& graph) {
  double e = 0.0;
  for (const auto& node : graph.nodes) {
    const Vec3 own = node.transform.apply(node.position);
    for (const auto j : node.neighbors) {
      e += (own - graph.nodes[j].transform.apply(node.position)).squaredNorm();
    }
  }
  return e;
}

double total_energy(const DeformationGraph& graph, const TriangleMesh& mesh0,
                    std::span<const SkinningBinding> bindings,
                    std::span<const Correspondence> correspondences, const EnergyParams& params) {
  check_bindings(mesh0, bindings);
  const auto warped = warp_vertices(mesh0, bindings, graph);
  return total_energy(data_energy(correspondences, warped), reg_energy(graph), params);
}

std::vector<Vec3> increment_pivots(const DeformationGraph& graph) {
  std::vector<Vec3> pivots;
  pivots.reserve(graph.nodes.size() + 1);
  Vec3 centroid = Vec3::Zero();
  for (const auto& node : graph.nodes) {
    pivots.push_back(node.transform.apply(node.position));
    centroid += pivots.back();
  }
  if (!graph.nodes.empty()) {
    centroid /= static_cast<double>(graph.nodes.size());
  }
  pivots.push_back(graph.rigid.apply(centroid));
  return pivots;
}

BlockSparseSystem linearize(const DeformationGraph& graph, const TriangleMesh& mesh0,
                            std::span<const SkinningBinding> bindings,
                            std::span<const Correspondence> correspondences,
                            const EnergyParams& params, double damping) {
  check_bindings(mesh0, bindings);
  const int node_count = static_cast<int>(graph.nodes.size());
  const int rigid = node_count;
  BlockSparseSystem system(node_count + 1);
  system.set_damping(damping);

  const auto pivots = increment_pivots(graph);
  const Mat3& r_rigid = graph.rigid.rotation();

  // Data residuals r = n_d . (T_rigid * sum_k w_k T_k v0 - v_d).
  std::array<Row6, kMaxInfluences + 1> jac;
  std::array<int, kMaxInfluences + 1> unknown;
  for (const auto& c : correspondences) {
    const auto& b = bindings[c.vertex_index];
    const Vec3& v0 = mesh0.vertices[c.vertex_index];
    const Vec3& n = c.target_normal;
    const Vec3 n_local = r_rigid.transpose() * n;

    Vec3 blended = Vec3::Zero();
    int count = 0;
    for (int i = 0; i < b.count; ++i) {
      const int k = b.nodes[i];
      const Vec3 p = graph.nodes[k].transform.apply(v0);
      blended += b.weights[i] * p;
      jac[count] << b.weights[i] * (p - pivots[k]).cross(n_local).transpose(),
          b.weights[i] * n_local.transpose();
      unknown[count] = k;
      ++count;
    }
    if (b.count == 0) {
      blended = v0;
    }
    const Vec3 warped = graph.rigid.apply(blended);
    jac[count] << (warped - pivots[rigid]).cross(n).transpose(), n.transpose();
    unknown[count] = rigid;
    ++count;

    const double r = n.dot(warped - c.target_point);
    const double w = params.lambda_data;
    for (int a = 0; a < count; ++a) {
      system.rhs_block(unknown[a]) -= w * r * jac[a].transpose();
      for (int bb = a; bb < count; ++bb) {
        system.add(unknown[a], unknown[bb], w * jac[a].transpose() * jac[bb]);
      }
    }
  }

  // Regularization residuals e = T_i g_i - T_j g_i. Node i's own pivot is
  // T_i g_i, so only its translation enters.
  const double w = params.lambda_reg;
  Jac3x6 ji;
  ji << Mat3::Zero(), Mat3::Identity();
  for (int i = 0; i < node_count; ++i) {
    const auto& node = graph.nodes[i];
    const Vec3& a = pivots[i];
    for (const auto j : node.neighbors) {
      const Vec3 bpos = graph.nodes[j].transform.apply(node.position);
      Jac3x6 jj;
      jj << skew(bpos - pivots[j]), -Mat3::Identity();
      const Vec3 e = a - bpos;
      system.rhs_block(i) -= w * ji.transpose() * e;
      system.rhs_block(j) -= w * jj.transpose() * e;
      system.add(i, i, w * ji.transpose() * ji);
      system.add(j, j, w * jj.transpose() * jj);
      system.add(i, j, w * ji.transpose() * jj);
    }
  }
  return system;
}

PcgResult pcg_solve(const BlockSparseSystem& system, const EnergyParams& params) {
  return pcg_solve(system, params.pcg_max_iterations, params.pcg_tolerance);
}

DeformationGraph apply_update(const DeformationGraph& graph, std::span<const double> delta) {
  const std::size_t expected = 6 * (graph.nodes.size() + 1);
  if (delta.size() != expected) {
    throw std::invalid_argument("apply_update: delta has the wrong length");
  }
  const auto pivots = increment_pivots(graph);
  // exp of a twist taken about pivot c equals exp of (w, v + c x w) about
  // the origin.
  auto about_origin = [&](std::size_t block) {
    const Vec6 d = Eigen::Map<const Vec6>(delta.data() + 6 * block);
    Twist xi = Twist::from_vector(d);
    xi.translation += pivots[block].cross(xi.rotation);
    return se3_exp(xi);
  };
  DeformationGraph out = graph;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    out.nodes[i].transform = about_origin(i) * out.nodes[i].transform;
  }
  out.rigid = about_origin(out.nodes.size()) * out.rigid;
  return out;
}

double damping_scale(const BlockSparseSystem& system) {
  double trace = 0.0;
  for (int i = 0; i < system.block_count(); ++i) {
    trace += system.diagonal(i).trace();
  }
  const double mean = trace / std::max(1, system.dimension());
  return mean > 0.0 ? mean : 1.0;
}

TrackResult track_frame(const DeformationGraph& graph_prev, const TriangleMesh& mesh0,
                        std::span<const SkinningBinding> bindings, const ObservationFrame& frame,
                        const EnergyParams& params) {
  params.validate();
  check_bindings(mesh0, bindings);

  TrackResult result{graph_prev, {}};
  auto& diag = result.diagnostics;
  diag.lambda_data = params.lambda_data;
  diag.lambda_reg = params.lambda_reg;

  double mu = params.lm_damping_init;
  bool any_correspondences = false;
  for (int it = 0; it < params.gn_iterations; ++it) {
    const auto corrs = find_correspondences(mesh0, bindings, result.graph, frame, params);
    diag.correspondences = static_cast<int>(corrs.size());
    if (corrs.empty()) {
      break;
    }
    any_correspondences = true;

    IterationDiagnostics step;
    step.correspondences = static_cast<int>(corrs.size());
    step.energy_before = total_energy(result.graph, mesh0, bindings, corrs, params);
    step.energy_after = step.energy_before;

    BlockSparseSystem system = linearize(result.graph, mesh0, bindings, corrs, params, 0.0);
    const double scale = damping_scale(system);
    double max_step = 0.0;
    for (int attempt = 0; attempt <= EnergyParams::kMaxRetries; ++attempt) {
      system.set_damping(mu * scale);
      const PcgResult solve = pcg_solve(system, params);
      step.pcg_iterations += solve.iterations;
      DeformationGraph candidate = apply_update(result.graph, solve.solution);
      const double energy = total_energy(candidate, mesh0, bindings, corrs, params);
      if (energy < step.energy_before) {
        result.graph = std::move(candidate);
        step.energy_after = energy;
        step.accepted = true;
        step.damping = mu;
        max_step = 0.0;
        for (const double x : solve.solution) {
          max_step = std::max(max_step, std::abs(x));
        }
        mu = std::max(mu * 0.5, EnergyParams::kDampingMin);
        break;
      }
      step.retries = attempt + 1;
      mu = std::min(mu * 10.0, EnergyParams::kDampingMax);
    }
    if (!step.accepted) {
      step.damping = mu;
    }
    diag.iterations.push_back(step);
    const bool converged = step.energy_before - step.energy_after <=
                           params.min_relative_decrease * step.energy_before;
    if (!step.accepted || converged || max_step < 1e-10) {
      break;
    }
  }
  diag.lost_tracking = !any_correspondences;
  if (diag.lost_tracking) {
    result.graph = graph_prev;
  }
  return result;
}

}  // namespace dfusion

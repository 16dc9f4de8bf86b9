#include "dfusion/block_system.hpp"

#include "dfusion/simd/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dfusion {

BlockSparseSystem::BlockSparseSystem(int block_count)
    : block_count_(block_count),
      diagonal_(static_cast<std::size_t>(block_count), Mat6::Zero()),
      rhs_(static_cast<std::size_t>(6 * block_count), 0.0) {
  if (block_count < 0) {
    throw std::invalid_argument("block system: negative block count");
  }
}

void BlockSparseSystem::add(int row, int col, const Mat6& block) {
  if (row == col) {
    diagonal_[row] += block;
    return;
  }
  const bool swap = row > col;
  const int r = swap ? col : row;
  const int c = swap ? row : col;
  const std::int64_t key = static_cast<std::int64_t>(r) * block_count_ + c;
  auto [it, inserted] = off_lookup_.try_emplace(key, off_.size());
  if (inserted) {
    off_.push_back({r, c, Mat6::Zero()});
  }
  if (swap) {
    off_[it->second].value += block.transpose();
  } else {
    off_[it->second].value += block;
  }
}

Mat6 BlockSparseSystem::block(int row, int col) const {
  if (row == col) {
    return diagonal_[row];
  }
  const bool swap = row > col;
  const int r = swap ? col : row;
  const int c = swap ? row : col;
  const auto it = off_lookup_.find(static_cast<std::int64_t>(r) * block_count_ + c);
  if (it == off_lookup_.end()) {
    return Mat6::Zero();
  }
  return swap ? Mat6(off_[it->second].value.transpose()) : off_[it->second].value;
}

void BlockSparseSystem::multiply(std::span<const double> x, std::span<double> y) const {
  using CVec6 = Eigen::Map<const Vec6>;
  using MVec6 = Eigen::Map<Vec6>;
  for (int i = 0; i < block_count_; ++i) {
    MVec6(y.data() + 6 * i) = diagonal_[i] * CVec6(x.data() + 6 * i) + damping_ * CVec6(x.data() + 6 * i);
  }
  for (const auto& b : off_) {
    MVec6(y.data() + 6 * b.row) += b.value * CVec6(x.data() + 6 * b.col);
    MVec6(y.data() + 6 * b.col) += b.value.transpose() * CVec6(x.data() + 6 * b.row);
  }
}

Eigen::MatrixXd BlockSparseSystem::to_dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dimension(), dimension());
  for (int i = 0; i < block_count_; ++i) {
    m.block<6, 6>(6 * i, 6 * i) = damped_diagonal(i);
  }
  for (const auto& b : off_) {
    m.block<6, 6>(6 * b.row, 6 * b.col) = b.value;
    m.block<6, 6>(6 * b.col, 6 * b.row) = b.value.transpose();
  }
  return m;
}

PcgResult pcg_solve(const BlockSparseSystem& system, int max_iterations, double tolerance,
                    const PcgObserver& observer) {
  const int n_blocks = system.block_count();
  const auto dim = static_cast<std::size_t>(system.dimension());

  std::vector<Eigen::LLT<Mat6>> precond;
  precond.reserve(static_cast<std::size_t>(n_blocks));
  for (int i = 0; i < n_blocks; ++i) {
    precond.emplace_back(system.damped_diagonal(i));
    if (precond.back().info() != Eigen::Success) {
      throw std::runtime_error("pcg_solve: diagonal block " + std::to_string(i) +
                               " is not positive definite");
    }
  }
  auto apply_precond = [&](std::span<const double> r, std::span<double> z) {
    for (int i = 0; i < n_blocks; ++i) {
      Eigen::Map<Vec6>(z.data() + 6 * i) = precond[i].solve(Eigen::Map<const Vec6>(r.data() + 6 * i));
    }
  };

  PcgResult result;
  result.solution.assign(dim, 0.0);
  std::vector<double> r = system.rhs();
  std::vector<double> z(dim, 0.0);
  std::vector<double> p(dim, 0.0);
  std::vector<double> ap(dim, 0.0);

  const double b_norm = std::sqrt(simd::dot(r, r));
  if (b_norm == 0.0) {
    return result;
  }
  apply_precond(r, z);
  p = z;
  double rz = simd::dot(r, z);
  const double rz0 = rz;
  result.relative_residual = 1.0;
  result.preconditioned_relative_residual = 1.0;

  for (int it = 1; it <= max_iterations; ++it) {
    system.multiply(p, ap);
    const double p_ap = simd::dot(p, ap);
    if (!(p_ap > 0.0)) {
      break;
    }
    const double alpha = rz / p_ap;
    simd::axpy(alpha, p, result.solution);
    simd::axpy(-alpha, ap, r);
    apply_precond(r, z);
    const double rz_new = simd::dot(r, z);
    result.iterations = it;
    result.relative_residual = std::sqrt(simd::dot(r, r)) / b_norm;
    result.preconditioned_relative_residual = std::sqrt(std::max(rz_new, 0.0) / rz0);
    if (observer) {
      observer(it, result.solution);
    }
    if (result.preconditioned_relative_residual <= tolerance) {
      break;
    }
    const double beta = rz_new / rz;
    simd::xpby(z, beta, p);
    rz = rz_new;
  }
  return result;
}

}  // namespace dfusion

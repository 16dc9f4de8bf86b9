#pragma once

// Symmetric block-sparse normal equations over 6-dof unknowns and the
// block-Jacobi preconditioned conjugate gradient solver.

#include "dfusion/geometry.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

namespace dfusion {

class BlockSparseSystem {
 public:
  explicit BlockSparseSystem(int block_count);

  [[nodiscard]] int block_count() const { return block_count_; }
  [[nodiscard]] int dimension() const { return 6 * block_count_; }

  /// Undamped diagonal block.
  [[nodiscard]] Mat6& diagonal(int i) { return diagonal_[i]; }
  [[nodiscard]] const Mat6& diagonal(int i) const { return diagonal_[i]; }
  [[nodiscard]] Mat6 damped_diagonal(int i) const {
    return diagonal_[i] + damping_ * Mat6::Identity();
  }

  /// Accumulates H(row, col) += block (and the transpose into H(col, row)).
  void add(int row, int col, const Mat6& block);

  /// H(row, col) including the transpose half; zero when absent.
  [[nodiscard]] Mat6 block(int row, int col) const;

  [[nodiscard]] std::size_t off_diagonal_count() const { return off_.size(); }

  /// Right-hand side (-J^T W r for Gauss-Newton).
  [[nodiscard]] std::vector<double>& rhs() { return rhs_; }
  [[nodiscard]] const std::vector<double>& rhs() const { return rhs_; }
  [[nodiscard]] Eigen::Map<Vec6> rhs_block(int i) { return Eigen::Map<Vec6>(rhs_.data() + 6 * i); }

  [[nodiscard]] double damping() const { return damping_; }
  void set_damping(double mu) { damping_ = mu; }

  /// y = (H + damping I) x
  void multiply(std::span<const double> x, std::span<double> y) const;

  /// Dense H + damping I, for small systems and oracles.
  [[nodiscard]] Eigen::MatrixXd to_dense() const;

 private:
  struct OffBlock {
    int row;  // row < col
    int col;
    Mat6 value;
  };

  int block_count_ = 0;
  double damping_ = 0.0;
  std::vector<Mat6> diagonal_;
  std::vector<OffBlock> off_;
  std::unordered_map<std::int64_t, std::size_t> off_lookup_;
  std::vector<double> rhs_;
};

struct PcgResult {
  std::vector<double> solution;
  int iterations = 0;
  double relative_residual = 0.0;                // |b - A x| / |b|
  double preconditioned_relative_residual = 0.0;  // sqrt(r^T M^-1 r / r0^T M^-1 r0)
};

/// Called after every iteration with the iteration number and current iterate.
using PcgObserver = std::function<void(int, std::span<const double>)>;

/// Solves (H + damping I) x = rhs with block-Jacobi preconditioning,
/// stopping when the preconditioned relative residual reaches `tolerance` or
/// after `max_iterations`. Throws std::runtime_error naming the first
/// diagonal block that is not positive definite.
[[nodiscard]] PcgResult pcg_solve(const BlockSparseSystem& system, int max_iterations,
                                  double tolerance, const PcgObserver& observer = {});

}  // namespace dfusion

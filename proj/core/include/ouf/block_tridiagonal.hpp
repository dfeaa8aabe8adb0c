#pragma once

#include <vector>

#include <Eigen/Dense>

namespace ouf {

// Symmetric block tri-diagonal matrix with square p x p blocks.  Only the
// diagonal and super-diagonal blocks are stored; the sub-diagonal is the
// transpose of the super-diagonal by symmetry.
struct BlockTridiagonal {
  std::vector<Eigen::MatrixXd> diag;   // n blocks
  std::vector<Eigen::MatrixXd> super;  // n - 1 blocks

  Eigen::Index num_blocks() const { return static_cast<Eigen::Index>(diag.size()); }
  Eigen::Index block_dim() const { return diag.empty() ? 0 : diag.front().rows(); }
  Eigen::Index dim() const { return num_blocks() * block_dim(); }

  Eigen::MatrixXd to_dense() const;
};

// Block Cholesky factorization M = L L^T with L lower block bi-diagonal.
// Throws NumericalError if a pivot block is not positive definite.
class BlockCholesky {
 public:
  explicit BlockCholesky(const BlockTridiagonal& m);

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;
  double log_det() const { return log_det_; }

 private:
  std::vector<Eigen::MatrixXd> chol_;  // dense lower factors of pivot blocks
  std::vector<Eigen::MatrixXd> sub_;   // sub-diagonal blocks of L
  Eigen::Index p_ = 0;
  double log_det_ = 0.0;
};

// One-shot helpers.
Eigen::MatrixXd block_tridiag_solve(const BlockTridiagonal& m, const Eigen::MatrixXd& rhs);
double block_tridiag_logdet(const BlockTridiagonal& m);

}  // namespace ouf

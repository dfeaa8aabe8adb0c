#include "ouf/block_tridiagonal.hpp"

#include <cmath>
#include <stdexcept>

#include "ouf/common.hpp"

namespace ouf {

Eigen::MatrixXd BlockTridiagonal::to_dense() const {
  const Eigen::Index p = block_dim(), n = num_blocks();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * p, n * p);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.block(j * p, j * p, p, p) = diag[j];
    if (j + 1 < n) {
      out.block(j * p, (j + 1) * p, p, p) = super[j];
      out.block((j + 1) * p, j * p, p, p) = super[j].transpose();
    }
  }
  return out;
}

BlockCholesky::BlockCholesky(const BlockTridiagonal& m) {
  const Eigen::Index n = m.num_blocks();
  if (n == 0) throw std::invalid_argument("BlockCholesky: empty matrix");
  if (m.super.size() + 1 != m.diag.size())
    throw std::invalid_argument("BlockCholesky: block count mismatch");
  p_ = m.block_dim();
  chol_.resize(n);
  sub_.resize(n > 0 ? n - 1 : 0);

  Eigen::MatrixXd pivot = m.diag[0];
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::LLT<Eigen::MatrixXd> llt(pivot);
    if (llt.info() != Eigen::Success)
      throw NumericalError("BlockCholesky: pivot block not positive definite");
    chol_[j] = llt.matrixL();
    for (Eigen::Index k = 0; k < p_; ++k) log_det_ += 2.0 * std::log(chol_[j](k, k));
    if (j + 1 < n) {
      // L_{j+1,j} = B_j^T L_j^{-T}
      sub_[j] = chol_[j]
                    .triangularView<Eigen::Lower>()
                    .solve(m.super[j])
                    .transpose();
      pivot = m.diag[j + 1] - sub_[j] * sub_[j].transpose();
    }
  }
}

Eigen::MatrixXd BlockCholesky::solve(const Eigen::MatrixXd& rhs) const {
  const Eigen::Index n = static_cast<Eigen::Index>(chol_.size());
  if (rhs.rows() != n * p_)
    throw std::invalid_argument("BlockCholesky::solve: rhs dimension mismatch");
  Eigen::MatrixXd x = rhs;
  // Forward sweep L y = rhs.
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j > 0) x.middleRows(j * p_, p_).noalias() -= sub_[j - 1] * x.middleRows((j - 1) * p_, p_);
    chol_[j].triangularView<Eigen::Lower>().solveInPlace(x.middleRows(j * p_, p_));
  }
  // Back sweep L^T x = y.
  for (Eigen::Index j = n - 1; j >= 0; --j) {
    if (j + 1 < n)
      x.middleRows(j * p_, p_).noalias() -=
          sub_[j].transpose() * x.middleRows((j + 1) * p_, p_);
    chol_[j].triangularView<Eigen::Lower>().transpose().solveInPlace(
        x.middleRows(j * p_, p_));
  }
  return x;
}

Eigen::MatrixXd block_tridiag_solve(const BlockTridiagonal& m, const Eigen::MatrixXd& rhs) {
  return BlockCholesky(m).solve(rhs);
}

double block_tridiag_logdet(const BlockTridiagonal& m) {
  return BlockCholesky(m).log_det();
}

}  // namespace ouf

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "ouf/block_tridiagonal.hpp"

namespace ouf {

// Drift and diffusion of the latent process d eta = -theta * eta dt + sigma dW.
// theta must have positive diagonal and eigenvalues with positive real part;
// sigma holds the positive diagonal of the diffusion matrix.
struct OUParams {
  Eigen::MatrixXd theta;  // p x p
  Eigen::VectorXd sigma;  // p diffusion SDs

  Eigen::Index num_factors() const { return theta.rows(); }
  void validate() const;  // throws std::invalid_argument
};

// Strictly increasing observation times.
struct TimeGrid {
  std::vector<double> times;

  Eigen::Index size() const { return static_cast<Eigen::Index>(times.size()); }
  double operator[](Eigen::Index i) const { return times[static_cast<std::size_t>(i)]; }
  void validate() const;  // throws std::invalid_argument on ties / disorder
};

// True iff diag(theta) > diag_lower and all eigenvalues have positive real part.
bool is_valid_drift(const Eigen::MatrixXd& theta, double diag_lower = 0.0);

// Stationary covariance V = unvec{(theta (+) theta)^{-1} vec(sigma sigma^T)};
// result is symmetrized.  Throws NumericalError if the drift is not stable.
Eigen::MatrixXd stationary_variance(const OUParams& params);

// Cov(eta(s), eta(t) | eta(0)) for 0 <= s <= t.
Eigen::MatrixXd conditional_cov(const OUParams& params, double s, double t);

// Stationary Cov(eta(s), eta(t)) for 0 <= s <= t, via the Kronecker-sum form.
Eigen::MatrixXd marginal_cov(const OUParams& params, double s, double t);

// Same quantity for gap delta = t - s >= 0, computed as V e^{-theta^T delta}.
Eigen::MatrixXd marginal_cov_gap_form(const OUParams& params, double delta);

// Precision matrix of (eta(t_1), ..., eta(t_n)) over the grid; block
// tri-diagonal with p x p blocks.  Supports n >= 1 (n = 1 gives V^{-1}).
BlockTridiagonal precision_matrix(const OUParams& params, const TimeGrid& grid);

// Precision matrix together with the stationary covariance and the
// log-determinant of the implied n p x n p latent covariance (free by-products
// of the block assembly, needed by the structured likelihood).
struct LatentPrecision {
  BlockTridiagonal omega;
  Eigen::MatrixXd v;
  double logdet_cov = 0.0;
};
LatentPrecision latent_precision(const OUParams& params, const TimeGrid& grid);

// Rescaling to unit stationary variances: constants c_j = V_jj^{-1/2},
// theta* = C theta C^{-1}, sigma* = C sigma with C = diag(c).  Leaves the
// stationary correlations and the drift spectrum unchanged.
struct RescaleResult {
  OUParams params;
  Eigen::VectorXd constants;
};
RescaleResult rescale_to_unit_variance(const OUParams& params);

// Diffusion SDs that give unit stationary variances for a fixed drift: solves
// the p x p linear system diag(V(theta, sigma)) = 1 for sigma^2.  Throws
// NumericalError when the system is singular or yields non-positive sigma^2.
Eigen::VectorXd sigma_from_theta(const Eigen::MatrixXd& theta);

// Dense n p x n p stationary covariance of the latent states over the grid,
// assembled from the gap-form blocks.  Reference/helper; the likelihood works
// with the precision form instead.
Eigen::MatrixXd latent_cov_dense(const OUParams& params, const TimeGrid& grid);

// Exact stationary draw at t_1 plus exact transitions; returns n x p.
Eigen::MatrixXd sample_path(const OUParams& params, const TimeGrid& grid, std::uint64_t seed);

// Model-implied cross-correlations at the given gaps; requires unit stationary
// variances (throws std::invalid_argument otherwise).  Entry (i, j) of the
// result for gap d is Corr(eta_i(t), eta_j(t + d)).
std::vector<Eigen::MatrixXd> correlation_decay(const OUParams& params,
                                               const std::vector<double>& gaps);

}  // namespace ouf

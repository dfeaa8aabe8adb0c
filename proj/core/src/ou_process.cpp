#include "ouf/ou_process.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "ouf/common.hpp"
#include "ouf/linalg.hpp"
#include "ouf/rng.hpp"

namespace ouf {

namespace {

constexpr double kRcondWarn = 1e-12;

void warn_ill_conditioned(const char* where) {
  std::cerr << "ouf: warning: " << where
            << ": factor block nearly singular (rcond < 1e-12)\n";
}

// LLT with a positive-definiteness check and a condition warning.
Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& m, const char* where) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError(std::string(where) + ": matrix not positive definite");
  if (llt.rcond() < kRcondWarn) warn_ill_conditioned(where);
  return llt;
}

}  // namespace

void OUParams::validate() const {
  if (theta.rows() != theta.cols())
    throw std::invalid_argument("OUParams: theta must be square");
  if (sigma.size() != theta.rows())
    throw std::invalid_argument("OUParams: sigma length must match theta");
  if (!(sigma.array() > 0.0).all())
    throw std::invalid_argument("OUParams: sigma entries must be positive");
  if (!is_valid_drift(theta))
    throw std::invalid_argument(
        "OUParams: theta needs a positive diagonal and eigenvalues with "
        "positive real part");
}

void TimeGrid::validate() const {
  for (std::size_t j = 1; j < times.size(); ++j)
    if (!(times[j] > times[j - 1]))
      throw std::invalid_argument("TimeGrid: times must be strictly increasing");
}

bool is_valid_drift(const Eigen::MatrixXd& theta, double diag_lower) {
  if (theta.rows() != theta.cols() || theta.rows() == 0) return false;
  if (!theta.allFinite()) return false;
  if (!(theta.diagonal().array() > diag_lower).all()) return false;
  const Eigen::VectorXcd eigs = theta.eigenvalues();
  return (eigs.real().array() > 0.0).all();
}

Eigen::MatrixXd stationary_variance(const OUParams& params) {
  const Eigen::Index p = params.num_factors();
  if (!is_valid_drift(params.theta))
    throw NumericalError("stationary_variance: drift is not stable");
  const Eigen::MatrixXd ks = kron_sum(params.theta, params.theta);
  const Eigen::MatrixXd s2 =
      Eigen::MatrixXd(params.sigma.array().square().matrix().asDiagonal());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ks);
  if (!lu.isInvertible())
    throw NumericalError("stationary_variance: Kronecker sum is singular");
  const Eigen::MatrixXd v = unvec(lu.solve(vec(s2)), p, p);
  return 0.5 * (v + v.transpose());
}

Eigen::MatrixXd conditional_cov(const OUParams& params, double s, double t) {
  if (s < 0.0 || t < s)
    throw std::invalid_argument("conditional_cov: requires 0 <= s <= t");
  const Eigen::Index p = params.num_factors();
  const Eigen::MatrixXd ks = kron_sum(params.theta, params.theta);
  const Eigen::MatrixXd grown =
      mat_exp(s * ks) - Eigen::MatrixXd::Identity(p * p, p * p);
  // e^{-(t theta (+) s theta)} factors as e^{-t theta} ox e^{-s theta}.
  const Eigen::MatrixXd shift = kron(mat_exp(-t * params.theta), mat_exp(-s * params.theta));
  const Eigen::MatrixXd s2 =
      Eigen::MatrixXd(params.sigma.array().square().matrix().asDiagonal());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ks);
  if (!lu.isInvertible())
    throw NumericalError("conditional_cov: Kronecker sum is singular");
  return unvec(lu.solve(grown * shift * vec(s2)), p, p);
}

Eigen::MatrixXd marginal_cov(const OUParams& params, double s, double t) {
  if (s < 0.0 || t < s)
    throw std::invalid_argument("marginal_cov: requires 0 <= s <= t");
  const Eigen::Index p = params.num_factors();
  const Eigen::MatrixXd ks = kron_sum(params.theta, params.theta);
  // (theta (+) theta) s - (theta t (+) theta s) collapses to -(t-s) theta ox I.
  const Eigen::MatrixXd exponent =
      s * ks - kron_sum(t * params.theta, s * params.theta);
  const Eigen::MatrixXd s2 =
      Eigen::MatrixXd(params.sigma.array().square().matrix().asDiagonal());
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ks);
  if (!lu.isInvertible())
    throw NumericalError("marginal_cov: Kronecker sum is singular");
  return unvec(lu.solve(mat_exp(exponent) * vec(s2)), p, p);
}

Eigen::MatrixXd marginal_cov_gap_form(const OUParams& params, double delta) {
  if (delta < 0.0) throw std::invalid_argument("marginal_cov_gap_form: delta < 0");
  return stationary_variance(params) * mat_exp(-delta * params.theta.transpose());
}

LatentPrecision latent_precision(const OUParams& params, const TimeGrid& grid) {
  grid.validate();
  const Eigen::Index n = grid.size();
  if (n < 1) throw std::invalid_argument("latent_precision: empty grid");
  const Eigen::Index p = params.num_factors();

  LatentPrecision out;
  out.v = stationary_variance(params);
  const Eigen::MatrixXd& v = out.v;
  const Eigen::LLT<Eigen::MatrixXd> v_llt = checked_llt(v, "latent_precision");
  const Eigen::MatrixXd v_inv = v_llt.solve(Eigen::MatrixXd::Identity(p, p));
  for (Eigen::Index k = 0; k < p; ++k)
    out.logdet_cov += 2.0 * std::log(v_llt.matrixLLT()(k, k));

  BlockTridiagonal& omega = out.omega;
  omega.diag.assign(static_cast<std::size_t>(n), v_inv);
  if (n == 1) return out;
  omega.super.resize(static_cast<std::size_t>(n - 1));

  // Per-gap pieces: R = V e^{-theta^T d} V^{-1} and the backward conditional
  // covariance A = V - R e^{-theta d} V; the determinant of A also equals the
  // forward transition covariance determinant, so log|Psi| accumulates here.
  std::vector<Eigen::MatrixXd> r(n - 1), e(n - 1), p_blk(n - 1), a_inv(n - 1);
  for (Eigen::Index j = 0; j < n - 1; ++j) {
    const double gap = grid[j + 1] - grid[j];
    e[j] = mat_exp(-gap * params.theta);
    r[j] = v * e[j].transpose() * v_inv;
    const Eigen::MatrixXd a = v - r[j] * e[j] * v;
    const Eigen::LLT<Eigen::MatrixXd> a_llt =
        checked_llt(0.5 * (a + a.transpose()), "latent_precision");
    for (Eigen::Index k = 0; k < p; ++k)
      out.logdet_cov += 2.0 * std::log(a_llt.matrixLLT()(k, k));
    a_inv[j] = a_llt.solve(Eigen::MatrixXd::Identity(p, p));
    p_blk[j] = a_llt.solve(r[j]);
  }

  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::MatrixXd d;
    if (j == 0) {
      d = a_inv[0];
    } else {
      d = v_inv + r[j - 1].transpose() * p_blk[j - 1];
      if (j < n - 1) d += p_blk[j] * e[j];
    }
    omega.diag[static_cast<std::size_t>(j)] = 0.5 * (d + d.transpose());
    if (j < n - 1) omega.super[static_cast<std::size_t>(j)] = -p_blk[j];
  }
  return out;
}

BlockTridiagonal precision_matrix(const OUParams& params, const TimeGrid& grid) {
  return latent_precision(params, grid).omega;
}

RescaleResult rescale_to_unit_variance(const OUParams& params) {
  const Eigen::MatrixXd v = stationary_variance(params);
  const Eigen::VectorXd c = v.diagonal().array().rsqrt();
  RescaleResult out;
  out.constants = c;
  out.params.theta =
      c.asDiagonal() * params.theta * c.cwiseInverse().asDiagonal();
  out.params.sigma = c.cwiseProduct(params.sigma);
  return out;
}

Eigen::VectorXd sigma_from_theta(const Eigen::MatrixXd& theta) {
  const Eigen::Index p = theta.rows();
  if (!is_valid_drift(theta))
    throw NumericalError("sigma_from_theta: drift is not stable");
  const Eigen::MatrixXd ks = kron_sum(theta, theta);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(ks);
  if (!lu.isInvertible())
    throw NumericalError("sigma_from_theta: Kronecker sum is singular");
  // diag(V) is linear in sigma^2: column k holds diag(unvec(KS^{-1} vec(e_k e_k^T))).
  Eigen::MatrixXd coef(p, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(p, p);
    basis(k, k) = 1.0;
    coef.col(k) = unvec(lu.solve(vec(basis)), p, p).diagonal();
  }
  Eigen::FullPivLU<Eigen::MatrixXd> coef_lu(coef);
  if (!coef_lu.isInvertible())
    throw NumericalError("sigma_from_theta: unit-variance system is singular");
  const Eigen::VectorXd s2 = coef_lu.solve(Eigen::VectorXd::Ones(p));
  if (!(s2.array() > 0.0).all())
    throw NumericalError("sigma_from_theta: no positive diffusion solves the system");
  return s2.cwiseSqrt();
}

Eigen::MatrixXd latent_cov_dense(const OUParams& params, const TimeGrid& grid) {
  grid.validate();
  const Eigen::Index n = grid.size(), p = params.num_factors();
  const Eigen::MatrixXd v = stationary_variance(params);
  Eigen::MatrixXd cov(n * p, n * p);
  for (Eigen::Index j = 0; j < n; ++j) {
    cov.block(j * p, j * p, p, p) = v;
    for (Eigen::Index l = j + 1; l < n; ++l) {
      const Eigen::MatrixXd decay = mat_exp(-(grid[l] - grid[l - 1]) * params.theta);
      cov.block(j * p, l * p, p, p) =
          cov.block(j * p, (l - 1) * p, p, p) * decay.transpose();
      cov.block(l * p, j * p, p, p) = cov.block(j * p, l * p, p, p).transpose();
    }
  }
  return cov;
}

Eigen::MatrixXd sample_path(const OUParams& params, const TimeGrid& grid, std::uint64_t seed) {
  grid.validate();
  const Eigen::Index n = grid.size(), p = params.num_factors();
  const Eigen::MatrixXd v = stationary_variance(params);
  const Eigen::MatrixXd root_v = checked_llt(v, "sample_path").matrixL();

  Rng rng(seed);
  auto draw_normal = [&](Eigen::Index dim) {
    Eigen::VectorXd z(dim);
    for (Eigen::Index i = 0; i < dim; ++i) z[i] = rng.normal();
    return z;
  };

  Eigen::MatrixXd path(n, p);
  Eigen::VectorXd state = root_v * draw_normal(p);
  path.row(0) = state.transpose();
  for (Eigen::Index j = 1; j < n; ++j) {
    const double gap = grid[j] - grid[j - 1];
    const Eigen::MatrixXd decay = mat_exp(-gap * params.theta);
    // Transition covariance V - e^{-theta d} V e^{-theta^T d}.
    const Eigen::MatrixXd q = v - decay * v * decay.transpose();
    const Eigen::MatrixXd root_q =
        checked_llt(0.5 * (q + q.transpose()), "sample_path").matrixL();
    state = decay * state + root_q * draw_normal(p);
    path.row(j) = state.transpose();
  }
  return path;
}

std::vector<Eigen::MatrixXd> correlation_decay(const OUParams& params,
                                               const std::vector<double>& gaps) {
  const Eigen::MatrixXd v = stationary_variance(params);
  if (((v.diagonal().array() - 1.0).abs() > 1e-8).any())
    throw std::invalid_argument(
        "correlation_decay: process must have unit stationary variances");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(gaps.size());
  for (const double gap : gaps) {
    if (gap < 0.0) throw std::invalid_argument("correlation_decay: negative gap");
    out.push_back(v * mat_exp(-gap * params.theta.transpose()));
  }
  return out;
}

}  // namespace ouf

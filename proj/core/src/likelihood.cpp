#include "ouf/likelihood.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "ouf/common.hpp"
#include "ouf/linalg.hpp"

namespace ouf {

namespace {

// Latent covariance blocks over the grid: Psi_{jl} = V e^{-theta^T (t_l-t_j)}
// for j <= l, built from per-gap decay factors.
std::vector<Eigen::MatrixXd> latent_cov_blocks(const OUParams& ou,
                                               const TimeGrid& grid,
                                               const Eigen::MatrixXd& v) {
  const Eigen::Index n = grid.size();
  std::vector<Eigen::MatrixXd> blocks(static_cast<std::size_t>(n * n));
  auto at = [&](Eigen::Index j, Eigen::Index l) -> Eigen::MatrixXd& {
    return blocks[static_cast<std::size_t>(j * n + l)];
  };
  std::vector<Eigen::MatrixXd> decay(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  for (Eigen::Index j = 0; j + 1 < n; ++j)
    decay[static_cast<std::size_t>(j)] =
        mat_exp(-(grid[j + 1] - grid[j]) * ou.theta).transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    at(j, j) = v;
    for (Eigen::Index l = j + 1; l < n; ++l)
      at(j, l) = at(j, l - 1) * decay[static_cast<std::size_t>(l - 1)];
  }
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index l = 0; l < j; ++l) at(j, l) = at(l, j).transpose();
  return blocks;
}

Eigen::MatrixXd assemble_sigma_star_impl(const MeasurementParams& meas,
                                         const OUParams& ou, const TimeGrid& grid,
                                         std::vector<Eigen::MatrixXd>* psi_out) {
  const Eigen::Index n = grid.size(), k = meas.num_outcomes();
  const Eigen::MatrixXd v = stationary_variance(ou);
  std::vector<Eigen::MatrixXd> psi = latent_cov_blocks(ou, grid, v);

  Eigen::MatrixXd sigma_star(n * k, n * k);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index l = 0; l < n; ++l) {
      Eigen::MatrixXd block =
          meas.lambda * psi[static_cast<std::size_t>(j * n + l)] *
          meas.lambda.transpose();
      block += Eigen::MatrixXd(meas.sigma_u.asDiagonal());
      if (j == l) block += Eigen::MatrixXd(meas.sigma_eps.asDiagonal());
      sigma_star.block(j * k, l * k, k, k) = block;
    }
  }
  if (psi_out) *psi_out = std::move(psi);
  return sigma_star;
}

double neg2_loglik_dense_subject(const MeasurementParams& meas, const OUParams& ou,
                                 const SubjectPanel& panel) {
  const Eigen::MatrixXd sigma_star =
      assemble_sigma_star_impl(meas, ou, panel.grid, nullptr);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_star);
  if (llt.info() != Eigen::Success)
    throw NumericalError("neg2_loglik: subject covariance not positive definite");
  const Eigen::VectorXd y = panel.stacked();
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < sigma_star.rows(); ++i)
    logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
  const double quad = y.dot(llt.solve(y));
  return static_cast<double>(sigma_star.rows()) * std::log(2.0 * std::numbers::pi) +
         logdet + quad;
}

double neg2_loglik_structured_subject(const MeasurementParams& meas,
                                      const LatentPrecision& lp,
                                      const SubjectPanel& panel) {
  const Eigen::Index n = panel.num_occasions();
  const Eigen::Index k = meas.num_outcomes();
  const Eigen::Index p = meas.num_factors();

  const Eigen::VectorXd eps_inv = meas.sigma_eps.cwiseInverse();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < k; ++j)
    if (meas.sigma_u[j] > 0.0) active.push_back(j);
  const Eigen::Index ka = static_cast<Eigen::Index>(active.size());

  // Inner matrix M = C^{-1} + A^T E^{-1} A over [latent states ; intercepts]:
  // latent part is Omega plus a repeated p x p block, the border couples each
  // occasion to the intercepts, the corner is diagonal.
  const Eigen::MatrixXd q =
      meas.lambda.transpose() * eps_inv.asDiagonal() * meas.lambda;
  BlockTridiagonal t = lp.omega;
  for (auto& d : t.diag) d += q;

  Eigen::MatrixXd u_occ(p, ka);       // Lambda^T E^{-1} restricted to active outcomes
  Eigen::VectorXd corner_diag(ka);    // 1/sigma_u + n/sigma_eps
  for (Eigen::Index a = 0; a < ka; ++a) {
    const Eigen::Index j = active[static_cast<std::size_t>(a)];
    u_occ.col(a) = meas.lambda.row(j).transpose() * eps_inv[j];
    corner_diag[a] = 1.0 / meas.sigma_u[j] + static_cast<double>(n) * eps_inv[j];
  }

  const BlockCholesky t_fac(t);

  // z = A^T E^{-1} y, split into latent and intercept parts.
  Eigen::VectorXd z1(n * p);
  Eigen::VectorXd col_sums = Eigen::VectorXd::Zero(k);
  double y_quad = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd yj = panel.y.row(j).transpose();
    z1.segment(j * p, p) = meas.lambda.transpose() * (eps_inv.cwiseProduct(yj));
    col_sums += yj;
    y_quad += yj.cwiseProduct(eps_inv).dot(yj);
  }

  const Eigen::VectorXd w1 = t_fac.solve(z1);
  double logdet_m = t_fac.log_det();
  double quad_correction = z1.dot(w1);

  if (ka > 0) {
    Eigen::MatrixXd u(n * p, ka);
    for (Eigen::Index j = 0; j < n; ++j) u.middleRows(j * p, p) = u_occ;
    const Eigen::MatrixXd w = t_fac.solve(u);
    Eigen::MatrixXd schur = Eigen::MatrixXd(corner_diag.asDiagonal()) -
                            u.transpose() * w;
    Eigen::LLT<Eigen::MatrixXd> schur_llt(0.5 * (schur + schur.transpose()));
    if (schur_llt.info() != Eigen::Success)
      throw NumericalError("neg2_loglik_structured: intercept block not positive definite");

    Eigen::VectorXd z2(ka);
    for (Eigen::Index a = 0; a < ka; ++a) {
      const Eigen::Index j = active[static_cast<std::size_t>(a)];
      z2[a] = eps_inv[j] * col_sums[j];
    }
    const Eigen::VectorXd resid = z2 - w.transpose() * z1;
    const Eigen::VectorXd x2 = schur_llt.solve(resid);
    for (Eigen::Index a = 0; a < ka; ++a)
      logdet_m += 2.0 * std::log(schur_llt.matrixLLT()(a, a));
    quad_correction += x2.dot(resid);
  }

  // log|Sigma*| = log|M| + log|C| + log|E|.
  double logdet = logdet_m + lp.logdet_cov;
  for (Eigen::Index a = 0; a < ka; ++a)
    logdet += std::log(meas.sigma_u[active[static_cast<std::size_t>(a)]]);
  logdet += static_cast<double>(n) * meas.sigma_eps.array().log().sum();

  const double quad = y_quad - quad_correction;
  return static_cast<double>(n * k) * std::log(2.0 * std::numbers::pi) + logdet + quad;
}

}  // namespace

Eigen::MatrixXd assemble_sigma_star(const MeasurementParams& meas,
                                    const OUParams& ou, const TimeGrid& grid) {
  grid.validate();
  if (meas.num_factors() != ou.num_factors())
    throw std::invalid_argument("assemble_sigma_star: factor count mismatch");
  return assemble_sigma_star_impl(meas, ou, grid, nullptr);
}

double neg2_loglik_dense(const MeasurementParams& meas, const OUParams& ou,
                         const Dataset& data) {
  double total = 0.0;
  for (const SubjectPanel& panel : data)
    total += neg2_loglik_dense_subject(meas, ou, panel);
  return total;
}

double neg2_loglik_structured(const MeasurementParams& meas, const OUParams& ou,
                              const Dataset& data) {
  double total = 0.0;
  for (const SubjectPanel& panel : data)
    total += neg2_loglik_structured_subject(meas, latent_precision(ou, panel.grid), panel);
  return total;
}

void StructuredLikelihood::set_dynamics(const OUParams& ou) {
  latents_.clear();
  latents_.reserve(data_->size());
  for (const SubjectPanel& panel : *data_)
    latents_.push_back(latent_precision(ou, panel.grid));
}

double StructuredLikelihood::eval(const MeasurementParams& meas) const {
  if (latents_.size() != data_->size())
    throw std::logic_error("StructuredLikelihood: set_dynamics not called");
  double total = 0.0;
  for (std::size_t i = 0; i < data_->size(); ++i)
    total += neg2_loglik_structured_subject(meas, latents_[i], (*data_)[i]);
  return total;
}

Eigen::VectorXd analytic_gradient(const MeasurementParams& meas, const OUParams& ou,
                                  const ModelSpec& spec, const Dataset& data) {
  const Eigen::Index k = meas.num_outcomes();
  const Eigen::Index p = meas.num_factors();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(3 * k);

  for (const SubjectPanel& panel : data) {
    const Eigen::Index n = panel.num_occasions();
    std::vector<Eigen::MatrixXd> psi;
    const Eigen::MatrixXd sigma_star =
        assemble_sigma_star_impl(meas, ou, panel.grid, &psi);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_star);
    if (llt.info() != Eigen::Success)
      throw NumericalError("analytic_gradient: subject covariance not positive definite");
    const Eigen::VectorXd y = panel.stacked();
    const Eigen::VectorXd alpha = llt.solve(y);
    // s = Sigma*^{-1} - alpha alpha^T; gradient terms are traces against s.
    Eigen::MatrixXd s = llt.solve(Eigen::MatrixXd::Identity(n * k, n * k));
    s.noalias() -= alpha * alpha.transpose();

    // Loadings: d Sigma*/d lambda_m has the low-rank form
    // (I ox Lambda) Psi (I ox J_m)^T + transpose, so the trace collapses to
    // entries of B = s (I ox Lambda) Psi at the (outcome m, factor-of-m)
    // positions of each diagonal occasion block.
    Eigen::MatrixXd lam_psi(n * k, n * p);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index l = 0; l < n; ++l)
        lam_psi.block(j * k, l * p, k, p).noalias() =
            meas.lambda * psi[static_cast<std::size_t>(j * n + l)];
    const Eigen::MatrixXd b = s * lam_psi;
    for (Eigen::Index m = 0; m < k; ++m) {
      const Eigen::Index f = spec.factor_of_outcome[static_cast<std::size_t>(m)];
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) acc += b(j * k + m, j * p + f);
      grad[m] += 2.0 * acc;
    }

    // Random intercepts (log-SD scale): d Sigma*/d log sd(u_m) = J ox 2 u_m J_m.
    // Measurement error (log-SD scale):  d Sigma*/d log sd(e_m) = I ox 2 e_m J_m.
    for (Eigen::Index m = 0; m < k; ++m) {
      double diag_acc = 0.0, all_acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        diag_acc += s(j * k + m, j * k + m);
        for (Eigen::Index l = 0; l < n; ++l) all_acc += s(j * k + m, l * k + m);
      }
      grad[k + m] += 2.0 * meas.sigma_u[m] * all_acc;
      grad[2 * k + m] += 2.0 * meas.sigma_eps[m] * diag_acc;
    }
  }
  return grad;
}

}  // namespace ouf

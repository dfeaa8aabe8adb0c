#include "ouf/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ouf/common.hpp"
#include "ouf/likelihood.hpp"
#include "ouf/linalg.hpp"
#include "ouf/quasi_newton.hpp"
#include "ouf/rng.hpp"

namespace ouf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Variance floors applied through the optimizer box (log-SD scale).
const double kLogSdEpsFloor = std::log(1e-3);  // error variance >= 1e-6
const double kLogSdUFloor = std::log(1e-6);    // intercept variance >= 1e-12

double eval_neg2(const MeasurementParams& meas, const OUParams& ou,
                 const Dataset& data, bool dense) {
  return dense ? neg2_loglik_dense(meas, ou, data)
               : neg2_loglik_structured(meas, ou, data);
}

// ---- measurement block coordinates: [lambda_k][log sd(u_k)][log sd(eps_k)] ----

Eigen::VectorXd pack_meas(const MeasurementParams& meas, const ModelSpec& spec) {
  const Eigen::Index k = meas.num_outcomes();
  Eigen::VectorXd x(3 * k);
  for (Eigen::Index m = 0; m < k; ++m) {
    x[m] = meas.lambda(m, spec.factor_of_outcome[static_cast<std::size_t>(m)]);
    x[k + m] = 0.5 * std::log(meas.sigma_u[m]);
    x[2 * k + m] = 0.5 * std::log(meas.sigma_eps[m]);
  }
  return x;
}

MeasurementParams unpack_meas(const Eigen::VectorXd& x, const ModelSpec& spec) {
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
  MeasurementParams meas;
  meas.lambda = Eigen::MatrixXd::Zero(k, p);
  meas.sigma_u.resize(k);
  meas.sigma_eps.resize(k);
  for (Eigen::Index m = 0; m < k; ++m) {
    meas.lambda(m, spec.factor_of_outcome[static_cast<std::size_t>(m)]) = x[m];
    meas.sigma_u[m] = std::exp(2.0 * x[k + m]);
    meas.sigma_eps[m] = std::exp(2.0 * x[2 * k + m]);
  }
  return meas;
}

// ---- latent block coordinates: [theta row-major][log sigma_j] ----

Eigen::VectorXd pack_ou(const OUParams& ou) {
  const Eigen::Index p = ou.num_factors();
  Eigen::VectorXd x(p * p + p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) x[r * p + c] = ou.theta(r, c);
  for (Eigen::Index j = 0; j < p; ++j) x[p * p + j] = std::log(ou.sigma[j]);
  return x;
}

OUParams unpack_ou(const Eigen::VectorXd& x, Eigen::Index p) {
  OUParams ou;
  ou.theta.resize(p, p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) ou.theta(r, c) = x[r * p + c];
  ou.sigma = x.tail(p).array().exp();
  return ou;
}

// The identifiability fold: rescale the dynamics to unit stationary variances
// and absorb the scale change into the loadings.  The likelihood is invariant,
// so the latent block can search through this map without changing the
// objective it minimizes.
struct FoldedPoint {
  MeasurementParams meas;
  OUParams ou;
};

FoldedPoint fold_to_unit_scale(const MeasurementParams& meas, const OUParams& ou_raw) {
  const RescaleResult rs = rescale_to_unit_variance(ou_raw);
  FoldedPoint out{meas, rs.params};
  out.meas.lambda = meas.lambda * rs.constants.cwiseInverse().asDiagonal();
  return out;
}

Eigen::VectorXd meas_lower_bounds(Eigen::Index k) {
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(3 * k, -kInf);
  lower.segment(k, k).setConstant(kLogSdUFloor);
  lower.segment(2 * k, k).setConstant(kLogSdEpsFloor);
  return lower;
}

Eigen::VectorXd ou_lower_bounds(Eigen::Index p, double theta_diag_lower) {
  Eigen::VectorXd lower = Eigen::VectorXd::Constant(p * p + p, -kInf);
  for (Eigen::Index j = 0; j < p; ++j) lower[j * p + j] = theta_diag_lower;
  return lower;
}

// ---- initialization helpers ----

struct PooledFactorModel {
  Eigen::MatrixXd lambda;
  Eigen::VectorXd resid_var;
};

PooledFactorModel pooled_factor_model(const Dataset& data, const ModelSpec& spec,
                                      const FitConfig& cfg) {
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
  Eigen::MatrixXd s_pool = Eigen::MatrixXd::Zero(k, k);
  Eigen::Index total = 0;
  for (const SubjectPanel& panel : data) {
    s_pool.noalias() += panel.y.transpose() * panel.y;
    total += panel.num_occasions();
  }
  s_pool /= static_cast<double>(total);

  auto build = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(k, p);
    for (Eigen::Index m = 0; m < k; ++m)
      lambda(m, spec.factor_of_outcome[static_cast<std::size_t>(m)]) = x[m];
    Eigen::VectorXd psi = (2.0 * x.tail(k).array()).exp();
    return std::make_pair(lambda, psi);
  };
  auto objective = [&](const Eigen::VectorXd& x) -> double {
    const auto [lambda, psi] = build(x);
    Eigen::MatrixXd s = lambda * lambda.transpose();
    s.diagonal() += psi;
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) return kInf;
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) logdet += 2.0 * std::log(llt.matrixLLT()(i, i));
    return logdet + llt.solve(s_pool).trace();
  };

  Eigen::VectorXd x0(2 * k);
  for (Eigen::Index m = 0; m < k; ++m) {
    const double half = std::max(s_pool(m, m), 2.0 * cfg.init_variance_floor) / 2.0;
    x0[m] = std::sqrt(half);
    x0[k + m] = 0.5 * std::log(half);
  }
  QuasiNewtonOptions opts;
  opts.max_iters = 500;
  opts.grad_tol = 1e-6;
  opts.step_tol = 1e-10;
  opts.max_step = cfg.max_step;
  opts.lower = Eigen::VectorXd::Constant(2 * k, -kInf);
  opts.lower.tail(k).setConstant(kLogSdEpsFloor);
  auto grad = [&](const Eigen::VectorXd& x) {
    return fd_gradient(objective, x, 1e-5, opts.lower, opts.upper);
  };
  const QuasiNewtonResult res = minimize(objective, grad, x0, opts);
  const auto [lambda, psi] = build(res.x);
  return {lambda, psi};
}

// Gaussian random-intercept regression of one outcome on its factor score;
// compound-symmetric covariance handled in closed form per subject.
struct InterceptModelFit {
  double slope = 0.0;
  double var_u = 0.0;
  double var_eps = 0.0;
};

InterceptModelFit intercept_model(const std::vector<Eigen::VectorXd>& xs,
                                  const std::vector<Eigen::VectorXd>& ys,
                                  const FitConfig& cfg) {
  auto objective = [&](const Eigen::VectorXd& par) -> double {
    const double slope = par[0];
    const double vu = std::exp(2.0 * par[1]);
    const double ve = std::exp(2.0 * par[2]);
    double n2 = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Eigen::VectorXd r = ys[i] - slope * xs[i];
      const double n = static_cast<double>(r.size());
      const double t1 = r.squaredNorm();
      const double sum = r.sum();
      const double denom = ve + n * vu;
      n2 += (n - 1.0) * std::log(ve) + std::log(denom) +
            (t1 - vu / denom * sum * sum) / ve;
    }
    return n2;
  };

  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += xs[i].dot(ys[i]);
    sxx += xs[i].squaredNorm();
  }
  const double slope0 = sxx > 0.0 ? sxy / sxx : 1.0;

  // Split the residual variance into between/within pieces for a start.
  double between = 0.0, within = 0.0;
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Eigen::VectorXd r = ys[i] - slope0 * xs[i];
    const double mean = r.mean();
    between += mean * mean;
    within += (r.array() - mean).square().sum();
    total += r.size();
  }
  between = std::max(between / static_cast<double>(xs.size()), cfg.init_variance_floor);
  within = std::max(within / static_cast<double>(total), cfg.init_variance_floor);

  Eigen::VectorXd par0(3);
  par0 << slope0, 0.5 * std::log(between), 0.5 * std::log(within);
  QuasiNewtonOptions opts;
  opts.max_iters = 200;
  opts.grad_tol = 1e-7;
  opts.step_tol = 1e-10;
  opts.max_step = cfg.max_step;
  opts.lower = Eigen::VectorXd::Constant(3, -kInf);
  opts.lower[1] = kLogSdUFloor;
  opts.lower[2] = kLogSdEpsFloor;
  auto grad = [&](const Eigen::VectorXd& x) {
    return fd_gradient(objective, x, 1e-5, opts.lower, opts.upper);
  };
  const QuasiNewtonResult res = minimize(objective, grad, par0, opts);
  return {res.x[0], std::exp(2.0 * res.x[1]), std::exp(2.0 * res.x[2])};
}

// Dynamics fit to the factor scores: latent process observed with a common
// white-noise nugget, expressed through the structured likelihood with
// identity loadings and no intercepts.
OUParams score_dynamics(const Dataset& scores, Eigen::Index p, const FitConfig& cfg,
                        bool* ok) {
  Eigen::VectorXd second_moment = Eigen::VectorXd::Zero(p);
  Eigen::Index total = 0;
  for (const SubjectPanel& panel : scores) {
    second_moment += panel.y.array().square().colwise().sum().matrix().transpose();
    total += panel.num_occasions();
  }
  second_moment /= static_cast<double>(total);

  auto objective = [&](const Eigen::VectorXd& x) -> double {
    OUParams ou = unpack_ou(x.head(p * p + p), p);
    if (!is_valid_drift(ou.theta)) return kInf;
    MeasurementParams nugget;
    nugget.lambda = Eigen::MatrixXd::Identity(p, p);
    nugget.sigma_u = Eigen::VectorXd::Zero(p);
    nugget.sigma_eps = Eigen::VectorXd::Constant(p, std::exp(2.0 * x[p * p + p]));
    try {
      return neg2_loglik_structured(nugget, ou, scores);
    } catch (const NumericalError&) {
      return kInf;
    }
  };

  Eigen::VectorXd x0(p * p + p + 1);
  x0.setZero();
  for (Eigen::Index j = 0; j < p; ++j) {
    x0[j * p + j] = 1.0;
    x0[p * p + j] = 0.5 * std::log(std::max(2.0 * second_moment[j], 1e-4));
  }
  const double nugget0 = std::max(0.25 * second_moment.mean(), 1e-3);
  x0[p * p + p] = 0.5 * std::log(nugget0);

  QuasiNewtonOptions opts;
  opts.max_iters = 150;
  opts.grad_tol = 1e-6;
  opts.step_tol = 1e-8;
  opts.max_step = cfg.max_step;
  opts.lower = Eigen::VectorXd::Constant(p * p + p + 1, -kInf);
  for (Eigen::Index j = 0; j < p; ++j) opts.lower[j * p + j] = cfg.theta_diag_lower;
  opts.lower[p * p + p] = kLogSdEpsFloor;
  auto grad = [&](const Eigen::VectorXd& x) {
    return fd_gradient(objective, x, 1e-4, opts.lower, opts.upper);
  };

  OUParams out;
  *ok = false;
  try {
    const QuasiNewtonResult res = minimize(objective, grad, x0, opts);
    out = unpack_ou(res.x.head(p * p + p), p);
  } catch (const std::exception&) {
    return out;
  }
  // Cap the mean-reversion diagonal before handing the start to the fit.
  for (Eigen::Index j = 0; j < p; ++j)
    out.theta(j, j) = std::min(out.theta(j, j), cfg.theta_init_diag_cap);
  *ok = is_valid_drift(out.theta) && (out.sigma.array() > 0.0).all();
  return out;
}

void check_inputs(const Dataset& data, const ModelSpec& spec) {
  spec.validate();
  if (data.empty()) throw std::invalid_argument("fit: empty dataset");
  for (const SubjectPanel& panel : data) {
    panel.validate();
    if (panel.y.cols() != spec.num_outcomes())
      throw std::invalid_argument("fit: panel outcome count does not match the spec");
  }
}

}  // namespace

const char* to_string(ConvergenceReason reason) {
  switch (reason) {
    case ConvergenceReason::param_tol: return "param_tol";
    case ConvergenceReason::loglik_tol: return "loglik_tol";
    case ConvergenceReason::max_iters: return "max_iters";
    default: return "failed";
  }
}

std::vector<std::string> param_names(const ModelSpec& spec) {
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
  std::vector<std::string> names;
  for (Eigen::Index m = 0; m < k; ++m) names.push_back("lambda_" + std::to_string(m + 1));
  for (Eigen::Index m = 0; m < k; ++m) names.push_back("sigma_u_" + std::to_string(m + 1));
  for (Eigen::Index m = 0; m < k; ++m) names.push_back("sigma_eps_" + std::to_string(m + 1));
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c)
      names.push_back("theta_" + std::to_string(r + 1) + std::to_string(c + 1));
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("sigma_" + std::to_string(j + 1));
  return names;
}

Eigen::VectorXd param_vector(const ModelParams& params, const ModelSpec& spec) {
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
  Eigen::VectorXd out(3 * k + p * p + p);
  for (Eigen::Index m = 0; m < k; ++m) {
    out[m] = params.meas.lambda(m, spec.factor_of_outcome[static_cast<std::size_t>(m)]);
    out[k + m] = std::sqrt(params.meas.sigma_u[m]);
    out[2 * k + m] = std::sqrt(params.meas.sigma_eps[m]);
  }
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) out[3 * k + r * p + c] = params.ou.theta(r, c);
  out.tail(p) = params.ou.sigma;
  return out;
}

ModelParams initialize(const Dataset& data, const ModelSpec& spec, const FitConfig& cfg) {
  check_inputs(data, spec);
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();

  // (a) pooled cross-sectional factor model, structural zeros respected.
  const PooledFactorModel fa = pooled_factor_model(data, spec, cfg);

  // (b) regression factor scores.
  Eigen::MatrixXd sig_fa = fa.lambda * fa.lambda.transpose();
  sig_fa.diagonal() += fa.resid_var;
  Eigen::LLT<Eigen::MatrixXd> fa_llt(sig_fa);
  if (fa_llt.info() != Eigen::Success)
    throw NumericalError("initialize: pooled factor model covariance not positive definite");
  const Eigen::MatrixXd score_weights = fa_llt.solve(fa.lambda);  // K x p

  Dataset scores;
  scores.reserve(data.size());
  for (const SubjectPanel& panel : data) {
    SubjectPanel sp;
    sp.id = panel.id;
    sp.grid = panel.grid;
    sp.y = panel.y * score_weights;
    scores.push_back(std::move(sp));
  }

  // (c) per-outcome random-intercept regressions on the scores.
  MeasurementParams meas;
  meas.lambda = Eigen::MatrixXd::Zero(k, p);
  meas.sigma_u.resize(k);
  meas.sigma_eps.resize(k);
  for (Eigen::Index m = 0; m < k; ++m) {
    const int f = spec.factor_of_outcome[static_cast<std::size_t>(m)];
    std::vector<Eigen::VectorXd> xs, ys;
    xs.reserve(data.size());
    ys.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      xs.push_back(scores[i].y.col(f));
      ys.push_back(data[i].y.col(m));
    }
    const InterceptModelFit im = intercept_model(xs, ys, cfg);
    double slope = im.slope;
    if (std::abs(slope) < cfg.init_variance_floor)
      slope = slope >= 0.0 ? cfg.init_variance_floor : -cfg.init_variance_floor;
    meas.lambda(m, f) = slope;
    meas.sigma_u[m] = std::max(im.var_u, cfg.init_variance_floor);
    meas.sigma_eps[m] = std::max(im.var_eps, cfg.init_variance_floor);
  }

  // (d) latent dynamics from the scores, against (e) the fixed fallback set.
  bool emp_ok = false;
  const OUParams ou_emp = score_dynamics(scores, p, cfg, &emp_ok);

  double n2_emp = kInf;
  FoldedPoint emp;
  if (emp_ok) {
    try {
      emp = fold_to_unit_scale(meas, ou_emp);
      n2_emp = eval_neg2(emp.meas, emp.ou, data, cfg.dense_likelihood);
    } catch (const NumericalError&) {
      n2_emp = kInf;
    }
  }

  OUParams ou_def;
  ou_def.theta = Eigen::MatrixXd::Constant(p, p, 0.1);
  ou_def.theta.diagonal().setOnes();
  double n2_def = kInf;
  ModelParams def;
  try {
    ou_def.sigma = sigma_from_theta(ou_def.theta);
    def.meas = meas;
    def.ou = ou_def;
    n2_def = eval_neg2(def.meas, def.ou, data, cfg.dense_likelihood);
  } catch (const NumericalError&) {
    n2_def = kInf;
  }

  if (!std::isfinite(n2_emp) && !std::isfinite(n2_def))
    throw NumericalError("initialize: no feasible starting point");
  ModelParams out;
  if (n2_emp <= n2_def) {
    out.meas = emp.meas;
    out.ou = emp.ou;
  } else {
    out = def;
  }
  return out;
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const FitConfig& cfg) {
  FitResult res;
  try {
    check_inputs(data, spec);
    const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
    ModelParams cur = initialize(data, spec, cfg);

    StructuredLikelihood cached(data);
    auto eval_meas_block = [&](const MeasurementParams& meas) -> double {
      try {
        return cfg.dense_likelihood ? neg2_loglik_dense(meas, cur.ou, data)
                                    : cached.eval(meas);
      } catch (const NumericalError&) {
        return kInf;
      }
    };

    res.trace.push_back(eval_neg2(cur.meas, cur.ou, data, cfg.dense_likelihood));
    Eigen::VectorXd prev = param_vector(cur, spec);
    res.reason = ConvergenceReason::max_iters;

    const Eigen::VectorXd lower1 = meas_lower_bounds(k);
    const Eigen::VectorXd lower2 = ou_lower_bounds(p, cfg.theta_diag_lower);

    for (int r = 1; r <= cfg.max_block_iters; ++r) {
      const double tol = std::max(1e-4 / std::pow(10.0, r), 1e-8);

      // Measurement block: analytic gradients, dynamics held fixed.
      if (!cfg.dense_likelihood) cached.set_dynamics(cur.ou);
      QuasiNewtonOptions o1;
      o1.max_iters = 100;
      o1.grad_tol = tol;
      o1.step_tol = tol;
      o1.max_step = cfg.max_step;
      o1.lower = lower1;
      auto f1 = [&](const Eigen::VectorXd& x) { return eval_meas_block(unpack_meas(x, spec)); };
      auto g1 = [&](const Eigen::VectorXd& x) {
        return analytic_gradient(unpack_meas(x, spec), cur.ou, spec, data);
      };
      const QuasiNewtonResult r1 = minimize(f1, g1, pack_meas(cur.meas, spec), o1);
      cur.meas = unpack_meas(r1.x, spec);

      // Latent block: finite differences through the identifiability fold.
      QuasiNewtonOptions o2;
      o2.max_iters = 100;
      o2.grad_tol = tol;
      o2.step_tol = tol;
      o2.max_step = cfg.max_step;
      o2.lower = lower2;
      auto f2 = [&](const Eigen::VectorXd& x) -> double {
        const OUParams raw = unpack_ou(x, p);
        if (!is_valid_drift(raw.theta)) return kInf;
        try {
          const FoldedPoint pt = fold_to_unit_scale(cur.meas, raw);
          return eval_neg2(pt.meas, pt.ou, data, cfg.dense_likelihood);
        } catch (const NumericalError&) {
          return kInf;
        }
      };
      auto g2 = [&](const Eigen::VectorXd& x) {
        return fd_gradient(f2, x, 1e-4, o2.lower, o2.upper);
      };
      const QuasiNewtonResult r2 = minimize(f2, g2, pack_ou(cur.ou), o2);
      const FoldedPoint pt = fold_to_unit_scale(cur.meas, unpack_ou(r2.x, p));
      cur.meas = pt.meas;
      cur.ou = pt.ou;

      res.trace.push_back(r2.value);
      res.block_iters = r;

      // Convergence: every parameter's relative change small, or the
      // -2 log L improvement exhausted; either suffices.
      const Eigen::VectorXd now = param_vector(cur, spec);
      bool param_ok = true;
      for (Eigen::Index i = 0; i < now.size() && param_ok; ++i) {
        const double diff = std::abs(now[i] - prev[i]);
        if (diff == 0.0) continue;
        if (diff >= cfg.rel_param_tol * std::abs(now[i])) param_ok = false;
      }
      const double improvement = res.trace[static_cast<std::size_t>(r - 1)] -
                                 res.trace[static_cast<std::size_t>(r)];
      prev = now;
      if (param_ok) {
        res.converged = true;
        res.reason = ConvergenceReason::param_tol;
        break;
      }
      if (improvement < cfg.loglik_tol) {
        res.converged = true;
        res.reason = ConvergenceReason::loglik_tol;
        break;
      }
    }

    // Anchor-sign normalization: flip any factor whose anchor loading came
    // out negative (conjugating theta keeps the likelihood unchanged).
    for (Eigen::Index f = 0; f < p; ++f) {
      const int anchor = spec.anchor_outcome[static_cast<std::size_t>(f)];
      if (cur.meas.lambda(anchor, f) < 0.0) {
        cur.meas.lambda.col(f) *= -1.0;
        for (Eigen::Index j = 0; j < p; ++j) {
          if (j == f) continue;
          cur.ou.theta(f, j) *= -1.0;
          cur.ou.theta(j, f) *= -1.0;
        }
      }
    }

    res.params = cur;
    res.neg2_loglik = res.trace.back();
  } catch (const std::exception& e) {
    res.converged = false;
    res.reason = ConvergenceReason::failed;
    res.message = e.what();
  }
  return res;
}

SeResult standard_errors(const ModelParams& params, const ModelSpec& spec,
                         const Dataset& data, const FitConfig& cfg) {
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
  const Eigen::Index dim = 3 * k + p * p;
  SeResult out;
  out.se = Eigen::VectorXd::Zero(dim);
  out.valid.assign(static_cast<std::size_t>(dim), 0);
  out.theta_cov = Eigen::MatrixXd::Zero(p * p, p * p);

  // Reduced parameterization: sigma is implied by theta through the
  // unit-variance system, so the Hessian is taken over (measurement, theta).
  auto objective = [&](const Eigen::VectorXd& z) -> double {
    const MeasurementParams meas = unpack_meas(z.head(3 * k), spec);
    Eigen::MatrixXd theta(p, p);
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < p; ++c) theta(r, c) = z[3 * k + r * p + c];
    if (!is_valid_drift(theta))
      throw NumericalError("standard_errors: drift left the feasible region");
    OUParams ou;
    ou.theta = theta;
    ou.sigma = sigma_from_theta(theta);
    return 0.5 * eval_neg2(meas, ou, data, cfg.dense_likelihood);  // -log L
  };

  Eigen::VectorXd z(dim);
  z.head(3 * k) = pack_meas(params.meas, spec);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) z[3 * k + r * p + c] = params.ou.theta(r, c);

  Eigen::MatrixXd hess;
  try {
    hess = fd_hessian(objective, z, 1e-4);
  } catch (const std::exception& e) {
    out.message = e.what();
    return out;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(hess);
  if (!lu.isInvertible()) {
    out.message = "observed information is singular";
    return out;
  }
  const Eigen::MatrixXd cov = lu.inverse();
  out.theta_cov = cov.bottomRightCorner(p * p, p * p);

  for (Eigen::Index i = 0; i < dim; ++i) {
    const double var = cov(i, i);
    if (!std::isfinite(var) || var <= 0.0) continue;  // flagged invalid
    double se = std::sqrt(var);
    if (i >= k && i < 2 * k) se *= std::sqrt(params.meas.sigma_u[i - k]);
    if (i >= 2 * k && i < 3 * k) se *= std::sqrt(params.meas.sigma_eps[i - 2 * k]);
    out.se[i] = se;
    out.valid[static_cast<std::size_t>(i)] = 1;
  }
  return out;
}

BootstrapResult bootstrap_sigma(const ModelParams& params, const Eigen::MatrixXd& theta_cov,
                                int draws, std::uint64_t seed) {
  const Eigen::Index p = params.ou.num_factors();
  if (theta_cov.rows() != p * p || theta_cov.cols() != p * p)
    throw std::invalid_argument("bootstrap_sigma: covariance must be p^2 x p^2");
  if (draws <= 0) throw std::invalid_argument("bootstrap_sigma: draws must be positive");

  // PSD square root; tolerates an exactly singular (even zero) covariance.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (theta_cov + theta_cov.transpose()));
  const Eigen::MatrixXd root =
      eig.eigenvectors() *
      eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
      eig.eigenvectors().transpose();

  Eigen::VectorXd theta_hat(p * p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) theta_hat[r * p + c] = params.ou.theta(r, c);

  Rng rng(seed);
  std::vector<std::vector<double>> sigma_draws(static_cast<std::size_t>(p));
  int discarded = 0;
  for (int b = 0; b < draws; ++b) {
    Eigen::VectorXd zdraw(p * p);
    for (Eigen::Index i = 0; i < p * p; ++i) zdraw[i] = rng.normal();
    const Eigen::VectorXd tv = theta_hat + root * zdraw;
    Eigen::MatrixXd theta(p, p);
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < p; ++c) theta(r, c) = tv[r * p + c];
    if (!is_valid_drift(theta)) {
      ++discarded;
      continue;
    }
    Eigen::VectorXd sigma;
    try {
      sigma = sigma_from_theta(theta);
    } catch (const NumericalError&) {
      ++discarded;
      continue;
    }
    for (Eigen::Index j = 0; j < p; ++j)
      sigma_draws[static_cast<std::size_t>(j)].push_back(sigma[j]);
  }

  BootstrapResult out;
  out.discard_rate = static_cast<double>(discarded) / static_cast<double>(draws);
  out.high_discard = out.discard_rate > 0.5;
  out.sigma_ci.resize(p, 2);
  // Order-statistic percentiles so monotone maps of the draws commute with
  // the interval endpoints.
  auto percentile = [](std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size();
    std::size_t idx = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(m)));
    if (idx > 0) --idx;
    if (idx >= m) idx = m - 1;
    return v[idx];
  };
  for (Eigen::Index j = 0; j < p; ++j) {
    auto& v = sigma_draws[static_cast<std::size_t>(j)];
    if (v.empty()) {
      out.sigma_ci(j, 0) = out.sigma_ci(j, 1) = params.ou.sigma[j];
      out.high_discard = true;
      continue;
    }
    out.sigma_ci(j, 0) = percentile(v, 0.025);
    out.sigma_ci(j, 1) = percentile(v, 0.975);
  }
  return out;
}

}  // namespace ouf

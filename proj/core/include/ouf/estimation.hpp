#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouf/model.hpp"

namespace ouf {

struct FitConfig {
  int max_block_iters = 200;
  double rel_param_tol = 1e-6;      // elementwise relative parameter change
  double loglik_tol = 1e-6;         // -2 log L improvement between rounds
  double max_step = 10.0;           // inf-norm cap on inner optimizer steps
  double theta_diag_lower = 1e-4;   // box bound on diag(theta)
  double init_variance_floor = 0.1; // floor for initial variances / |loadings|
  double theta_init_diag_cap = 7.0; // cap on diag(theta) leaving initialization
  int bootstrap_draws = 1000;
  std::uint64_t seed = 0;
  bool dense_likelihood = false;    // use the dense reference path in fit()
};

enum class ConvergenceReason { param_tol, loglik_tol, max_iters, failed };

const char* to_string(ConvergenceReason reason);

// Natural-scale parameter vector used for reporting and recovery tables:
// [lambda_1..K] [sd(u)_1..K] [sd(eps)_1..K] [theta row-major p^2] [sigma_1..p].
std::vector<std::string> param_names(const ModelSpec& spec);
Eigen::VectorXd param_vector(const ModelParams& params, const ModelSpec& spec);

struct FitResult {
  ModelParams params;
  double neg2_loglik = 0.0;
  std::vector<double> trace;        // -2 log L after each block round (front: initial)
  int block_iters = 0;
  bool converged = false;
  ConvergenceReason reason = ConvergenceReason::failed;
  std::string message;

  // Filled by standard_errors / bootstrap_sigma when those steps run.
  Eigen::VectorXd se;               // natural scale, matches param_names minus sigma
  std::vector<char> se_valid;
  Eigen::MatrixXd theta_cov;        // p^2 x p^2, theta packed row-major
  Eigen::MatrixXd sigma_ci;         // p x 2 bootstrap percentile bounds
  double bootstrap_discard_rate = 0.0;
  bool bootstrap_warning = false;
};

// Starting values: pooled cross-sectional factor model -> regression factor
// scores -> per-outcome random-intercept models -> latent dynamics fit to the
// scores, compared against a fixed fallback parameter set by likelihood.
ModelParams initialize(const Dataset& data, const ModelSpec& spec, const FitConfig& cfg);

// Block coordinate descent: measurement block with analytic gradients,
// latent-dynamics block with finite differences, identifiability rescaling
// folded into every latent-block evaluation, anchor-sign normalization at the
// end.  Deterministic given (data, spec, cfg).
FitResult fit(const Dataset& data, const ModelSpec& spec, const FitConfig& cfg);

// Observed-information standard errors in the reduced parameterization
// (lambda, log sd(u), log sd(eps), theta) with sigma implied by theta through
// the unit-variance system.  SEs are mapped back to the natural scale; a
// non-positive variance estimate flags that entry invalid.
struct SeResult {
  Eigen::VectorXd se;          // 3K + p^2 natural-scale SEs
  std::vector<char> valid;
  Eigen::MatrixXd theta_cov;   // p^2 x p^2 block on the natural theta scale
  std::string message;
};
SeResult standard_errors(const ModelParams& params, const ModelSpec& spec,
                         const Dataset& data, const FitConfig& cfg);

// Percentile intervals for sigma: theta draws from N(theta_hat, theta_cov),
// invalid draws discarded, each valid draw mapped through the unit-variance
// system.  More than half the draws discarded sets the warning flag.
struct BootstrapResult {
  Eigen::MatrixXd sigma_ci;    // p x 2
  double discard_rate = 0.0;
  bool high_discard = false;
};
BootstrapResult bootstrap_sigma(const ModelParams& params, const Eigen::MatrixXd& theta_cov,
                                int draws, std::uint64_t seed);

}  // namespace ouf

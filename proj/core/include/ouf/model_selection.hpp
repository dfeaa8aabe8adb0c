#pragma once

#include <vector>

#include "ouf/estimation.hpp"
#include "ouf/model.hpp"

namespace ouf {

// Free-parameter count under the unit-variance constraints: q counts every
// nonzero entry of Lambda, Sigma_u, Sigma_eps, theta and sigma; the effective
// penalty dimension is q - p (one variance constraint per factor).
struct ParamCount {
  int q = 0;
  int p = 0;
};
ParamCount count_free_params(const ModelSpec& spec);

// 2 (q - p) + (-2 log L).
double aic(double neg2_loglik, int q, int p);

// 2 log(N) (q - p) + (-2 log L).  Doubles the usual BIC penalty; kept for
// comparability with the companion analyses, and harmless for ranking because
// every candidate sees the same factor.
double bic(double neg2_loglik, int q, int p, Eigen::Index num_subjects);

struct CandidateReport {
  ModelSpec spec;
  FitResult fit;
  ParamCount count;
  double aic = 0.0;
  double bic = 0.0;
  bool usable = false;  // converged or hit max iterations (not a hard failure)
};

struct SelectionReport {
  std::vector<CandidateReport> candidates;
  int aic_winner = -1;  // index into candidates, -1 when nothing was usable
  int bic_winner = -1;
};

// Fits every candidate and ranks the usable ones; ties go to fewer factors.
SelectionReport select(const Dataset& data, const std::vector<ModelSpec>& candidates,
                       const FitConfig& cfg);

}  // namespace ouf

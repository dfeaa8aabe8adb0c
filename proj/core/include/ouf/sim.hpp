#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ouf/estimation.hpp"
#include "ouf/model.hpp"

namespace ouf {

// A named data-generating parameter set with its model structure.  The OU
// parameters live on the data-generating scale and need not satisfy the
// unit-variance constraint.
struct Truth {
  std::string name;
  ModelSpec spec;
  ModelParams params;
};

// Built-in truths: the three recovery settings (shared two-factor measurement
// setup over four outcomes) plus the five factor-count selection truths.
const std::vector<Truth>& truth_catalog();
const Truth& find_truth(const std::string& name);  // throws std::invalid_argument

// Candidate model structures over the shared four outcomes for p = 1, 2, 3.
std::vector<ModelSpec> factor_count_candidates();

struct SimDesign {
  int num_subjects = 200;
  int min_occasions = 10;
  int max_occasions = 20;  // inclusive
  double min_gap = 0.1;
  double max_gap = 2.0;
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

// Per subject: occasion count uniform on the integer range, first time 0,
// gaps independent uniforms, outcomes drawn exactly from N(0, Sigma*) by a
// Cholesky factor of the dense joint covariance.  Deterministic given the
// seed; subject streams are independent of generation order.
Dataset generate_dataset(const Truth& truth, const SimDesign& design);

// Identifiability-constrained parameters the estimator targets: dynamics
// rescaled to unit stationary variances with the absorbed scale folded into
// the loadings.  Idempotent; leaves the likelihood of any dataset unchanged.
ModelParams target_params(const ModelParams& truth);

struct RecoveryRow {
  std::string name;
  double target = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double emp_sd = 0.0;
  double mean_se = 0.0;   // NaN for parameters without a Hessian-based SE
  double se_ratio = 0.0;  // mean_se / emp_sd
  int se_invalid = 0;     // replicates whose SE for this entry was invalid
  bool has_se = false;
};

struct RecoveryTable {
  std::vector<RecoveryRow> rows;
  int replicates = 0;
  int used = 0;  // fits entering the table (converged or max-iters)
  int num_converged = 0;
  int num_max_iters = 0;
  int num_failed = 0;
};

// Monte Carlo recovery study: replicate datasets with derived seeds, full
// fits, Hessian-based SEs.  Failed fits are counted and skipped, not fatal.
RecoveryTable replicate_recovery(const Truth& truth, const SimDesign& design,
                                 int replicates, const FitConfig& cfg);

struct SelectionStudy {
  std::vector<int> factor_counts;  // per candidate, in fit order
  std::vector<int> aic_wins;
  std::vector<int> bic_wins;
  int replicates = 0;
  int usable = 0;  // replicates where every candidate fit was usable
};

// Fits the 1/2/3-factor candidates to each replicate dataset and tabulates
// which factor count wins each criterion among the usable replicates.
SelectionStudy replicate_selection(const Truth& truth, const SimDesign& design,
                                   int replicates, const FitConfig& cfg);

}  // namespace ouf

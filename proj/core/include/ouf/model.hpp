#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouf/ou_process.hpp"

namespace ouf {

// Which outcome loads on which factor (exactly one factor per outcome), plus
// the outcome whose loading anchors the sign of each factor.
struct ModelSpec {
  std::vector<std::string> outcomes;      // size K
  std::vector<std::string> factors;       // size p
  std::vector<int> factor_of_outcome;     // size K, values in [0, p)
  std::vector<int> anchor_outcome;        // size p; default: first outcome on the factor

  Eigen::Index num_outcomes() const { return static_cast<Eigen::Index>(outcomes.size()); }
  Eigen::Index num_factors() const { return static_cast<Eigen::Index>(factors.size()); }
  void validate() const;

  // Fills anchor_outcome with the first outcome mapped to each factor.
  void default_anchors();
};

// Loadings with one permitted nonzero per row, random-intercept variances and
// measurement-error variances (both diagonal).
struct MeasurementParams {
  Eigen::MatrixXd lambda;     // K x p, zero outside the spec mask
  Eigen::VectorXd sigma_u;    // K random-intercept variances (>= 0)
  Eigen::VectorXd sigma_eps;  // K measurement-error variances (> 0)

  Eigen::Index num_outcomes() const { return lambda.rows(); }
  Eigen::Index num_factors() const { return lambda.cols(); }
  void validate(const ModelSpec& spec) const;
};

// Full parameter set.  Estimation keeps the latent process at unit stationary
// variances; the assembly and likelihood routines below do not require it.
struct ModelParams {
  MeasurementParams meas;
  OUParams ou;

  // Checks dimensions, the loading mask, and diag(V) = 1 (tol 1e-6).
  void validate(const ModelSpec& spec) const;
};

// One subject's observations: y(j, k) = outcome k at grid time j.  The
// stacked vector is time-major: the K outcomes of occasion 1, then occasion 2.
struct SubjectPanel {
  std::string id;
  TimeGrid grid;
  Eigen::MatrixXd y;  // n x K

  Eigen::Index num_occasions() const { return y.rows(); }
  Eigen::VectorXd stacked() const;
  void validate() const;
};

using Dataset = std::vector<SubjectPanel>;

}  // namespace ouf

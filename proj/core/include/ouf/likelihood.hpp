#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ouf/model.hpp"

namespace ouf {

// Dense joint covariance of a subject's stacked observation vector:
//   (I ox Lambda) Psi (I ox Lambda)^T + J ox Sigma_u + I ox Sigma_eps
// with Psi the latent covariance over the grid.  Time-major block order.
Eigen::MatrixXd assemble_sigma_star(const MeasurementParams& meas,
                                    const OUParams& ou, const TimeGrid& grid);

// -2 log likelihood (including the 2 pi constant), summed over subjects in
// dataset order.  The dense path factorizes each subject's full covariance;
// the structured path exploits the block tri-diagonal latent precision plus a
// low-rank intercept border and matches the dense value to ~1e-10 relative.
double neg2_loglik_dense(const MeasurementParams& meas, const OUParams& ou,
                         const Dataset& data);
double neg2_loglik_structured(const MeasurementParams& meas, const OUParams& ou,
                              const Dataset& data);

// Gradient of the -2 log likelihood over the measurement block, length 3K:
//   [ d/d lambda_k ][ d/d log sd(u_k) ][ d/d log sd(eps_k) ]
// with lambda_k the free loading of outcome k and the variance parameters on
// the log-SD scale.
Eigen::VectorXd analytic_gradient(const MeasurementParams& meas, const OUParams& ou,
                                  const ModelSpec& spec, const Dataset& data);

// Structured evaluator that caches the per-subject latent precision pieces;
// repeated evaluations with the dynamics held fixed (the measurement block of
// the coordinate descent) skip all matrix exponentials.
class StructuredLikelihood {
 public:
  explicit StructuredLikelihood(const Dataset& data) : data_(&data) {}

  void set_dynamics(const OUParams& ou);
  double eval(const MeasurementParams& meas) const;

 private:
  const Dataset* data_;
  std::vector<LatentPrecision> latents_;
};

}  // namespace ouf

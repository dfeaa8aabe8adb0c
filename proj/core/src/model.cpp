#include "ouf/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace ouf {

void ModelSpec::validate() const {
  const auto k = num_outcomes();
  const auto p = num_factors();
  if (k == 0 || p == 0)
    throw std::invalid_argument("ModelSpec: needs at least one outcome and factor");
  if (static_cast<Eigen::Index>(factor_of_outcome.size()) != k)
    throw std::invalid_argument("ModelSpec: factor_of_outcome size mismatch");
  for (const int f : factor_of_outcome)
    if (f < 0 || f >= p)
      throw std::invalid_argument("ModelSpec: outcome mapped to unknown factor");
  for (Eigen::Index f = 0; f < p; ++f)
    if (std::find(factor_of_outcome.begin(), factor_of_outcome.end(),
                  static_cast<int>(f)) == factor_of_outcome.end())
      throw std::invalid_argument("ModelSpec: factor has no outcomes");
  std::set<std::string> names(outcomes.begin(), outcomes.end());
  if (static_cast<Eigen::Index>(names.size()) != k)
    throw std::invalid_argument("ModelSpec: duplicate outcome names");
  if (static_cast<Eigen::Index>(anchor_outcome.size()) != p)
    throw std::invalid_argument("ModelSpec: anchor_outcome size mismatch");
  for (Eigen::Index f = 0; f < p; ++f) {
    const int a = anchor_outcome[static_cast<std::size_t>(f)];
    if (a < 0 || a >= k || factor_of_outcome[static_cast<std::size_t>(a)] != f)
      throw std::invalid_argument("ModelSpec: anchor outcome not on its factor");
  }
}

void ModelSpec::default_anchors() {
  anchor_outcome.assign(factors.size(), -1);
  for (std::size_t k = 0; k < factor_of_outcome.size(); ++k) {
    const int f = factor_of_outcome[k];
    if (f >= 0 && f < static_cast<int>(anchor_outcome.size()) &&
        anchor_outcome[static_cast<std::size_t>(f)] < 0)
      anchor_outcome[static_cast<std::size_t>(f)] = static_cast<int>(k);
  }
}

void MeasurementParams::validate(const ModelSpec& spec) const {
  if (lambda.rows() != spec.num_outcomes() || lambda.cols() != spec.num_factors())
    throw std::invalid_argument("MeasurementParams: lambda dimension mismatch");
  for (Eigen::Index k = 0; k < lambda.rows(); ++k)
    for (Eigen::Index f = 0; f < lambda.cols(); ++f)
      if (f != spec.factor_of_outcome[static_cast<std::size_t>(k)] && lambda(k, f) != 0.0)
        throw std::invalid_argument("MeasurementParams: loading outside the mask");
  if (sigma_u.size() != lambda.rows() || sigma_eps.size() != lambda.rows())
    throw std::invalid_argument("MeasurementParams: variance vector size mismatch");
  if (!(sigma_u.array() >= 0.0).all())
    throw std::invalid_argument("MeasurementParams: negative intercept variance");
  if (!(sigma_eps.array() > 0.0).all())
    throw std::invalid_argument("MeasurementParams: error variances must be positive");
}

void ModelParams::validate(const ModelSpec& spec) const {
  meas.validate(spec);
  ou.validate();
  if (ou.num_factors() != spec.num_factors())
    throw std::invalid_argument("ModelParams: factor count mismatch");
  const Eigen::VectorXd v_diag = stationary_variance(ou).diagonal();
  if (((v_diag.array() - 1.0).abs() > 1e-6).any())
    throw std::invalid_argument("ModelParams: latent process must have unit variances");
}

Eigen::VectorXd SubjectPanel::stacked() const {
  Eigen::MatrixXd yt = y.transpose();  // K x n, column-major -> time-major stack
  return Eigen::Map<Eigen::VectorXd>(yt.data(), yt.size());
}

void SubjectPanel::validate() const {
  grid.validate();
  if (y.rows() != grid.size())
    throw std::invalid_argument("SubjectPanel: row count must match the grid");
  if (y.rows() == 0)
    throw std::invalid_argument("SubjectPanel: needs at least one occasion");
  if (!y.allFinite())
    throw std::invalid_argument("SubjectPanel: non-finite observation");
}

}  // namespace ouf

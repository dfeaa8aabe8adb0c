#include "ouf/sim.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "ouf/common.hpp"
#include "ouf/likelihood.hpp"
#include "ouf/model_selection.hpp"
#include "ouf/ou_process.hpp"
#include "ouf/rng.hpp"

namespace ouf {

namespace {

ModelSpec make_spec(int p) {
  ModelSpec spec;
  spec.outcomes = {"y1", "y2", "y3", "y4"};
  spec.factors.clear();
  for (int f = 0; f < p; ++f) spec.factors.push_back("f" + std::to_string(f + 1));
  switch (p) {
    case 1:
      spec.factor_of_outcome = {0, 0, 0, 0};
      spec.anchor_outcome = {0};
      break;
    case 2:
      spec.factor_of_outcome = {0, 0, 1, 1};
      // Anchor the second factor at y4: its loading is positive in the shared
      // measurement truth, so fitted signs line up with the targets.
      spec.anchor_outcome = {0, 3};
      break;
    case 3:
      spec.factor_of_outcome = {0, 0, 1, 2};
      spec.anchor_outcome = {0, 2, 3};
      break;
    default:
      throw std::invalid_argument("make_spec: factor count must be 1, 2 or 3");
  }
  spec.validate();
  return spec;
}

// Shared measurement truth: loadings (1.2, 1.8, -0.4, 2) placed per the spec's
// outcome -> factor map, intercept variances (1.1, 1.3, 1.4, 0.9), error
// variances (0.6, 0.5, 0.4, 0.7).
MeasurementParams make_meas(const ModelSpec& spec) {
  MeasurementParams meas;
  meas.lambda = Eigen::MatrixXd::Zero(spec.num_outcomes(), spec.num_factors());
  const double loadings[4] = {1.2, 1.8, -0.4, 2.0};
  for (Eigen::Index k = 0; k < 4; ++k)
    meas.lambda(k, spec.factor_of_outcome[static_cast<std::size_t>(k)]) = loadings[k];
  meas.sigma_u.resize(4);
  meas.sigma_u << 1.1, 1.3, 1.4, 0.9;
  meas.sigma_eps.resize(4);
  meas.sigma_eps << 0.6, 0.5, 0.4, 0.7;
  return meas;
}

Truth make_truth(std::string name, int p, std::vector<double> theta_rm,
                 std::vector<double> sigma) {
  Truth t;
  t.name = std::move(name);
  t.spec = make_spec(p);
  t.params.meas = make_meas(t.spec);
  t.params.ou.theta.resize(p, p);
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c)
      t.params.ou.theta(r, c) = theta_rm[static_cast<std::size_t>(r * p + c)];
  t.params.ou.sigma = Eigen::Map<const Eigen::VectorXd>(sigma.data(), p);
  t.params.ou.validate();
  return t;
}

}  // namespace

const std::vector<Truth>& truth_catalog() {
  static const std::vector<Truth> catalog = [] {
    std::vector<Truth> list;
    list.push_back(make_truth("setting1", 2, {1, 0.6, 4, 5}, {1, 2}));
    list.push_back(make_truth("setting2", 2, {1.0, 0.4, 1.8, 3.0}, {1.25, 2.00}));
    list.push_back(make_truth("setting3", 2, {1, 0.5, 2, 5}, {2, 3}));
    list.push_back(make_truth("one_factor", 1, {0.8}, {1}));
    list.push_back(make_truth("two_factor_low", 2, {2, 0.5, 0.4, 4}, {2, 1}));
    list.push_back(make_truth("two_factor_high", 2, {1, 1.5, 2, 5}, {2, 3}));
    list.push_back(make_truth("three_factor_low", 3,
                              {2, 0.2, 0.4, 0.8, 1.1, 0.5, 0.7, 0.5, 1.2},
                              {1.2, 0.8, 0.4}));
    list.push_back(make_truth("three_factor_high", 3,
                              {1, 0.4, 0.6, 1.8, 3, 0.9, 0.9, 1, 1.2},
                              {1.2, 0.8, 0.4}));
    return list;
  }();
  return catalog;
}

const Truth& find_truth(const std::string& name) {
  for (const Truth& t : truth_catalog())
    if (t.name == name) return t;
  throw std::invalid_argument("find_truth: unknown truth '" + name + "'");
}

std::vector<ModelSpec> factor_count_candidates() {
  return {make_spec(1), make_spec(2), make_spec(3)};
}

void SimDesign::validate() const {
  if (num_subjects < 1) throw std::invalid_argument("SimDesign: need at least one subject");
  if (min_occasions < 1 || max_occasions < min_occasions)
    throw std::invalid_argument("SimDesign: bad occasion range");
  if (!(min_gap > 0.0) || max_gap < min_gap)
    throw std::invalid_argument("SimDesign: gap range needs positive lower bound");
}

Dataset generate_dataset(const Truth& truth, const SimDesign& design) {
  design.validate();
  truth.spec.validate();
  truth.params.meas.validate(truth.spec);
  truth.params.ou.validate();
  const Eigen::Index k = truth.spec.num_outcomes();

  Dataset data;
  data.reserve(static_cast<std::size_t>(design.num_subjects));
  for (int i = 0; i < design.num_subjects; ++i) {
    Rng rng(mix_seed(design.seed, static_cast<std::uint64_t>(i)));
    const int n = rng.uniform_int(design.min_occasions, design.max_occasions);

    SubjectPanel panel;
    char id[16];
    std::snprintf(id, sizeof id, "s%04d", i + 1);
    panel.id = id;
    panel.grid.times.resize(static_cast<std::size_t>(n));
    double t = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j > 0) t += rng.uniform(design.min_gap, design.max_gap);
      panel.grid.times[static_cast<std::size_t>(j)] = t;
    }

    const Eigen::MatrixXd sigma_star =
        assemble_sigma_star(truth.params.meas, truth.params.ou, panel.grid);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma_star);
    if (llt.info() != Eigen::Success)
      throw NumericalError("generate_dataset: joint covariance not positive definite");
    Eigen::VectorXd z(n * k);
    for (Eigen::Index m = 0; m < z.size(); ++m) z[m] = rng.normal();
    const Eigen::VectorXd stacked = llt.matrixL() * z;

    panel.y.resize(n, k);
    for (Eigen::Index occ = 0; occ < n; ++occ)
      for (Eigen::Index m = 0; m < k; ++m) panel.y(occ, m) = stacked[occ * k + m];
    panel.validate();
    data.push_back(std::move(panel));
  }
  return data;
}

ModelParams target_params(const ModelParams& truth) {
  const RescaleResult rs = rescale_to_unit_variance(truth.ou);
  ModelParams out;
  out.meas = truth.meas;
  out.meas.lambda = truth.meas.lambda * rs.constants.cwiseInverse().asDiagonal();
  out.ou = rs.params;
  return out;
}

RecoveryTable replicate_recovery(const Truth& truth, const SimDesign& design,
                                 int replicates, const FitConfig& cfg) {
  if (replicates < 1)
    throw std::invalid_argument("replicate_recovery: need at least one replicate");
  const ModelParams target = target_params(truth.params);
  const Eigen::VectorXd target_vec = param_vector(target, truth.spec);
  const std::vector<std::string> names = param_names(truth.spec);
  const Eigen::Index dim = target_vec.size();
  const Eigen::Index se_dim =
      3 * truth.spec.num_outcomes() + truth.spec.num_factors() * truth.spec.num_factors();

  RecoveryTable table;
  table.replicates = replicates;
  std::vector<Eigen::VectorXd> estimates;
  estimates.reserve(static_cast<std::size_t>(replicates));
  Eigen::VectorXd se_sum = Eigen::VectorXd::Zero(se_dim);
  std::vector<int> se_count(static_cast<std::size_t>(se_dim), 0);
  std::vector<int> se_invalid(static_cast<std::size_t>(se_dim), 0);

  for (int r = 0; r < replicates; ++r) {
    SimDesign d = design;
    d.seed = mix_seed(design.seed, 0x7265706cULL + static_cast<std::uint64_t>(r));
    const Dataset data = generate_dataset(truth, d);
    const FitResult res = fit(data, truth.spec, cfg);
    switch (res.reason) {
      case ConvergenceReason::param_tol:
      case ConvergenceReason::loglik_tol:
        ++table.num_converged;
        break;
      case ConvergenceReason::max_iters:
        ++table.num_max_iters;
        break;
      default:
        ++table.num_failed;
        continue;  // recorded, not fatal
    }
    estimates.push_back(param_vector(res.params, truth.spec));
    const SeResult se = standard_errors(res.params, truth.spec, data, cfg);
    for (Eigen::Index i = 0; i < se_dim; ++i) {
      if (se.valid[static_cast<std::size_t>(i)]) {
        se_sum[i] += se.se[i];
        ++se_count[static_cast<std::size_t>(i)];
      } else {
        ++se_invalid[static_cast<std::size_t>(i)];
      }
    }
  }

  table.used = static_cast<int>(estimates.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(dim, nan);
  Eigen::VectorXd sd = Eigen::VectorXd::Constant(dim, nan);
  if (table.used > 0) {
    mean.setZero();
    for (const Eigen::VectorXd& e : estimates) mean += e;
    mean /= static_cast<double>(table.used);
    if (table.used > 1) {
      sd.setZero();
      for (const Eigen::VectorXd& e : estimates) sd += (e - mean).cwiseAbs2();
      sd = (sd / static_cast<double>(table.used - 1)).cwiseSqrt();
    }
  }

  table.rows.reserve(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < dim; ++i) {
    RecoveryRow row;
    row.name = names[static_cast<std::size_t>(i)];
    row.target = target_vec[i];
    row.mean = mean[i];
    row.bias = mean[i] - target_vec[i];
    row.emp_sd = sd[i];
    row.has_se = i < se_dim;
    if (row.has_se) {
      const int m = se_count[static_cast<std::size_t>(i)];
      row.mean_se = m > 0 ? se_sum[i] / static_cast<double>(m) : nan;
      row.se_ratio = row.mean_se / row.emp_sd;
      row.se_invalid = se_invalid[static_cast<std::size_t>(i)];
    } else {
      row.mean_se = nan;
      row.se_ratio = nan;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

SelectionStudy replicate_selection(const Truth& truth, const SimDesign& design,
                                   int replicates, const FitConfig& cfg) {
  if (replicates < 1)
    throw std::invalid_argument("replicate_selection: need at least one replicate");
  const std::vector<ModelSpec> candidates = factor_count_candidates();

  SelectionStudy study;
  study.replicates = replicates;
  for (const ModelSpec& spec : candidates)
    study.factor_counts.push_back(static_cast<int>(spec.num_factors()));
  study.aic_wins.assign(candidates.size(), 0);
  study.bic_wins.assign(candidates.size(), 0);

  for (int r = 0; r < replicates; ++r) {
    SimDesign d = design;
    d.seed = mix_seed(design.seed, 0x73656c65ULL + static_cast<std::uint64_t>(r));
    const Dataset data = generate_dataset(truth, d);
    const SelectionReport report = select(data, candidates, cfg);
    bool all_usable = true;
    for (const CandidateReport& cand : report.candidates)
      if (!cand.usable) all_usable = false;
    if (!all_usable || report.aic_winner < 0 || report.bic_winner < 0) continue;
    ++study.usable;
    ++study.aic_wins[static_cast<std::size_t>(report.aic_winner)];
    ++study.bic_wins[static_cast<std::size_t>(report.bic_winner)];
  }
  return study;
}

}  // namespace ouf

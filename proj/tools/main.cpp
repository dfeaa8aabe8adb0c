// ouf: simulate, fit, compare and summarize latent OU factor models.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "ouf/common.hpp"
#include "ouf/estimation.hpp"
#include "ouf/io.hpp"
#include "ouf/model_selection.hpp"
#include "ouf/ou_process.hpp"
#include "ouf/rng.hpp"
#include "ouf/sim.hpp"

namespace {

using namespace ouf;

std::string with_suffix(const std::string& path, const std::string& suffix) {
  const std::size_t dot = path.find_last_of('.');
  const std::size_t slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + suffix;
  return path.substr(0, dot) + suffix;
}

// Default gap grid for decay curves: 0 to five times the slowest half-life.
double slowest_half_life(const Eigen::MatrixXd& theta) {
  const Eigen::VectorXd re = Eigen::EigenSolver<Eigen::MatrixXd>(theta, false)
                                 .eigenvalues()
                                 .real();
  return std::log(2.0) / re.minCoeff();
}

std::vector<double> gap_grid(double max_gap, int points) {
  std::vector<double> gaps(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    gaps[static_cast<std::size_t>(i)] =
        max_gap * static_cast<double>(i) / static_cast<double>(points - 1);
  return gaps;
}

struct DecayBands {
  std::vector<Eigen::MatrixXd> lower;
  std::vector<Eigen::MatrixXd> upper;
  int discarded = 0;
  bool ok = false;
};

// Parametric bootstrap over the drift: sample theta, rescale to unit
// variances via the implied sigma, track pointwise 2.5/97.5 percentiles.
DecayBands decay_bands(const Eigen::MatrixXd& theta_hat, const Eigen::MatrixXd& theta_cov,
                       const std::vector<double>& gaps, int draws, std::uint64_t seed) {
  const Eigen::Index p = theta_hat.rows();
  DecayBands bands;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      0.5 * (theta_cov + theta_cov.transpose()));
  const Eigen::MatrixXd root = eig.eigenvectors() *
                               eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                               eig.eigenvectors().transpose();
  Eigen::VectorXd mean(p * p);
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index c = 0; c < p; ++c) mean[r * p + c] = theta_hat(r, c);

  const std::size_t cells = gaps.size() * static_cast<std::size_t>(p * p);
  std::vector<std::vector<double>> samples(cells);

  Rng rng(seed);
  for (int b = 0; b < draws; ++b) {
    Eigen::VectorXd z(p * p);
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Eigen::VectorXd tv = mean + root * z;
    OUParams ou;
    ou.theta.resize(p, p);
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index c = 0; c < p; ++c) ou.theta(r, c) = tv[r * p + c];
    if (!is_valid_drift(ou.theta)) {
      ++bands.discarded;
      continue;
    }
    try {
      ou.sigma = sigma_from_theta(ou.theta);
    } catch (const NumericalError&) {
      ++bands.discarded;
      continue;
    }
    const std::vector<Eigen::MatrixXd> curves = correlation_decay(ou, gaps);
    for (std::size_t g = 0; g < gaps.size(); ++g)
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index c = 0; c < p; ++c)
          samples[g * static_cast<std::size_t>(p * p) +
                  static_cast<std::size_t>(i * p + c)]
              .push_back(curves[g](i, c));
  }
  if (samples[0].empty()) return bands;  // every draw discarded

  auto percentile = [](std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    if (idx > 0) --idx;
    if (idx >= v.size()) idx = v.size() - 1;
    return v[idx];
  };
  bands.lower.assign(gaps.size(), Eigen::MatrixXd(p, p));
  bands.upper.assign(gaps.size(), Eigen::MatrixXd(p, p));
  for (std::size_t g = 0; g < gaps.size(); ++g)
    for (Eigen::Index i = 0; i < p; ++i)
      for (Eigen::Index c = 0; c < p; ++c) {
        auto& v = samples[g * static_cast<std::size_t>(p * p) +
                          static_cast<std::size_t>(i * p + c)];
        bands.lower[g](i, c) = percentile(v, 0.025);
        bands.upper[g](i, c) = percentile(v, 0.975);
      }
  bands.ok = true;
  return bands;
}

struct SimulateOpts {
  std::string setting;
  std::string truth_file;
  std::string out;
  std::string truth_out;
  int n_subjects = 200;
  int min_occasions = 10;
  int max_occasions = 20;
  double min_gap = 0.1;
  double max_gap = 2.0;
  std::uint64_t seed = 0;
};

int run_simulate(const SimulateOpts& opt) {
  Truth truth;
  if (!opt.setting.empty()) {
    std::string name = opt.setting;
    if (name == "1" || name == "2" || name == "3") name = "setting" + name;
    truth = find_truth(name);
  } else {
    const SpecFile sf = read_spec_json(opt.truth_file);
    if (!sf.has_truth)
      throw std::runtime_error(opt.truth_file + ": no \"truth\" block to simulate from");
    truth.name = "custom";
    truth.spec = sf.spec;
    truth.params = sf.truth;
  }
  SimDesign design;
  design.num_subjects = opt.n_subjects;
  design.min_occasions = opt.min_occasions;
  design.max_occasions = opt.max_occasions;
  design.min_gap = opt.min_gap;
  design.max_gap = opt.max_gap;
  design.seed = opt.seed;

  const Dataset data = generate_dataset(truth, design);
  write_panel_csv(opt.out, data, truth.spec.outcomes);
  const std::string truth_path =
      opt.truth_out.empty() ? with_suffix(opt.out, ".truth.json") : opt.truth_out;
  write_truth_json(truth_path, truth);
  std::cout << "wrote " << data.size() << " subjects to " << opt.out << " (truth: "
            << truth_path << ")\n";
  return 0;
}

struct FitOpts {
  std::string panel;
  std::string spec;
  std::string out;
  std::string decay_out;
  int max_iters = -1;
  int draws = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool no_bootstrap = false;
  bool dense = false;
};

int run_fit(const FitOpts& opt) {
  SpecFile sf = read_spec_json(opt.spec);
  if (opt.max_iters > 0) sf.fit.max_block_iters = opt.max_iters;
  if (opt.draws >= 0) sf.fit.bootstrap_draws = opt.draws;
  if (opt.seed_set) sf.fit.seed = opt.seed;
  if (opt.dense) sf.fit.dense_likelihood = true;

  const PanelFile pf = read_panel_csv(opt.panel);
  if (pf.outcomes != sf.spec.outcomes)
    throw std::runtime_error(opt.panel + ": outcome columns do not match the spec file");

  FitResult res = fit(pf.data, sf.spec, sf.fit);
  if (res.reason == ConvergenceReason::failed) {
    write_fit_json(opt.out, res, sf.spec, sf.fit);
    std::cerr << "fit failed: " << res.message << "\n";
    return 2;
  }

  const SeResult se = standard_errors(res.params, sf.spec, pf.data, sf.fit);
  res.se = se.se;
  res.se_valid = se.valid;
  res.theta_cov = se.theta_cov;
  if (!se.message.empty())
    std::cerr << "warning: standard errors unavailable: " << se.message << "\n";

  const bool have_cov = se.message.empty();
  if (!opt.no_bootstrap && have_cov && sf.fit.bootstrap_draws > 0) {
    const BootstrapResult boot = bootstrap_sigma(res.params, res.theta_cov,
                                                 sf.fit.bootstrap_draws, sf.fit.seed);
    res.sigma_ci = boot.sigma_ci;
    res.bootstrap_discard_rate = boot.discard_rate;
    res.bootstrap_warning = boot.high_discard;
    if (boot.high_discard)
      std::cerr << "warning: " << 100.0 * boot.discard_rate
                << "% of bootstrap draws were invalid\n";
  }
  write_fit_json(opt.out, res, sf.spec, sf.fit);

  const std::string decay_path =
      opt.decay_out.empty() ? with_suffix(opt.out, ".decay.csv") : opt.decay_out;
  const std::vector<double> gaps =
      gap_grid(5.0 * slowest_half_life(res.params.ou.theta), 200);
  const std::vector<Eigen::MatrixXd> curves = correlation_decay(res.params.ou, gaps);
  if (!opt.no_bootstrap && have_cov && sf.fit.bootstrap_draws > 0) {
    const DecayBands bands = decay_bands(res.params.ou.theta, res.theta_cov, gaps,
                                         sf.fit.bootstrap_draws, sf.fit.seed);
    if (bands.ok) {
      write_decay_csv(decay_path, gaps, curves, sf.spec.factors, &bands.lower,
                      &bands.upper);
    } else {
      std::cerr << "warning: all decay bootstrap draws invalid; bands omitted\n";
      write_decay_csv(decay_path, gaps, curves, sf.spec.factors);
    }
  } else {
    write_decay_csv(decay_path, gaps, curves, sf.spec.factors);
  }

  std::cout << "fit " << to_string(res.reason) << " after " << res.block_iters
            << " rounds, -2 log L = " << res.neg2_loglik << "\n"
            << "wrote " << opt.out << " and " << decay_path << "\n";
  return 0;
}

struct SelectOpts {
  std::string panel;
  std::vector<std::string> specs;
  std::string out;
  std::string csv;
  int max_iters = -1;
};

int run_select(const SelectOpts& opt) {
  const PanelFile pf = read_panel_csv(opt.panel);
  std::vector<ModelSpec> candidates;
  FitConfig cfg;
  for (std::size_t i = 0; i < opt.specs.size(); ++i) {
    SpecFile sf = read_spec_json(opt.specs[i]);
    if (pf.outcomes != sf.spec.outcomes)
      throw std::runtime_error(opt.specs[i] + ": outcome columns do not match the panel");
    if (i == 0) cfg = sf.fit;  // shared fit settings come from the first spec
    candidates.push_back(std::move(sf.spec));
  }
  if (opt.max_iters > 0) cfg.max_block_iters = opt.max_iters;

  const SelectionReport report = select(pf.data, candidates, cfg);
  write_selection_json(opt.out, report, static_cast<Eigen::Index>(pf.data.size()));
  if (!opt.csv.empty())
    write_selection_csv(opt.csv, report, static_cast<Eigen::Index>(pf.data.size()));
  for (const CandidateReport& cand : report.candidates) {
    std::cout << cand.count.p << " factor(s): ";
    if (cand.usable)
      std::cout << "AIC " << cand.aic << ", BIC " << cand.bic << " (" << to_string(cand.fit.reason)
                << ")\n";
    else
      std::cout << "failed (" << cand.fit.message << ")\n";
  }
  if (report.aic_winner >= 0)
    std::cout << "AIC winner: "
              << report.candidates[static_cast<std::size_t>(report.aic_winner)].count.p
              << " factor(s); BIC winner: "
              << report.candidates[static_cast<std::size_t>(report.bic_winner)].count.p
              << " factor(s)\n";
  else
    std::cout << "no usable candidate\n";
  return 0;
}

struct AutocorrOpts {
  std::string fit_path;
  std::string out;
  double max_gap = 0.0;
  int points = 200;
  int draws = 1000;
  std::uint64_t seed = 0;
};

int run_autocorr(const AutocorrOpts& opt) {
  const FitFile ff = read_fit_json(opt.fit_path);
  OUParams ou;
  ou.theta = ff.theta;
  ou.sigma = ff.sigma;
  ou.validate();
  const double max_gap =
      opt.max_gap > 0.0 ? opt.max_gap : 5.0 * slowest_half_life(ou.theta);
  const std::vector<double> gaps = gap_grid(max_gap, opt.points);
  const std::vector<Eigen::MatrixXd> curves = correlation_decay(ou, gaps);

  if (ff.has_theta_cov && opt.draws > 0) {
    const DecayBands bands =
        decay_bands(ff.theta, ff.theta_cov, gaps, opt.draws, opt.seed);
    if (bands.ok) {
      write_decay_csv(opt.out, gaps, curves, ff.factors, &bands.lower, &bands.upper);
      std::cout << "wrote " << opt.out << "\n";
      return 0;
    }
    std::cerr << "warning: all bootstrap draws invalid; bands omitted\n";
  } else if (!ff.has_theta_cov) {
    std::cerr << "warning: fit JSON has no theta_cov block; bands omitted\n";
  }
  write_decay_csv(opt.out, gaps, curves, ff.factors);
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

struct ReplicateOpts {
  std::string setting;
  std::string out;
  int reps = 0;
  int n_subjects = 200;
  std::uint64_t seed = 0;
  int max_iters = -1;
};

int run_replicate_recovery(const ReplicateOpts& opt) {
  std::string name = opt.setting;
  if (name == "1" || name == "2" || name == "3") name = "setting" + name;
  const Truth& truth = find_truth(name);
  SimDesign design;
  design.num_subjects = opt.n_subjects;
  design.seed = opt.seed;
  FitConfig cfg;
  if (opt.max_iters > 0) cfg.max_block_iters = opt.max_iters;

  const RecoveryTable table = replicate_recovery(truth, design, opt.reps, cfg);
  write_recovery_csv(opt.out, table);
  std::cout << "replicates " << table.replicates << ": converged " << table.num_converged
            << ", max-iters " << table.num_max_iters << ", failed " << table.num_failed
            << "; table over " << table.used << " fits written to " << opt.out << "\n";
  return 0;
}

int run_replicate_selection(const ReplicateOpts& opt) {
  const Truth& truth = find_truth(opt.setting);
  SimDesign design;
  design.num_subjects = opt.n_subjects;
  design.seed = opt.seed;
  FitConfig cfg;
  if (opt.max_iters > 0) cfg.max_block_iters = opt.max_iters;

  const SelectionStudy study = replicate_selection(truth, design, opt.reps, cfg);
  write_selection_study_csv(opt.out, study);
  std::cout << "replicates " << study.replicates << ", usable " << study.usable << "\n";
  for (std::size_t i = 0; i < study.factor_counts.size(); ++i)
    std::cout << study.factor_counts[i] << " factor(s): AIC wins " << study.aic_wins[i]
              << ", BIC wins " << study.bic_wins[i] << "\n";
  std::cout << "wrote " << opt.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent Ornstein-Uhlenbeck factor models for longitudinal panels"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker cap (current build runs sequentially)")
      ->check(CLI::PositiveNumber);

  SimulateOpts sim_opt;
  auto* sim = app.add_subcommand("simulate", "Generate panels from a truth parameter set");
  auto* setting_flag =
      sim->add_option("--setting", sim_opt.setting, "Catalog truth (1|2|3 or a catalog name)");
  auto* truth_flag = sim->add_option("--truth-file", sim_opt.truth_file,
                                     "Spec JSON with an embedded truth block");
  setting_flag->excludes(truth_flag);
  sim->add_option("--n-subjects", sim_opt.n_subjects, "Subjects")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--min-occasions", sim_opt.min_occasions, "Fewest occasions per subject")->capture_default_str();
  sim->add_option("--max-occasions", sim_opt.max_occasions, "Most occasions per subject")->capture_default_str();
  sim->add_option("--min-gap", sim_opt.min_gap, "Shortest gap between occasions")->capture_default_str();
  sim->add_option("--max-gap", sim_opt.max_gap, "Longest gap between occasions")->capture_default_str();
  sim->add_option("--seed", sim_opt.seed, "RNG seed")->capture_default_str();
  sim->add_option("--out", sim_opt.out, "Output panel CSV")->required();
  sim->add_option("--truth-out", sim_opt.truth_out, "Truth JSON path (default: derived)");

  FitOpts fit_opt;
  auto* fitc = app.add_subcommand("fit", "Estimate a model from a panel CSV");
  fitc->add_option("--panel", fit_opt.panel, "Panel CSV")->required();
  fitc->add_option("--spec", fit_opt.spec, "Model spec JSON")->required();
  fitc->add_option("--out", fit_opt.out, "Fit result JSON")->required();
  fitc->add_option("--decay-out", fit_opt.decay_out, "Decay CSV path (default: derived)");
  fitc->add_option("--max-iters", fit_opt.max_iters, "Cap on block rounds");
  fitc->add_option("--draws", fit_opt.draws, "Bootstrap draw count");
  auto* seed_opt = fitc->add_option("--seed", fit_opt.seed, "Bootstrap seed");
  fitc->add_flag("--no-bootstrap", fit_opt.no_bootstrap, "Skip bootstrap intervals");
  fitc->add_flag("--dense-likelihood", fit_opt.dense, "Use the dense reference likelihood");

  SelectOpts sel_opt;
  auto* sel = app.add_subcommand("select", "Fit several specs and compare AIC/BIC");
  sel->add_option("--panel", sel_opt.panel, "Panel CSV")->required();
  sel->add_option("--spec", sel_opt.specs, "Model spec JSON (repeat per candidate)")
      ->required()
      ->take_all();
  sel->add_option("--out", sel_opt.out, "Report JSON")->required();
  sel->add_option("--csv", sel_opt.csv, "Also write a CSV report");
  sel->add_option("--max-iters", sel_opt.max_iters, "Cap on block rounds");

  AutocorrOpts ac_opt;
  auto* ac = app.add_subcommand("autocorr", "Correlation decay curves from a fit JSON");
  ac->add_option("--fit", ac_opt.fit_path, "Fit result JSON")->required();
  ac->add_option("--out", ac_opt.out, "Decay CSV")->required();
  ac->add_option("--max-gap", ac_opt.max_gap, "Largest gap (default: 5 half-lives)");
  ac->add_option("--points", ac_opt.points, "Grid size")->capture_default_str()->check(CLI::Range(2, 100000));
  ac->add_option("--draws", ac_opt.draws, "Bootstrap draw count")->capture_default_str();
  ac->add_option("--seed", ac_opt.seed, "Bootstrap seed")->capture_default_str();

  ReplicateOpts rep_opt;
  auto* rep = app.add_subcommand("replicate", "Monte Carlo recovery / selection studies");
  rep->require_subcommand(1);
  auto* rec = rep->add_subcommand("recovery", "Bias and SE calibration study");
  auto* selrep = rep->add_subcommand("selection", "AIC/BIC factor-count study");
  for (CLI::App* sub : {rec, selrep}) {
    sub->add_option("--setting", rep_opt.setting, "Catalog truth name")->required();
    sub->add_option("--reps", rep_opt.reps, "Replicates")->required()->check(CLI::PositiveNumber);
    sub->add_option("--n-subjects", rep_opt.n_subjects, "Subjects per replicate")->capture_default_str();
    sub->add_option("--seed", rep_opt.seed, "Master seed")->capture_default_str();
    sub->add_option("--max-iters", rep_opt.max_iters, "Cap on block rounds");
    sub->add_option("--out", rep_opt.out, "Summary CSV")->required();
  }

  int rc = 0;
  sim->callback([&]() {
    if (sim_opt.setting.empty() && sim_opt.truth_file.empty())
      throw CLI::ValidationError("simulate", "one of --setting / --truth-file is required");
    rc = run_simulate(sim_opt);
  });
  fitc->callback([&]() {
    fit_opt.seed_set = seed_opt->count() > 0;
    rc = run_fit(fit_opt);
  });
  sel->callback([&]() { rc = run_select(sel_opt); });
  ac->callback([&]() { rc = run_autocorr(ac_opt); });
  rec->callback([&]() { rc = run_replicate_recovery(rep_opt); });
  selrep->callback([&]() { rc = run_replicate_selection(rep_opt); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}

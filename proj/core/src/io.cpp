#include "ouf/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ouf/ou_process.hpp"

namespace ouf {

namespace {

using nlohmann::json;

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail_at(const std::string& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& field, const std::string& path, std::size_t line) {
  if (field.empty()) fail_at(path, line, "missing cell");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || errno == ERANGE)
    fail_at(path, line, "cannot parse number '" + field + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

Eigen::VectorXd to_vector(const json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = a.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

Eigen::MatrixXd to_matrix(const json& a) {
  const auto rows = static_cast<Eigen::Index>(a.size());
  if (rows == 0) return {};
  const auto cols = static_cast<Eigen::Index>(a.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = a.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw std::runtime_error("ragged matrix in JSON");
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json from_vector(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json from_matrix(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(std::move(row));
  }
  return a;
}

json model_block(const ModelSpec& spec) {
  json j;
  j["outcomes"] = spec.outcomes;
  j["factors"] = spec.factors;
  json lm = json::object();
  for (std::size_t k = 0; k < spec.outcomes.size(); ++k)
    lm[spec.outcomes[k]] = spec.factors[static_cast<std::size_t>(spec.factor_of_outcome[k])];
  j["loading_map"] = std::move(lm);
  json sa = json::object();
  for (std::size_t f = 0; f < spec.factors.size(); ++f)
    sa[spec.factors[f]] = spec.outcomes[static_cast<std::size_t>(spec.anchor_outcome[f])];
  j["sign_anchors"] = std::move(sa);
  return j;
}

json params_block(const ModelParams& params, const ModelSpec& spec) {
  json j;
  json lambda = json::array();
  for (Eigen::Index k = 0; k < spec.num_outcomes(); ++k)
    lambda.push_back(params.meas.lambda(k, spec.factor_of_outcome[static_cast<std::size_t>(k)]));
  j["lambda"] = std::move(lambda);
  j["sigma_u"] = from_vector(params.meas.sigma_u);
  j["sigma_eps"] = from_vector(params.meas.sigma_eps);
  j["theta"] = from_matrix(params.ou.theta);
  j["sigma"] = from_vector(params.ou.sigma);
  return j;
}

}  // namespace

void write_panel_csv(const std::string& path, const Dataset& data,
                     const std::vector<std::string>& outcomes) {
  if (data.empty()) throw std::invalid_argument("write_panel_csv: empty dataset");
  for (const SubjectPanel& panel : data)
    if (panel.y.cols() != static_cast<Eigen::Index>(outcomes.size()))
      throw std::invalid_argument("write_panel_csv: outcome name count mismatch");
  std::ofstream out = open_out(path);
  out << "subject_id,time";
  for (const std::string& name : outcomes) out << ',' << name;
  out << '\n';
  for (const SubjectPanel& panel : data) {
    for (Eigen::Index t = 0; t < panel.num_occasions(); ++t) {
      out << panel.id << ',' << g17(panel.grid[t]);
      for (Eigen::Index k = 0; k < panel.y.cols(); ++k) out << ',' << g17(panel.y(t, k));
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

PanelFile read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_csv(line);
  if (header.size() < 3 || header[0] != "subject_id" || header[1] != "time")
    fail_at(path, lineno, "header must be subject_id,time,<outcomes...>");

  PanelFile pf;
  pf.outcomes.assign(header.begin() + 2, header.end());
  const std::size_t k = pf.outcomes.size();

  std::string cur_id;
  std::vector<double> times;
  std::vector<double> values;  // occasion-major, K per occasion
  std::set<std::string> finished;

  auto flush = [&]() {
    if (times.empty()) return;
    SubjectPanel panel;
    panel.id = cur_id;
    panel.grid.times = times;
    const auto n = static_cast<Eigen::Index>(times.size());
    panel.y.resize(n, static_cast<Eigen::Index>(k));
    for (Eigen::Index t = 0; t < n; ++t)
      for (std::size_t m = 0; m < k; ++m)
        panel.y(t, static_cast<Eigen::Index>(m)) = values[static_cast<std::size_t>(t) * k + m];
    panel.validate();
    pf.data.push_back(std::move(panel));
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) fail_at(path, lineno, "blank row");
    const std::vector<std::string> fields = split_csv(line);
    if (fields.size() != k + 2)
      fail_at(path, lineno, "expected " + std::to_string(k + 2) + " columns, got " +
                                std::to_string(fields.size()));
    const std::string& id = fields[0];
    if (id.empty()) fail_at(path, lineno, "empty subject id");
    if (id != cur_id) {
      if (finished.count(id)) fail_at(path, lineno, "subject rows must be contiguous");
      flush();
      if (!cur_id.empty()) finished.insert(cur_id);
      cur_id = id;
      times.clear();
      values.clear();
    }
    const double t = parse_number(fields[1], path, lineno);
    if (!times.empty() && t <= times.back())
      fail_at(path, lineno, "times must be strictly increasing within subject");
    times.push_back(t);
    for (std::size_t m = 0; m < k; ++m)
      values.push_back(parse_number(fields[2 + m], path, lineno));
  }
  flush();
  if (pf.data.empty()) throw std::runtime_error(path + ": no data rows");
  return pf;
}

SpecFile read_spec_json(const std::string& path, const FitConfig& defaults) {
  const json j = load_json(path);
  SpecFile sf;
  sf.fit = defaults;
  try {
    sf.spec.outcomes = j.at("outcomes").get<std::vector<std::string>>();
    sf.spec.factors = j.at("factors").get<std::vector<std::string>>();
    auto factor_index = [&](const std::string& name) {
      for (std::size_t f = 0; f < sf.spec.factors.size(); ++f)
        if (sf.spec.factors[f] == name) return static_cast<int>(f);
      throw std::runtime_error(path + ": unknown factor '" + name + "'");
    };
    auto outcome_index = [&](const std::string& name) {
      for (std::size_t o = 0; o < sf.spec.outcomes.size(); ++o)
        if (sf.spec.outcomes[o] == name) return static_cast<int>(o);
      throw std::runtime_error(path + ": unknown outcome '" + name + "'");
    };

    const json& lm = j.at("loading_map");
    for (const std::string& outcome : sf.spec.outcomes) {
      if (!lm.contains(outcome))
        throw std::runtime_error(path + ": loading_map misses outcome '" + outcome + "'");
      sf.spec.factor_of_outcome.push_back(factor_index(lm.at(outcome).get<std::string>()));
    }
    sf.spec.default_anchors();
    if (j.contains("sign_anchors")) {
      for (const auto& [fname, oname] : j.at("sign_anchors").items()) {
        const int f = factor_index(fname);
        sf.spec.anchor_outcome[static_cast<std::size_t>(f)] =
            outcome_index(oname.get<std::string>());
      }
    }
    sf.spec.validate();

    if (j.contains("fit")) {
      const json& f = j.at("fit");
      if (f.contains("max_block_iters")) sf.fit.max_block_iters = f.at("max_block_iters").get<int>();
      if (f.contains("rel_param_tol")) sf.fit.rel_param_tol = f.at("rel_param_tol").get<double>();
      if (f.contains("loglik_tol")) sf.fit.loglik_tol = f.at("loglik_tol").get<double>();
      if (f.contains("max_step")) sf.fit.max_step = f.at("max_step").get<double>();
      if (f.contains("theta_diag_lower")) sf.fit.theta_diag_lower = f.at("theta_diag_lower").get<double>();
      if (f.contains("init_variance_floor")) sf.fit.init_variance_floor = f.at("init_variance_floor").get<double>();
      if (f.contains("theta_init_diag_cap")) sf.fit.theta_init_diag_cap = f.at("theta_init_diag_cap").get<double>();
      if (f.contains("bootstrap_draws")) sf.fit.bootstrap_draws = f.at("bootstrap_draws").get<int>();
      if (f.contains("seed")) sf.fit.seed = f.at("seed").get<std::uint64_t>();
      if (f.contains("dense_likelihood")) sf.fit.dense_likelihood = f.at("dense_likelihood").get<bool>();
    }

    if (j.contains("truth")) {
      const json& t = j.at("truth");
      const Eigen::Index kk = sf.spec.num_outcomes(), p = sf.spec.num_factors();
      const Eigen::VectorXd lambda = to_vector(t.at("lambda"));
      if (lambda.size() != kk)
        throw std::runtime_error(path + ": truth.lambda needs one loading per outcome");
      sf.truth.meas.lambda = Eigen::MatrixXd::Zero(kk, p);
      for (Eigen::Index m = 0; m < kk; ++m)
        sf.truth.meas.lambda(m, sf.spec.factor_of_outcome[static_cast<std::size_t>(m)]) = lambda[m];
      sf.truth.meas.sigma_u = to_vector(t.at("sigma_u"));
      sf.truth.meas.sigma_eps = to_vector(t.at("sigma_eps"));
      sf.truth.meas.validate(sf.spec);
      sf.truth.ou.theta = to_matrix(t.at("theta"));
      sf.truth.ou.sigma = to_vector(t.at("sigma"));
      sf.truth.ou.validate();
      if (sf.truth.ou.num_factors() != p)
        throw std::runtime_error(path + ": truth.theta dimension does not match factors");
      sf.has_truth = true;
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return sf;
}

void write_fit_json(const std::string& path, const FitResult& result,
                    const ModelSpec& spec, const FitConfig& cfg) {
  const Eigen::Index k = spec.num_outcomes(), p = spec.num_factors();
  json j;
  j["model"] = model_block(spec);
  j["convergence"] = {
      {"converged", result.converged},
      {"reason", to_string(result.reason)},
      {"block_iters", result.block_iters},
      {"message", result.message},
      {"neg2_loglik", result.neg2_loglik},
      {"trace", result.trace},
  };
  if (result.params.meas.lambda.size() > 0)
    j["estimates"] = params_block(result.params, spec);

  if (result.se.size() == 3 * k + p * p) {
    auto entry = [&](Eigen::Index i) {
      return result.se_valid[static_cast<std::size_t>(i)] ? json(result.se[i]) : json(nullptr);
    };
    json se;
    json lam = json::array(), sdu = json::array(), sde = json::array();
    for (Eigen::Index m = 0; m < k; ++m) lam.push_back(entry(m));
    for (Eigen::Index m = 0; m < k; ++m) sdu.push_back(entry(k + m));
    for (Eigen::Index m = 0; m < k; ++m) sde.push_back(entry(2 * k + m));
    se["lambda"] = std::move(lam);
    se["sd_u"] = std::move(sdu);    // SE of the intercept SD, not the variance
    se["sd_eps"] = std::move(sde);  // SE of the error SD
    json th = json::array();
    for (Eigen::Index r = 0; r < p; ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < p; ++c) row.push_back(entry(3 * k + r * p + c));
      th.push_back(std::move(row));
    }
    se["theta"] = std::move(th);
    j["standard_errors"] = std::move(se);
  }
  if (result.theta_cov.size() > 0) j["theta_cov"] = from_matrix(result.theta_cov);
  if (result.sigma_ci.size() > 0) {
    j["sigma_ci"] = from_matrix(result.sigma_ci);
    j["bootstrap"] = {
        {"draws", cfg.bootstrap_draws},
        {"discard_rate", result.bootstrap_discard_rate},
        {"high_discard_warning", result.bootstrap_warning},
    };
  }
  j["config"] = {
      {"max_block_iters", cfg.max_block_iters},
      {"rel_param_tol", cfg.rel_param_tol},
      {"loglik_tol", cfg.loglik_tol},
      {"max_step", cfg.max_step},
      {"theta_diag_lower", cfg.theta_diag_lower},
      {"init_variance_floor", cfg.init_variance_floor},
      {"theta_init_diag_cap", cfg.theta_init_diag_cap},
      {"bootstrap_draws", cfg.bootstrap_draws},
      {"seed", cfg.seed},
      {"dense_likelihood", cfg.dense_likelihood},
  };
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

FitFile read_fit_json(const std::string& path) {
  const json j = load_json(path);
  FitFile ff;
  try {
    ff.factors = j.at("model").at("factors").get<std::vector<std::string>>();
    ff.theta = to_matrix(j.at("estimates").at("theta"));
    ff.sigma = to_vector(j.at("estimates").at("sigma"));
    if (j.contains("theta_cov")) {
      ff.theta_cov = to_matrix(j.at("theta_cov"));
      ff.has_theta_cov = ff.theta_cov.size() > 0;
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  const auto p = static_cast<Eigen::Index>(ff.factors.size());
  if (ff.theta.rows() != p || ff.theta.cols() != p || ff.sigma.size() != p)
    throw std::runtime_error(path + ": estimates do not match the factor list");
  return ff;
}

void write_truth_json(const std::string& path, const Truth& truth) {
  json j;
  j["name"] = truth.name;
  j["model"] = model_block(truth.spec);
  j["data_generating"] = params_block(truth.params, truth.spec);
  j["target"] = params_block(target_params(truth.params), truth.spec);
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_decay_csv(const std::string& path, const std::vector<double>& gaps,
                     const std::vector<Eigen::MatrixXd>& curves,
                     const std::vector<std::string>& factors,
                     const std::vector<Eigen::MatrixXd>* lower,
                     const std::vector<Eigen::MatrixXd>* upper) {
  if (curves.size() != gaps.size())
    throw std::invalid_argument("write_decay_csv: one matrix per gap required");
  if ((lower == nullptr) != (upper == nullptr))
    throw std::invalid_argument("write_decay_csv: need both bands or neither");
  if (lower && (lower->size() != gaps.size() || upper->size() != gaps.size()))
    throw std::invalid_argument("write_decay_csv: band length mismatch");
  const auto p = static_cast<Eigen::Index>(factors.size());
  std::ofstream out = open_out(path);
  out << "gap,row_factor,col_factor,correlation";
  if (lower) out << ",lower,upper";
  out << '\n';
  for (std::size_t g = 0; g < gaps.size(); ++g) {
    if (curves[g].rows() != p || curves[g].cols() != p)
      throw std::invalid_argument("write_decay_csv: matrix dimension mismatch");
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index c = 0; c < p; ++c) {
        out << g17(gaps[g]) << ',' << factors[static_cast<std::size_t>(i)] << ','
            << factors[static_cast<std::size_t>(c)] << ',' << g17(curves[g](i, c));
        if (lower) out << ',' << g17((*lower)[g](i, c)) << ',' << g17((*upper)[g](i, c));
        out << '\n';
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace {

json selection_json(const SelectionReport& report, Eigen::Index num_subjects) {
  json j;
  j["num_subjects"] = num_subjects;
  json cands = json::array();
  for (const CandidateReport& cand : report.candidates) {
    json c;
    c["factors"] = cand.count.p;
    c["free_params"] = cand.count.q;
    c["usable"] = cand.usable;
    c["reason"] = to_string(cand.fit.reason);
    if (cand.usable) {
      c["neg2_loglik"] = cand.fit.neg2_loglik;
      c["aic"] = cand.aic;
      c["bic"] = cand.bic;
    } else {
      c["neg2_loglik"] = nullptr;
      c["aic"] = nullptr;
      c["bic"] = nullptr;
    }
    cands.push_back(std::move(c));
  }
  j["candidates"] = std::move(cands);
  j["aic_winner_factors"] =
      report.aic_winner >= 0
          ? json(report.candidates[static_cast<std::size_t>(report.aic_winner)].count.p)
          : json(nullptr);
  j["bic_winner_factors"] =
      report.bic_winner >= 0
          ? json(report.candidates[static_cast<std::size_t>(report.bic_winner)].count.p)
          : json(nullptr);
  return j;
}

}  // namespace

void write_selection_csv(const std::string& path, const SelectionReport& report,
                         Eigen::Index num_subjects) {
  (void)num_subjects;
  std::ofstream out = open_out(path);
  out << "factors,free_params,usable,reason,neg2_loglik,aic,bic,aic_winner,bic_winner\n";
  for (std::size_t i = 0; i < report.candidates.size(); ++i) {
    const CandidateReport& cand = report.candidates[i];
    out << cand.count.p << ',' << cand.count.q << ',' << (cand.usable ? 1 : 0) << ','
        << to_string(cand.fit.reason) << ',';
    if (cand.usable)
      out << g17(cand.fit.neg2_loglik) << ',' << g17(cand.aic) << ',' << g17(cand.bic);
    else
      out << ",,";
    out << ',' << (static_cast<int>(i) == report.aic_winner ? 1 : 0) << ','
        << (static_cast<int>(i) == report.bic_winner ? 1 : 0) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_selection_json(const std::string& path, const SelectionReport& report,
                          Eigen::Index num_subjects) {
  std::ofstream out = open_out(path);
  out << selection_json(report, num_subjects).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_recovery_csv(const std::string& path, const RecoveryTable& table) {
  std::ofstream out = open_out(path);
  out << "name,target,mean,bias,emp_sd,mean_se,se_ratio,se_invalid\n";
  for (const RecoveryRow& row : table.rows) {
    out << row.name << ',' << g17(row.target) << ',' << g17(row.mean) << ','
        << g17(row.bias) << ',' << g17(row.emp_sd) << ',';
    if (row.has_se)
      out << g17(row.mean_se) << ',' << g17(row.se_ratio) << ',' << row.se_invalid;
    else
      out << ",,";
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_selection_study_csv(const std::string& path, const SelectionStudy& study) {
  std::ofstream out = open_out(path);
  out << "factors,aic_wins,bic_wins,aic_share,bic_share\n";
  for (std::size_t i = 0; i < study.factor_counts.size(); ++i) {
    out << study.factor_counts[i] << ',' << study.aic_wins[i] << ',' << study.bic_wins[i] << ',';
    if (study.usable > 0)
      out << g17(static_cast<double>(study.aic_wins[i]) / study.usable) << ','
          << g17(static_cast<double>(study.bic_wins[i]) / study.usable);
    else
      out << ',';
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace ouf

#include "ouf/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ouf/sim.hpp"

namespace {

using namespace ouf;

std::string temp_path(const std::string& name) {
  return ::testing::TempDir() + "io_test_" + name;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  ASSERT_TRUE(out.good());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  EXPECT_TRUE(in.good()) << path;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset tiny_dataset() {
  SubjectPanel a;
  a.id = "s01";
  a.grid.times = {0.0, 1.0 / 3.0, 0.9999999999999999};
  a.y.resize(3, 2);
  a.y << 0.1, -2.5,
         1e-17, 3.0,
         -0.333333333333333315, 7.25;
  SubjectPanel b;
  b.id = "s02";
  b.grid.times = {0.25};
  b.y.resize(1, 2);
  b.y << -1.0, 0.0;
  return {a, b};
}

TEST(PanelCsv, RoundTripsExactly) {
  const std::string path = temp_path("roundtrip.csv");
  const Dataset data = tiny_dataset();
  write_panel_csv(path, data, {"mood", "stress"});
  const PanelFile pf = read_panel_csv(path);

  EXPECT_EQ(pf.outcomes, (std::vector<std::string>{"mood", "stress"}));
  ASSERT_EQ(pf.data.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(pf.data[i].id, data[i].id);
    EXPECT_EQ(pf.data[i].grid.times, data[i].grid.times);  // bitwise via %.17g
    EXPECT_TRUE(pf.data[i].y == data[i].y);
  }
  std::remove(path.c_str());
}

TEST(PanelCsv, AcceptsWindowsLineEndings) {
  const std::string path = temp_path("crlf.csv");
  write_text(path, "subject_id,time,y1\r\ns1,0,1.5\r\ns1,1,2.5\r\n");
  const PanelFile pf = read_panel_csv(path);
  ASSERT_EQ(pf.data.size(), 1u);
  EXPECT_EQ(pf.data[0].y(1, 0), 2.5);
  std::remove(path.c_str());
}

TEST(PanelCsv, ErrorsNameTheOffendingLine) {
  const auto expect_error = [](const std::string& name, const std::string& text,
                               const std::string& line_tag, const std::string& what) {
    const std::string path = temp_path(name);
    write_text(path, text);
    try {
      read_panel_csv(path);
      FAIL() << "expected failure for " << name;
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find(line_tag), std::string::npos) << msg;
      EXPECT_NE(msg.find(what), std::string::npos) << msg;
    }
    std::remove(path.c_str());
  };

  expect_error("badheader.csv", "id,time,y1\ns1,0,1\n", ":1:", "header");
  expect_error("columns.csv", "subject_id,time,y1\ns1,0\n", ":2:", "columns");
  expect_error("times.csv", "subject_id,time,y1\ns1,0,1\ns1,0,2\n", ":3:",
               "strictly increasing");
  expect_error("contiguous.csv",
               "subject_id,time,y1\ns1,0,1\ns2,0,1\ns1,1,2\n", ":4:", "contiguous");
  expect_error("number.csv", "subject_id,time,y1\ns1,0,abc\n", ":2:", "number");
  expect_error("blank.csv", "subject_id,time,y1\ns1,0,1\n\n", ":3:", "blank");

  const std::string empty = temp_path("empty.csv");
  write_text(empty, "");
  EXPECT_THROW(read_panel_csv(empty), std::runtime_error);
  std::remove(empty.c_str());

  const std::string headonly = temp_path("headonly.csv");
  write_text(headonly, "subject_id,time,y1\n");
  EXPECT_THROW(read_panel_csv(headonly), std::runtime_error);
  std::remove(headonly.c_str());

  EXPECT_THROW(read_panel_csv(temp_path("missing.csv")), std::runtime_error);
}

TEST(SpecJson, ParsesFullFile) {
  const std::string path = temp_path("spec_full.json");
  write_text(path, R"({
    "outcomes": ["y1", "y2", "y3", "y4"],
    "factors": ["f1", "f2"],
    "loading_map": {"y1": "f1", "y2": "f1", "y3": "f2", "y4": "f2"},
    "sign_anchors": {"f2": "y4"},
    "fit": {"max_block_iters": 17, "seed": 99, "dense_likelihood": true,
            "bootstrap_draws": 12, "rel_param_tol": 1e-5},
    "truth": {
      "lambda": [1.2, 1.8, -0.4, 2.0],
      "sigma_u": [1.1, 1.3, 1.4, 0.9],
      "sigma_eps": [0.6, 0.5, 0.4, 0.7],
      "theta": [[1.0, 0.4], [1.8, 3.0]],
      "sigma": [1.25, 2.0]
    }
  })");
  const SpecFile sf = read_spec_json(path);
  EXPECT_EQ(sf.spec.factor_of_outcome, (std::vector<int>{0, 0, 1, 1}));
  EXPECT_EQ(sf.spec.anchor_outcome[0], 0);  // default: first on the factor
  EXPECT_EQ(sf.spec.anchor_outcome[1], 3);  // overridden
  EXPECT_EQ(sf.fit.max_block_iters, 17);
  EXPECT_EQ(sf.fit.seed, 99u);
  EXPECT_TRUE(sf.fit.dense_likelihood);
  EXPECT_EQ(sf.fit.bootstrap_draws, 12);
  EXPECT_EQ(sf.fit.rel_param_tol, 1e-5);
  EXPECT_EQ(sf.fit.loglik_tol, FitConfig{}.loglik_tol);  // untouched default
  ASSERT_TRUE(sf.has_truth);
  EXPECT_EQ(sf.truth.meas.lambda(2, 1), -0.4);
  EXPECT_EQ(sf.truth.meas.lambda(2, 0), 0.0);
  EXPECT_EQ(sf.truth.ou.theta(1, 0), 1.8);
  EXPECT_EQ(sf.truth.ou.sigma[1], 2.0);
  std::remove(path.c_str());
}

TEST(SpecJson, MinimalFileUsesCallerDefaults) {
  const std::string path = temp_path("spec_min.json");
  write_text(path, R"({
    "outcomes": ["a", "b"],
    "factors": ["g"],
    "loading_map": {"a": "g", "b": "g"}
  })");
  FitConfig defaults;
  defaults.max_block_iters = 123;
  const SpecFile sf = read_spec_json(path, defaults);
  EXPECT_FALSE(sf.has_truth);
  EXPECT_EQ(sf.fit.max_block_iters, 123);
  EXPECT_EQ(sf.spec.anchor_outcome, (std::vector<int>{0}));
  std::remove(path.c_str());
}

TEST(SpecJson, RejectsBrokenFiles) {
  const std::string unknown = temp_path("spec_unknown.json");
  write_text(unknown, R"({
    "outcomes": ["a"], "factors": ["g"], "loading_map": {"a": "h"}
  })");
  try {
    read_spec_json(unknown);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("unknown factor"), std::string::npos);
  }
  std::remove(unknown.c_str());

  const std::string missing = temp_path("spec_missing.json");
  write_text(missing, R"({
    "outcomes": ["a", "b"], "factors": ["g"], "loading_map": {"a": "g"}
  })");
  EXPECT_THROW(read_spec_json(missing), std::runtime_error);
  std::remove(missing.c_str());

  const std::string notjson = temp_path("spec_bad.json");
  write_text(notjson, "{ not json");
  EXPECT_THROW(read_spec_json(notjson), std::runtime_error);
  std::remove(notjson.c_str());
}

TEST(FitJson, RoundTripsThroughTheDecayReader) {
  const ModelSpec spec = [&] {
    ModelSpec s;
    s.outcomes = {"y1", "y2", "y3", "y4"};
    s.factors = {"f1", "f2"};
    s.factor_of_outcome = {0, 0, 1, 1};
    s.default_anchors();
    return s;
  }();

  FitResult result;
  result.params.meas.lambda = Eigen::MatrixXd::Zero(4, 2);
  result.params.meas.lambda(0, 0) = 0.9;
  result.params.meas.lambda(1, 0) = 1.4;
  result.params.meas.lambda(2, 1) = -0.3;
  result.params.meas.lambda(3, 1) = 1.6;
  result.params.meas.sigma_u = Eigen::VectorXd::Constant(4, 1.0);
  result.params.meas.sigma_eps = Eigen::VectorXd::Constant(4, 0.5);
  result.params.ou.theta.resize(2, 2);
  result.params.ou.theta << 1.1, 0.3, 1.7, 2.9;
  result.params.ou.sigma = sigma_from_theta(result.params.ou.theta);
  result.neg2_loglik = 1234.5;
  result.trace = {1300.0, 1250.0, 1234.5};
  result.converged = true;
  result.reason = ConvergenceReason::param_tol;
  result.se = Eigen::VectorXd::LinSpaced(16, 0.01, 0.16);
  result.se_valid.assign(16, 1);
  result.se_valid[5] = 0;  // one invalid entry becomes JSON null
  result.theta_cov = Eigen::MatrixXd::Identity(4, 4) * 0.04;
  result.sigma_ci.resize(2, 2);
  result.sigma_ci << 1.0, 1.5, 1.8, 2.4;

  const std::string path = temp_path("fit.json");
  write_fit_json(path, result, spec, FitConfig{});
  const FitFile ff = read_fit_json(path);
  EXPECT_EQ(ff.factors, spec.factors);
  EXPECT_TRUE(ff.theta == result.params.ou.theta);  // exact via 17 digits
  EXPECT_TRUE(ff.sigma == result.params.ou.sigma);
  ASSERT_TRUE(ff.has_theta_cov);
  EXPECT_TRUE(ff.theta_cov == result.theta_cov);

  const std::string text = slurp(path);
  EXPECT_NE(text.find("\"standard_errors\""), std::string::npos);
  EXPECT_NE(text.find("null"), std::string::npos);       // the invalid SE
  EXPECT_NE(text.find("\"sigma_ci\""), std::string::npos);
  EXPECT_NE(text.find("\"param_tol\""), std::string::npos);
  std::remove(path.c_str());
}

TEST(FitJson, MissingCovarianceLeavesFlagUnset) {
  const ModelSpec spec = [&] {
    ModelSpec s;
    s.outcomes = {"y1"};
    s.factors = {"f1"};
    s.factor_of_outcome = {0};
    s.default_anchors();
    return s;
  }();
  FitResult result;
  result.params.meas.lambda = Eigen::MatrixXd::Constant(1, 1, 1.0);
  result.params.meas.sigma_u = Eigen::VectorXd::Constant(1, 0.5);
  result.params.meas.sigma_eps = Eigen::VectorXd::Constant(1, 0.5);
  result.params.ou.theta = Eigen::MatrixXd::Constant(1, 1, 0.8);
  result.params.ou.sigma = Eigen::VectorXd::Constant(1, std::sqrt(1.6));
  result.reason = ConvergenceReason::max_iters;

  const std::string path = temp_path("fit_nocov.json");
  write_fit_json(path, result, spec, FitConfig{});
  const FitFile ff = read_fit_json(path);
  EXPECT_FALSE(ff.has_theta_cov);
  EXPECT_EQ(ff.theta(0, 0), 0.8);
  std::remove(path.c_str());
}

TEST(TruthJson, EmitsGeneratingAndTargetBlocks) {
  const std::string path = temp_path("truth.json");
  write_truth_json(path, find_truth("setting2"));
  const std::string text = slurp(path);
  EXPECT_NE(text.find("\"data_generating\""), std::string::npos);
  EXPECT_NE(text.find("\"target\""), std::string::npos);
  EXPECT_NE(text.find("\"setting2\""), std::string::npos);
  std::remove(path.c_str());
}

TEST(DecayCsv, RowCountAndBandValidation) {
  const std::vector<double> gaps = {0.0, 0.5};
  const std::vector<Eigen::MatrixXd> curves(2, Eigen::MatrixXd::Identity(2, 2));
  const std::vector<std::string> factors = {"f1", "f2"};

  const std::string path = temp_path("decay.csv");
  write_decay_csv(path, gaps, curves, factors);
  {
    const std::string text = slurp(path);
    EXPECT_EQ(static_cast<int>(std::count(text.begin(), text.end(), '\n')), 1 + 2 * 4);
    EXPECT_EQ(text.rfind("gap,row_factor,col_factor,correlation\n", 0), 0u);
  }

  const std::vector<Eigen::MatrixXd> lo(2, Eigen::MatrixXd::Zero(2, 2));
  const std::vector<Eigen::MatrixXd> hi(2, Eigen::MatrixXd::Ones(2, 2));
  write_decay_csv(path, gaps, curves, factors, &lo, &hi);
  EXPECT_NE(slurp(path).find(",lower,upper"), std::string::npos);

  EXPECT_THROW(write_decay_csv(path, gaps, curves, factors, &lo, nullptr),
               std::invalid_argument);
  const std::vector<Eigen::MatrixXd> short_band(1, Eigen::MatrixXd::Zero(2, 2));
  EXPECT_THROW(write_decay_csv(path, gaps, curves, factors, &short_band, &hi),
               std::invalid_argument);
  EXPECT_THROW(write_decay_csv(path, {0.0}, curves, factors), std::invalid_argument);
  std::remove(path.c_str());
}

TEST(SelectionOutputs, CsvAndJsonMarkWinnersAndFailures) {
  SelectionReport report;
  CandidateReport good;
  good.count = {14, 1};
  good.usable = true;
  good.fit.reason = ConvergenceReason::param_tol;
  good.fit.neg2_loglik = 1000.0;
  good.aic = 1026.0;
  good.bic = 1070.0;
  CandidateReport bad;
  bad.count = {18, 2};
  bad.usable = false;
  bad.fit.reason = ConvergenceReason::failed;
  report.candidates = {good, bad};
  report.aic_winner = 0;
  report.bic_winner = 0;

  const std::string csv = temp_path("selection.csv");
  write_selection_csv(csv, report, 40);
  const std::string text = slurp(csv);
  EXPECT_NE(text.find("1,14,1,param_tol,1000,1026,1070,1,1"), std::string::npos);
  EXPECT_NE(text.find("2,18,0,failed,,,,0,0"), std::string::npos);
  std::remove(csv.c_str());

  const std::string js = temp_path("selection.json");
  write_selection_json(js, report, 40);
  const std::string jtext = slurp(js);
  EXPECT_NE(jtext.find("\"aic_winner_factors\": 1"), std::string::npos);
  EXPECT_NE(jtext.find("\"aic\": null"), std::string::npos);
  std::remove(js.c_str());
}

TEST(StudyOutputs, RecoveryAndSelectionTables) {
  RecoveryTable table;
  table.replicates = 2;
  table.used = 2;
  RecoveryRow with_se;
  with_se.name = "lambda_1";
  with_se.target = 1.0;
  with_se.mean = 1.1;
  with_se.bias = 0.1;
  with_se.emp_sd = 0.2;
  with_se.mean_se = 0.25;
  with_se.se_ratio = 1.25;
  with_se.has_se = true;
  RecoveryRow without_se = with_se;
  without_se.name = "sigma_1";
  without_se.has_se = false;
  table.rows = {with_se, without_se};

  const std::string rec = temp_path("recovery.csv");
  write_recovery_csv(rec, table);
  const std::string rtext = slurp(rec);
  EXPECT_NE(rtext.find("lambda_1,1,1.1000000000000001,0.1"), std::string::npos);
  EXPECT_NE(rtext.find("sigma_1,"), std::string::npos);
  EXPECT_NE(rtext.find(",,,\n"), std::string::npos);  // empty SE cells
  std::remove(rec.c_str());

  SelectionStudy study;
  study.factor_counts = {1, 2, 3};
  study.aic_wins = {0, 4, 1};
  study.bic_wins = {1, 4, 0};
  study.replicates = 5;
  study.usable = 5;
  const std::string sel = temp_path("study.csv");
  write_selection_study_csv(sel, study);
  const std::string stext = slurp(sel);
  EXPECT_NE(stext.find("2,4,4,0.80000000000000004,0.80000000000000004"),
            std::string::npos);
  std::remove(sel.c_str());

  SelectionStudy none = study;
  none.usable = 0;
  none.aic_wins = {0, 0, 0};
  none.bic_wins = {0, 0, 0};
  write_selection_study_csv(sel, none);
  EXPECT_NE(slurp(sel).find("2,0,0,,\n"), std::string::npos);
  std::remove(sel.c_str());
}

}  // namespace

#include "ouf/sim.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "ouf/likelihood.hpp"

namespace {

using namespace ouf;

TEST(TruthCatalog, NamesAndSpotValues) {
  const std::vector<Truth>& catalog = truth_catalog();
  ASSERT_EQ(catalog.size(), 8u);

  const Truth& s2 = find_truth("setting2");
  ASSERT_EQ(s2.spec.num_factors(), 2);
  EXPECT_EQ(s2.params.ou.theta(0, 0), 1.0);
  EXPECT_EQ(s2.params.ou.theta(0, 1), 0.4);
  EXPECT_EQ(s2.params.ou.theta(1, 0), 1.8);
  EXPECT_EQ(s2.params.ou.theta(1, 1), 3.0);
  EXPECT_EQ(s2.params.ou.sigma[0], 1.25);
  EXPECT_EQ(s2.params.ou.sigma[1], 2.00);

  // Shared four-outcome measurement setup.
  EXPECT_EQ(s2.params.meas.lambda(0, 0), 1.2);
  EXPECT_EQ(s2.params.meas.lambda(1, 0), 1.8);
  EXPECT_EQ(s2.params.meas.lambda(2, 1), -0.4);
  EXPECT_EQ(s2.params.meas.lambda(3, 1), 2.0);
  EXPECT_EQ(s2.params.meas.lambda(1, 1), 0.0);
  EXPECT_EQ(s2.params.meas.sigma_u[0], 1.1);
  EXPECT_EQ(s2.params.meas.sigma_u[3], 0.9);
  EXPECT_EQ(s2.params.meas.sigma_eps[0], 0.6);
  EXPECT_EQ(s2.params.meas.sigma_eps[3], 0.7);

  const Truth& s1 = find_truth("setting1");
  EXPECT_EQ(s1.params.ou.theta(1, 0), 4.0);
  const Truth& s3 = find_truth("setting3");
  EXPECT_EQ(s3.params.ou.sigma[1], 3.0);

  const Truth& one = find_truth("one_factor");
  ASSERT_EQ(one.spec.num_factors(), 1);
  EXPECT_EQ(one.params.ou.theta(0, 0), 0.8);
  EXPECT_EQ(one.params.ou.sigma[0], 1.0);

  const Truth& three = find_truth("three_factor_high");
  ASSERT_EQ(three.spec.num_factors(), 3);
  EXPECT_EQ(three.params.ou.theta(1, 1), 3.0);
  EXPECT_EQ(three.params.ou.sigma[2], 0.4);
  // p = 3 outcome map: y1, y2 on f1, y3 on f2, y4 on f3.
  EXPECT_EQ(three.spec.factor_of_outcome, (std::vector<int>{0, 0, 1, 2}));

  for (const Truth& truth : catalog) {
    truth.spec.validate();
    EXPECT_TRUE(is_valid_drift(truth.params.ou.theta)) << truth.name;
  }
  EXPECT_THROW(find_truth("setting9"), std::invalid_argument);
}

TEST(FactorCountCandidates, LadderOverSharedOutcomes) {
  const std::vector<ModelSpec> candidates = factor_count_candidates();
  ASSERT_EQ(candidates.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(candidates[i].num_factors(), static_cast<Eigen::Index>(i + 1));
    EXPECT_EQ(candidates[i].num_outcomes(), 4);
    candidates[i].validate();
  }
  EXPECT_EQ(candidates[1].factor_of_outcome, (std::vector<int>{0, 0, 1, 1}));
}

TEST(SimDesign, ValidateRejectsBadRanges) {
  SimDesign design;
  design.min_occasions = 5;
  design.max_occasions = 4;
  EXPECT_THROW(design.validate(), std::invalid_argument);
  design = SimDesign{};
  design.min_gap = 0.0;
  EXPECT_THROW(design.validate(), std::invalid_argument);
  design = SimDesign{};
  design.num_subjects = 0;
  EXPECT_THROW(design.validate(), std::invalid_argument);
  design = SimDesign{};
  design.max_gap = design.min_gap / 2.0;
  EXPECT_THROW(design.validate(), std::invalid_argument);
}

TEST(GenerateDataset, RespectsTheDesign) {
  SimDesign design;
  design.num_subjects = 30;
  design.min_occasions = 3;
  design.max_occasions = 6;
  design.min_gap = 0.2;
  design.max_gap = 1.5;
  design.seed = 5;
  const Dataset data = generate_dataset(find_truth("setting1"), design);
  ASSERT_EQ(data.size(), 30u);
  bool saw_min = false, saw_max = false;
  for (const SubjectPanel& panel : data) {
    panel.validate();
    const Eigen::Index n = panel.num_occasions();
    EXPECT_GE(n, 3);
    EXPECT_LE(n, 6);
    saw_min = saw_min || n == 3;
    saw_max = saw_max || n == 6;
    EXPECT_EQ(panel.grid.times.front(), 0.0);
    EXPECT_EQ(panel.y.cols(), 4);
    for (Eigen::Index j = 1; j < n; ++j) {
      const double gap = panel.grid.times[static_cast<std::size_t>(j)] -
                         panel.grid.times[static_cast<std::size_t>(j - 1)];
      EXPECT_GE(gap, 0.2);
      EXPECT_LE(gap, 1.5);
    }
  }
  EXPECT_TRUE(saw_min);  // the integer range is actually covered
  EXPECT_TRUE(saw_max);
  EXPECT_EQ(data[0].id, "s0001");
  EXPECT_EQ(data[29].id, "s0030");
}

TEST(GenerateDataset, DeterministicAndOrderStable) {
  SimDesign design;
  design.num_subjects = 10;
  design.seed = 123;
  const Truth& truth = find_truth("setting3");
  const Dataset a = generate_dataset(truth, design);
  const Dataset b = generate_dataset(truth, design);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].y == b[i].y);  // bitwise
    EXPECT_EQ(a[i].grid.times, b[i].grid.times);
  }

  // Subject streams derive from (seed, index): a shorter run is a prefix.
  design.num_subjects = 4;
  const Dataset head = generate_dataset(truth, design);
  for (std::size_t i = 0; i < head.size(); ++i) EXPECT_TRUE(head[i].y == a[i].y);

  design.num_subjects = 10;
  design.seed = 124;
  const Dataset other = generate_dataset(truth, design);
  bool any_difference = false;
  for (std::size_t i = 0; i < other.size() && !any_difference; ++i)
    any_difference = other[i].grid.times != a[i].grid.times || other[i].y != a[i].y;
  EXPECT_TRUE(any_difference);
}

TEST(GenerateDataset, DegenerateSingleSubjectSingleOccasion) {
  SimDesign design;
  design.num_subjects = 1;
  design.min_occasions = 1;
  design.max_occasions = 1;
  design.seed = 2;
  const Dataset data = generate_dataset(find_truth("one_factor"), design);
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].num_occasions(), 1);
  EXPECT_EQ(data[0].grid.times[0], 0.0);
}

TEST(GenerateDataset, CrossSectionalMomentsMatchTheory) {
  // Single-occasion subjects are iid N(0, Lambda V Lambda^T + Sigma_u +
  // Sigma_eps); the pooled second moment must match within Monte Carlo noise.
  const Truth& truth = find_truth("setting2");
  SimDesign design;
  design.num_subjects = 2000;
  design.min_occasions = 1;
  design.max_occasions = 1;
  design.seed = 31;
  const Dataset data = generate_dataset(truth, design);

  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(4, 4);
  for (const SubjectPanel& panel : data)
    pooled += panel.y.row(0).transpose() * panel.y.row(0);
  pooled /= static_cast<double>(data.size());

  const Eigen::MatrixXd v = stationary_variance(truth.params.ou);
  Eigen::MatrixXd expected =
      truth.params.meas.lambda * v * truth.params.meas.lambda.transpose();
  expected += Eigen::MatrixXd(truth.params.meas.sigma_u.asDiagonal());
  expected += Eigen::MatrixXd(truth.params.meas.sigma_eps.asDiagonal());

  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double mc_sd = std::sqrt(
          (expected(i, i) * expected(j, j) + expected(i, j) * expected(i, j)) / 2000.0);
      EXPECT_NEAR(pooled(i, j), expected(i, j), 4.0 * mc_sd) << i << "," << j;
    }
}

TEST(TargetParams, UnitVarianceFoldPreservesTheLikelihood) {
  const Truth& truth = find_truth("setting2");
  const ModelParams target = target_params(truth.params);
  target.validate(truth.spec);
  EXPECT_LT((stationary_variance(target.ou).diagonal().array() - 1.0).abs().maxCoeff(),
            1e-12);

  SimDesign design;
  design.num_subjects = 6;
  design.min_occasions = 3;
  design.max_occasions = 5;
  design.seed = 77;
  const Dataset data = generate_dataset(truth, design);
  const double before = neg2_loglik_dense(truth.params.meas, truth.params.ou, data);
  const double after = neg2_loglik_dense(target.meas, target.ou, data);
  EXPECT_NEAR(after, before, 1e-10 * std::abs(before));

  // Idempotent once on the constrained scale.
  const ModelParams twice = target_params(target);
  EXPECT_LT((twice.meas.lambda - target.meas.lambda).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((twice.ou.theta - target.ou.theta).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((twice.ou.sigma - target.ou.sigma).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TargetParams, UnivariateClosedForm) {
  // theta = 0.8, sigma = 1: V = 0.625, so loadings shrink by sqrt(0.625) and
  // sigma becomes sqrt(1.6).
  const Truth& truth = find_truth("one_factor");
  const ModelParams target = target_params(truth.params);
  EXPECT_NEAR(target.meas.lambda(0, 0), 1.2 * std::sqrt(0.625), 1e-14);
  EXPECT_NEAR(target.meas.lambda(3, 0), 1.5811388300841898, 1e-14);  // 2 sqrt(0.625)
  EXPECT_NEAR(target.ou.theta(0, 0), 0.8, 1e-14);
  EXPECT_NEAR(target.ou.sigma[0], std::sqrt(1.6), 1e-14);
  EXPECT_EQ(target.meas.sigma_u, truth.params.meas.sigma_u);
  EXPECT_EQ(target.meas.sigma_eps, truth.params.meas.sigma_eps);
}

TEST(ReplicateRecovery, SmokeRunTabulatesConsistently) {
  const Truth& truth = find_truth("one_factor");
  SimDesign design;
  design.num_subjects = 8;
  design.min_occasions = 4;
  design.max_occasions = 6;
  design.seed = 51;
  FitConfig cfg;
  cfg.max_block_iters = 6;
  const RecoveryTable table = replicate_recovery(truth, design, 2, cfg);

  EXPECT_EQ(table.replicates, 2);
  EXPECT_EQ(table.num_converged + table.num_max_iters + table.num_failed, 2);
  EXPECT_EQ(table.used, table.num_converged + table.num_max_iters);
  ASSERT_EQ(table.rows.size(), param_names(truth.spec).size());

  const ModelParams target = target_params(truth.params);
  const Eigen::VectorXd target_vec = param_vector(target, truth.spec);
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const RecoveryRow& row = table.rows[i];
    EXPECT_EQ(row.name, param_names(truth.spec)[i]);
    EXPECT_NEAR(row.target, target_vec[static_cast<Eigen::Index>(i)], 1e-14);
    if (table.used > 0) EXPECT_NEAR(row.bias, row.mean - row.target, 1e-12);
  }
  // sigma has bootstrap intervals instead of Hessian SEs.
  EXPECT_FALSE(table.rows.back().has_se);
  EXPECT_TRUE(table.rows.front().has_se);
}

TEST(ReplicateSelection, SmokeRunCountsWins) {
  const Truth& truth = find_truth("one_factor");
  SimDesign design;
  design.num_subjects = 8;
  design.min_occasions = 4;
  design.max_occasions = 6;
  design.seed = 53;
  FitConfig cfg;
  cfg.max_block_iters = 5;
  const SelectionStudy study = replicate_selection(truth, design, 1, cfg);

  EXPECT_EQ(study.replicates, 1);
  EXPECT_EQ(study.factor_counts, (std::vector<int>{1, 2, 3}));
  EXPECT_LE(study.usable, 1);
  int aic_total = 0, bic_total = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    aic_total += study.aic_wins[i];
    bic_total += study.bic_wins[i];
  }
  EXPECT_EQ(aic_total, study.usable);
  EXPECT_EQ(bic_total, study.usable);
}

}  // namespace

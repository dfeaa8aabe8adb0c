#include "ouf/model.hpp"

#include <gtest/gtest.h>

namespace {

using namespace ouf;

// Block layout: y1, y2 on f1 and y3, y4 on f2.
ModelSpec four_two() {
  ModelSpec spec;
  spec.outcomes = {"y1", "y2", "y3", "y4"};
  spec.factors = {"f1", "f2"};
  spec.factor_of_outcome = {0, 0, 1, 1};
  spec.default_anchors();
  return spec;
}

TEST(ModelSpec, DefaultAnchorsTakeFirstOutcomePerFactor) {
  ModelSpec spec;
  spec.outcomes = {"a", "b", "c", "d"};
  spec.factors = {"f1", "f2"};
  spec.factor_of_outcome = {1, 0, 1, 0};
  spec.default_anchors();
  ASSERT_EQ(spec.anchor_outcome.size(), 2u);
  EXPECT_EQ(spec.anchor_outcome[0], 1);  // first outcome on f1 is "b"
  EXPECT_EQ(spec.anchor_outcome[1], 0);
  spec.validate();
}

TEST(ModelSpec, ValidateCatchesBrokenSpecs) {
  ModelSpec spec = four_two();
  spec.factor_of_outcome[2] = 5;
  EXPECT_THROW(spec.validate(), std::invalid_argument);

  spec = four_two();
  spec.factor_of_outcome = {0, 0, 0, 0};  // factor 1 has no outcome
  EXPECT_THROW(spec.validate(), std::invalid_argument);

  spec = four_two();
  spec.anchor_outcome[0] = 2;  // outcome 2 loads on factor 1, not factor 0
  EXPECT_THROW(spec.validate(), std::invalid_argument);

  spec = four_two();
  spec.outcomes[1] = spec.outcomes[0];  // duplicate name
  EXPECT_THROW(spec.validate(), std::invalid_argument);

  spec = four_two();
  spec.factor_of_outcome.pop_back();
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(MeasurementParams, ValidateEnforcesMaskAndSigns) {
  const ModelSpec spec = four_two();
  MeasurementParams meas;
  meas.lambda = Eigen::MatrixXd::Zero(4, 2);
  meas.lambda(0, 0) = 1.2;
  meas.lambda(1, 0) = 1.8;
  meas.lambda(2, 1) = -0.4;
  meas.lambda(3, 1) = 2.0;
  meas.sigma_u = Eigen::VectorXd::Constant(4, 1.0);
  meas.sigma_eps = Eigen::VectorXd::Constant(4, 0.5);
  meas.validate(spec);

  MeasurementParams bad = meas;
  bad.lambda(0, 1) = 0.3;  // outside the mask
  EXPECT_THROW(bad.validate(spec), std::invalid_argument);

  bad = meas;
  bad.sigma_eps[2] = 0.0;  // error variances must be positive
  EXPECT_THROW(bad.validate(spec), std::invalid_argument);

  bad = meas;
  bad.sigma_u[1] = -0.1;  // intercept variances only nonnegative
  EXPECT_THROW(bad.validate(spec), std::invalid_argument);
  bad.sigma_u[1] = 0.0;
  bad.validate(spec);  // zero is allowed

  bad = meas;
  bad.lambda.resize(3, 2);
  EXPECT_THROW(bad.validate(spec), std::invalid_argument);
}

TEST(ModelParams, ValidateRequiresUnitStationaryVariance) {
  const ModelSpec spec = four_two();
  ModelParams params;
  params.meas.lambda = Eigen::MatrixXd::Zero(4, 2);
  params.meas.lambda(0, 0) = 1.2;
  params.meas.lambda(1, 0) = 1.8;
  params.meas.lambda(2, 1) = -0.4;
  params.meas.lambda(3, 1) = 2.0;
  params.meas.sigma_u = Eigen::VectorXd::Constant(4, 1.0);
  params.meas.sigma_eps = Eigen::VectorXd::Constant(4, 0.5);

  params.ou.theta.resize(2, 2);
  params.ou.theta << 1.0, 0.4, 1.8, 3.0;
  params.ou.sigma = sigma_from_theta(params.ou.theta);
  params.validate(spec);

  params.ou.sigma << 1.25, 2.00;  // stationary variances now off unit
  EXPECT_THROW(params.validate(spec), std::invalid_argument);
}

TEST(SubjectPanel, StackedIsOccasionMajor) {
  SubjectPanel panel;
  panel.id = "s1";
  panel.grid.times = {0.0, 1.0};
  panel.y.resize(2, 3);
  panel.y << 1, 2, 3,
             4, 5, 6;
  panel.validate();
  const Eigen::VectorXd v = panel.stacked();
  ASSERT_EQ(v.size(), 6);
  for (int i = 0; i < 6; ++i) EXPECT_EQ(v[i], i + 1);
}

TEST(SubjectPanel, ValidateChecksShape) {
  SubjectPanel panel;
  panel.id = "s1";
  panel.grid.times = {0.0, 1.0, 2.0};
  panel.y = Eigen::MatrixXd::Zero(2, 3);  // rows != occasions
  EXPECT_THROW(panel.validate(), std::invalid_argument);

  panel.grid.times = {};
  panel.y.resize(0, 3);
  EXPECT_THROW(panel.validate(), std::invalid_argument);
}

}  // namespace

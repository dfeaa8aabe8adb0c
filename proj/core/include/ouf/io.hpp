#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ouf/estimation.hpp"
#include "ouf/model.hpp"
#include "ouf/model_selection.hpp"
#include "ouf/sim.hpp"

namespace ouf {

// Panel CSV: header "subject_id,time,<outcomes...>"; one row per occasion,
// rows contiguous per subject and strictly increasing in time within subject.
// Numbers use 17 significant digits so write -> read round-trips exactly.
struct PanelFile {
  std::vector<std::string> outcomes;
  Dataset data;
};
void write_panel_csv(const std::string& path, const Dataset& data,
                     const std::vector<std::string>& outcomes);
PanelFile read_panel_csv(const std::string& path);  // std::runtime_error with line numbers

// Model-structure JSON: outcome and factor name lists, the outcome -> factor
// loading map, optional sign anchors (default: first outcome per factor),
// optional fit-config overrides, optional data-generating truth parameters.
struct SpecFile {
  ModelSpec spec;
  FitConfig fit;  // defaults overlaid with the file's "fit" block
  bool has_truth = false;
  ModelParams truth;
};
SpecFile read_spec_json(const std::string& path, const FitConfig& defaults = {});

// Full estimation output: estimates, SEs (null where invalid), bootstrap
// intervals, theta sampling covariance, the -2 log L trace and config echo.
void write_fit_json(const std::string& path, const FitResult& result,
                    const ModelSpec& spec, const FitConfig& cfg);

// The subset of a fit JSON the decay command needs.
struct FitFile {
  std::vector<std::string> factors;
  Eigen::MatrixXd theta;
  Eigen::VectorXd sigma;
  bool has_theta_cov = false;
  Eigen::MatrixXd theta_cov;
};
FitFile read_fit_json(const std::string& path);

// Truth JSON emitted next to simulated panels: the data-generating parameters
// and their identifiability-constrained (target) counterparts.
void write_truth_json(const std::string& path, const Truth& truth);

// Correlation-decay CSV: gap,row_factor,col_factor,correlation[,lower,upper].
// curves[g] is the p x p correlation matrix at gaps[g]; the optional bands are
// indexed the same way.
void write_decay_csv(const std::string& path, const std::vector<double>& gaps,
                     const std::vector<Eigen::MatrixXd>& curves,
                     const std::vector<std::string>& factors,
                     const std::vector<Eigen::MatrixXd>* lower = nullptr,
                     const std::vector<Eigen::MatrixXd>* upper = nullptr);

void write_selection_csv(const std::string& path, const SelectionReport& report,
                         Eigen::Index num_subjects);
void write_selection_json(const std::string& path, const SelectionReport& report,
                          Eigen::Index num_subjects);

void write_recovery_csv(const std::string& path, const RecoveryTable& table);
void write_selection_study_csv(const std::string& path, const SelectionStudy& study);

}  // namespace ouf

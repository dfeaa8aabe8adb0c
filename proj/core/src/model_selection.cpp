#include "ouf/model_selection.hpp"

#include <cmath>
#include <stdexcept>

namespace ouf {

ParamCount count_free_params(const ModelSpec& spec) {
  spec.validate();
  const int k = static_cast<int>(spec.num_outcomes());
  const int p = static_cast<int>(spec.num_factors());
  return {3 * k + p * p + p, p};
}

double aic(double neg2_loglik, int q, int p) {
  if (p < 1 || q <= p) throw std::invalid_argument("aic: need q > p >= 1");
  return 2.0 * static_cast<double>(q - p) + neg2_loglik;
}

double bic(double neg2_loglik, int q, int p, Eigen::Index num_subjects) {
  if (p < 1 || q <= p) throw std::invalid_argument("bic: need q > p >= 1");
  if (num_subjects < 1) throw std::invalid_argument("bic: need at least one subject");
  return 2.0 * std::log(static_cast<double>(num_subjects)) * static_cast<double>(q - p) +
         neg2_loglik;
}

SelectionReport select(const Dataset& data, const std::vector<ModelSpec>& candidates,
                       const FitConfig& cfg) {
  if (candidates.empty()) throw std::invalid_argument("select: no candidates");
  SelectionReport report;
  report.candidates.reserve(candidates.size());
  for (const ModelSpec& spec : candidates) {
    CandidateReport cand;
    cand.spec = spec;
    cand.count = count_free_params(spec);
    cand.fit = fit(data, spec, cfg);
    cand.usable = cand.fit.reason != ConvergenceReason::failed;
    if (cand.usable) {
      cand.aic = aic(cand.fit.neg2_loglik, cand.count.q, cand.count.p);
      cand.bic = bic(cand.fit.neg2_loglik, cand.count.q, cand.count.p,
                     static_cast<Eigen::Index>(data.size()));
    }
    report.candidates.push_back(std::move(cand));
  }

  auto better = [&](int lhs, int rhs, bool use_bic) {
    const CandidateReport& a = report.candidates[static_cast<std::size_t>(lhs)];
    const CandidateReport& b = report.candidates[static_cast<std::size_t>(rhs)];
    const double va = use_bic ? a.bic : a.aic;
    const double vb = use_bic ? b.bic : b.aic;
    if (va != vb) return va < vb;
    return a.count.p < b.count.p;  // parsimony on exact ties
  };
  for (int i = 0; i < static_cast<int>(report.candidates.size()); ++i) {
    if (!report.candidates[static_cast<std::size_t>(i)].usable) continue;
    if (report.aic_winner < 0 || better(i, report.aic_winner, false)) report.aic_winner = i;
    if (report.bic_winner < 0 || better(i, report.bic_winner, true)) report.bic_winner = i;
  }
  return report;
}

}  // namespace ouf

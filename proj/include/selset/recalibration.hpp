#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "selset/selective_model.hpp"
#include "selset/trainer.hpp"

namespace selset {

// One validation observation: acceptance probability and whether the
// prediction set contained the outcome.
struct RecalibRecord {
  double psi = 0.0;  // in [0,1]
  double hit = 0.0;  // 0 or 1
};

struct ConfidenceInterval {
  double level = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct FoldSummary {
  double gamma = 0.0;  // mean of psi*hit over the fold
  double q = 0.0;      // mean of psi over the fold
  int n = 0;
};

// Coverage point estimate with its delta-method asymptotic scale. theta =
// gamma/q; sigma scales the CI as theta +- z * sigma / sqrt(n_v).
struct CoverageEstimate {
  double theta = 0.0;
  double sigma = 0.0;
  int n_v = 0;  // per-fold validation size (minimum across folds)
  int K = 1;
  double gamma = 0.0;
  double q = 0.0;
  bool degenerate = false;  // sigma == 0: point interval reported
  std::vector<FoldSummary> folds;

  // Clamped to [0,1] for reporting.
  ConfidenceInterval ci(double level) const;
};

// Single-model estimate: theta = mean(psi*hit)/mean(psi); the variance comes
// from the delta method applied to the 2x2 sample covariance (denominator
// n-1) of the (psi*hit, psi) pairs.
CoverageEstimate recalibrate_single(const std::vector<RecalibRecord>& records);

// Cross-fitted aggregate: per-fold means are averaged, the covariance is
// block-diagonal across folds, and the delta-method gradient carries a 1/K
// factor per fold coordinate (the aggregate ratio depends on each fold mean
// through the average), which is what makes the aggregate CI narrower than
// the per-fold ones.
CoverageEstimate recalibrate_aggregate(const std::vector<std::vector<RecalibRecord>>& per_fold);

// psi_i = accept_prob(model, x_i), hit_i = 1{y_i in prediction_set(model,
// x_i, alpha)}. X holds raw inputs, one observation per row.
std::vector<RecalibRecord> build_records(const SelectiveModel& model, const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& y, double alpha);

// Fold k of the plan is scored against models[k].
std::vector<std::vector<RecalibRecord>> build_fold_records(
    const std::vector<SelectiveModel>& models, const Dataset& data, const FoldPlan& plan,
    double alpha);

// Restriction of the estimates to a flagged subset of the records.
CoverageEstimate local_coverage(const std::vector<RecalibRecord>& records,
                                const std::vector<char>& flags);
CoverageEstimate local_coverage(const std::vector<std::vector<RecalibRecord>>& per_fold,
                                const std::vector<std::vector<char>>& flags);

// Uniform-mixture semantics at a single point: the aggregate accepts with
// the mean psi_k and, conditional on acceptance, contains y with the
// psi-weighted fraction of member sets containing y.
struct AggregateMembership {
  double accept = 0.0;
  double member = 0.0;
};

AggregateMembership aggregate_membership(const std::vector<SelectiveModel>& models,
                                         const Eigen::VectorXd& x_raw, double y, double alpha);

// Report serialization shared by the CLI and batch studies.
struct CoverageReportEntry {
  std::string scope;   // "single", "agg", or "fold<k>"
  std::string region;  // empty for the global estimate
  CoverageEstimate estimate;
  std::vector<double> levels;
};

nlohmann::json report_to_json(const std::vector<CoverageReportEntry>& entries);
std::string report_to_csv(const std::vector<CoverageReportEntry>& entries);

}  // namespace selset

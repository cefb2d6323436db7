#include "selset/recalibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/io.hpp"
#include "selset/stats.hpp"

namespace selset {

namespace {

void check_record(const RecalibRecord& r) {
  if (r.psi < 0.0 || r.psi > 1.0 || !std::isfinite(r.psi)) {
    throw std::invalid_argument("recalibration: psi outside [0,1]");
  }
  if (r.hit != 0.0 && r.hit != 1.0) {
    throw std::invalid_argument("recalibration: hit must be 0 or 1");
  }
}

struct FoldMoments {
  double gamma = 0.0;
  double q = 0.0;
  // Sample covariance (denominator n-1) of (w, psi) with w = psi*hit.
  double cov_ww = 0.0;
  double cov_wp = 0.0;
  double cov_pp = 0.0;
  int n = 0;
};

FoldMoments fold_moments(const std::vector<RecalibRecord>& records) {
  const int n = static_cast<int>(records.size());
  if (n < 2) throw DegenerateError("recalibration: need at least 2 validation records");
  FoldMoments m;
  m.n = n;
  for (const auto& r : records) {
    check_record(r);
    m.gamma += r.psi * r.hit;
    m.q += r.psi;
  }
  m.gamma /= n;
  m.q /= n;
  if (m.q <= 0.0) {
    throw DegenerateError("recalibration: no accepted observations (all psi are zero)");
  }
  for (const auto& r : records) {
    const double dw = r.psi * r.hit - m.gamma;
    const double dp = r.psi - m.q;
    m.cov_ww += dw * dw;
    m.cov_wp += dw * dp;
    m.cov_pp += dp * dp;
  }
  m.cov_ww /= (n - 1);
  m.cov_wp /= (n - 1);
  m.cov_pp /= (n - 1);
  return m;
}

}  // namespace

ConfidenceInterval CoverageEstimate::ci(double level) const {
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("ci: level outside (0,1)");
  }
  const double z = normal_quantile(0.5 * (1.0 + level));
  const double half = z * sigma / std::sqrt(static_cast<double>(n_v));
  return ConfidenceInterval{level, std::clamp(theta - half, 0.0, 1.0),
                            std::clamp(theta + half, 0.0, 1.0)};
}

CoverageEstimate recalibrate_single(const std::vector<RecalibRecord>& records) {
  const FoldMoments m = fold_moments(records);
  CoverageEstimate est;
  est.K = 1;
  est.n_v = m.n;
  est.gamma = m.gamma;
  est.q = m.q;
  est.theta = m.gamma / m.q;
  const double a0 = 1.0 / m.q;
  const double a1 = -m.gamma / (m.q * m.q);
  const double var = a0 * a0 * m.cov_ww + 2.0 * a0 * a1 * m.cov_wp + a1 * a1 * m.cov_pp;
  est.sigma = std::sqrt(std::max(var, 0.0));
  est.degenerate = est.sigma == 0.0;
  est.folds.push_back(FoldSummary{m.gamma, m.q, m.n});
  return est;
}

CoverageEstimate recalibrate_aggregate(const std::vector<std::vector<RecalibRecord>>& per_fold) {
  const int K = static_cast<int>(per_fold.size());
  if (K < 2) throw std::invalid_argument("recalibrate_aggregate: need K >= 2 folds");
  std::vector<FoldMoments> moments;
  moments.reserve(K);
  for (const auto& records : per_fold) moments.push_back(fold_moments(records));

  CoverageEstimate est;
  est.K = K;
  est.n_v = moments.front().n;
  for (const auto& m : moments) {
    est.gamma += m.gamma;
    est.q += m.q;
    est.n_v = std::min(est.n_v, m.n);  // conservative scaling for uneven folds
    est.folds.push_back(FoldSummary{m.gamma, m.q, m.n});
  }
  est.gamma /= K;
  est.q /= K;
  est.theta = est.gamma / est.q;

  // Delta method through theta = (sum_k gamma_k / K) / (sum_k q_k / K): the
  // gradient in each fold's (w, psi) coordinate pair is (1/K)*(1/q,
  // -gamma/q^2), and the covariance is block-diagonal across folds because
  // validation folds are disjoint.
  const double a0 = 1.0 / (K * est.q);
  const double a1 = -est.gamma / (K * est.q * est.q);
  double var = 0.0;
  for (const auto& m : moments) {
    var += a0 * a0 * m.cov_ww + 2.0 * a0 * a1 * m.cov_wp + a1 * a1 * m.cov_pp;
  }
  est.sigma = std::sqrt(std::max(var, 0.0));
  est.degenerate = est.sigma == 0.0;
  return est;
}

std::vector<RecalibRecord> build_records(const SelectiveModel& model, const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& y, double alpha) {
  if (X.rows() != y.size()) throw std::invalid_argument("build_records: row count mismatch");
  const Eigen::MatrixXd inputs = to_model_columns(model, X);
  const Eigen::VectorXd psi = accept_prob_batch(model, inputs);
  std::vector<RecalibRecord> records(X.rows());
  for (int i = 0; i < X.rows(); ++i) {
    const PredictionSet set = prediction_set(model, inputs.col(i), alpha);
    records[i] = RecalibRecord{psi[i], contains(set, y[i]) ? 1.0 : 0.0};
  }
  return records;
}

std::vector<std::vector<RecalibRecord>> build_fold_records(
    const std::vector<SelectiveModel>& models, const Dataset& data, const FoldPlan& plan,
    double alpha) {
  if (static_cast<int>(models.size()) != plan.K) {
    throw std::invalid_argument("build_fold_records: model count does not match fold plan");
  }
  if (static_cast<int>(plan.assignment.size()) != data.n()) {
    throw std::invalid_argument("build_fold_records: fold plan does not match dataset");
  }
  const auto folds = plan.fold_indices();
  std::vector<std::vector<RecalibRecord>> per_fold(plan.K);
  for (int k = 0; k < plan.K; ++k) {
    Eigen::MatrixXd X(folds[k].size(), data.dim());
    Eigen::VectorXd y(folds[k].size());
    for (std::size_t j = 0; j < folds[k].size(); ++j) {
      X.row(static_cast<int>(j)) = data.X.row(folds[k][j]);
      y[static_cast<int>(j)] = data.y[folds[k][j]];
    }
    per_fold[k] = build_records(models[k], X, y, alpha);
  }
  return per_fold;
}

CoverageEstimate local_coverage(const std::vector<RecalibRecord>& records,
                                const std::vector<char>& flags) {
  if (records.size() != flags.size()) {
    throw std::invalid_argument("local_coverage: flag count mismatch");
  }
  std::vector<RecalibRecord> kept;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (flags[i]) kept.push_back(records[i]);
  }
  if (kept.size() < 2) throw DegenerateError("local_coverage: fewer than 2 records in region");
  return recalibrate_single(kept);
}

CoverageEstimate local_coverage(const std::vector<std::vector<RecalibRecord>>& per_fold,
                                const std::vector<std::vector<char>>& flags) {
  if (per_fold.size() != flags.size()) {
    throw std::invalid_argument("local_coverage: fold count mismatch");
  }
  std::vector<std::vector<RecalibRecord>> kept(per_fold.size());
  for (std::size_t k = 0; k < per_fold.size(); ++k) {
    if (per_fold[k].size() != flags[k].size()) {
      throw std::invalid_argument("local_coverage: flag count mismatch");
    }
    for (std::size_t i = 0; i < per_fold[k].size(); ++i) {
      if (flags[k][i]) kept[k].push_back(per_fold[k][i]);
    }
  }
  return recalibrate_aggregate(kept);
}

AggregateMembership aggregate_membership(const std::vector<SelectiveModel>& models,
                                         const Eigen::VectorXd& x_raw, double y, double alpha) {
  if (models.empty()) throw std::invalid_argument("aggregate_membership: no models");
  double sum_psi = 0.0;
  double sum_hit = 0.0;
  for (const auto& model : models) {
    const Eigen::VectorXd x = to_model_space(model, x_raw);
    const double psi = accept_prob(model, x);
    sum_psi += psi;
    if (contains(prediction_set(model, x, alpha), y)) sum_hit += psi;
  }
  AggregateMembership out;
  out.accept = sum_psi / static_cast<double>(models.size());
  if (sum_psi <= 0.0) {
    throw DegenerateError("aggregate_membership: all models reject this input");
  }
  out.member = sum_hit / sum_psi;
  return out;
}

namespace {

nlohmann::json estimate_to_json(const CoverageEstimate& est, const std::vector<double>& levels) {
  nlohmann::json cis = nlohmann::json::array();
  for (double level : levels) {
    const ConfidenceInterval ci = est.ci(level);
    cis.push_back({{"level", ci.level}, {"lower", ci.lower}, {"upper", ci.upper}});
  }
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : est.folds) {
    folds.push_back({{"gamma", f.gamma}, {"q", f.q}, {"n", f.n}});
  }
  return nlohmann::json{{"theta", est.theta},   {"sigma", est.sigma},
                        {"n_v", est.n_v},       {"K", est.K},
                        {"gamma", est.gamma},   {"q", est.q},
                        {"degenerate", est.degenerate}, {"ci", cis},
                        {"folds", folds}};
}

}  // namespace

nlohmann::json report_to_json(const std::vector<CoverageReportEntry>& entries) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& entry : entries) {
    nlohmann::json doc = estimate_to_json(entry.estimate, entry.levels);
    doc["scope"] = entry.scope;
    doc["region"] = entry.region.empty() ? nlohmann::json(nullptr) : nlohmann::json(entry.region);
    list.push_back(std::move(doc));
  }
  return nlohmann::json{{"version", 1}, {"estimates", list}};
}

std::string report_to_csv(const std::vector<CoverageReportEntry>& entries) {
  std::string out = csv_row({"scope", "region", "K", "n_v", "theta", "sigma", "gamma", "q",
                             "degenerate", "ci_level", "ci_lower", "ci_upper"});
  for (const auto& entry : entries) {
    const auto& est = entry.estimate;
    for (double level : entry.levels) {
      const ConfidenceInterval ci = est.ci(level);
      out += csv_row({entry.scope, entry.region, std::to_string(est.K), std::to_string(est.n_v),
                      format_double(est.theta), format_double(est.sigma),
                      format_double(est.gamma), format_double(est.q),
                      est.degenerate ? "1" : "0", format_double(level), format_double(ci.lower),
                      format_double(ci.upper)});
    }
  }
  return out;
}

}  // namespace selset

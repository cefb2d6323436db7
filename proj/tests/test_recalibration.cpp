#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/recalibration.hpp"
#include "selset/rng.hpp"
#include "selset/stats.hpp"

using namespace selset;

namespace {

// Symbol-by-symbol reference computation with plain loops and explicitly
// materialized matrices; shares no code with the library implementation.
struct BruteResult {
  double theta = 0.0;
  double sigma = 0.0;
};

BruteResult brute_single(const std::vector<std::pair<double, double>>& psi_hit) {
  const int n = static_cast<int>(psi_hit.size());
  std::vector<double> w(n), p(n);
  for (int i = 0; i < n; ++i) {
    w[i] = psi_hit[i].first * psi_hit[i].second;
    p[i] = psi_hit[i].first;
  }
  double gamma = 0.0, q = 0.0;
  for (int i = 0; i < n; ++i) {
    gamma += w[i];
    q += p[i];
  }
  gamma /= n;
  q /= n;
  double cww = 0.0, cwp = 0.0, cpp = 0.0;
  for (int i = 0; i < n; ++i) {
    cww += (w[i] - gamma) * (w[i] - gamma);
    cwp += (w[i] - gamma) * (p[i] - q);
    cpp += (p[i] - q) * (p[i] - q);
  }
  cww /= n - 1;
  cwp /= n - 1;
  cpp /= n - 1;
  const double a0 = 1.0 / q;
  const double a1 = -gamma / (q * q);
  const double var = a0 * (a0 * cww + a1 * cwp) + a1 * (a0 * cwp + a1 * cpp);
  return BruteResult{gamma / q, std::sqrt(std::max(var, 0.0))};
}

BruteResult brute_aggregate(const std::vector<std::vector<std::pair<double, double>>>& folds) {
  const int K = static_cast<int>(folds.size());
  std::vector<double> gammas(K, 0.0), qs(K, 0.0);
  for (int k = 0; k < K; ++k) {
    for (const auto& [psi, hit] : folds[k]) {
      gammas[k] += psi * hit;
      qs[k] += psi;
    }
    gammas[k] /= folds[k].size();
    qs[k] /= folds[k].size();
  }
  double gamma = 0.0, q = 0.0;
  for (int k = 0; k < K; ++k) {
    gamma += gammas[k];
    q += qs[k];
  }
  gamma /= K;
  q /= K;

  // Materialize the full 2K x 2K block-diagonal covariance and the tiled
  // gradient vector, then multiply with plain loops.
  std::vector<std::vector<double>> Sigma(2 * K, std::vector<double>(2 * K, 0.0));
  for (int k = 0; k < K; ++k) {
    const int n = static_cast<int>(folds[k].size());
    double cww = 0.0, cwp = 0.0, cpp = 0.0;
    for (const auto& [psi, hit] : folds[k]) {
      const double dw = psi * hit - gammas[k];
      const double dp = psi - qs[k];
      cww += dw * dw;
      cwp += dw * dp;
      cpp += dp * dp;
    }
    cww /= n - 1;
    cwp /= n - 1;
    cpp /= n - 1;
    Sigma[2 * k][2 * k] = cww;
    Sigma[2 * k][2 * k + 1] = cwp;
    Sigma[2 * k + 1][2 * k] = cwp;
    Sigma[2 * k + 1][2 * k + 1] = cpp;
  }
  std::vector<double> a(2 * K);
  for (int k = 0; k < K; ++k) {
    a[2 * k] = (1.0 / q) / K;
    a[2 * k + 1] = (-gamma / (q * q)) / K;
  }
  double var = 0.0;
  for (int r = 0; r < 2 * K; ++r) {
    for (int c = 0; c < 2 * K; ++c) var += a[r] * Sigma[r][c] * a[c];
  }
  return BruteResult{gamma / q, std::sqrt(std::max(var, 0.0))};
}

std::vector<RecalibRecord> to_records(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<RecalibRecord> records;
  for (const auto& [psi, hit] : pairs) records.push_back(RecalibRecord{psi, hit});
  return records;
}

std::vector<std::pair<double, double>> random_fold(Rng& rng, int n) {
  std::vector<std::pair<double, double>> pairs;
  for (int i = 0; i < n; ++i) {
    const double psi = rng.uniform01();
    const double hit = rng.uniform01() < 0.8 ? 1.0 : 0.0;
    pairs.emplace_back(psi, hit);
  }
  return pairs;
}

}  // namespace

TEST_CASE("single-model hand examples") {
  // perfect coverage degenerates to a point estimate
  const auto perfect = recalibrate_single(
      to_records({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}));
  CHECK(perfect.theta == doctest::Approx(1.0));
  CHECK(perfect.sigma == doctest::Approx(0.0));
  CHECK(perfect.degenerate);
  const ConfidenceInterval ci = perfect.ci(0.95);
  CHECK(ci.lower == doctest::Approx(1.0));
  CHECK(ci.upper == doctest::Approx(1.0));

  const auto est = recalibrate_single(
      to_records({{1.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}, {0.0, 0.0}}));
  CHECK(est.gamma == doctest::Approx(0.5));
  CHECK(est.q == doctest::Approx(0.75));
  CHECK(est.theta == doctest::Approx(2.0 / 3.0));
  CHECK(!est.degenerate);
  CHECK(est.n_v == 4);
}

TEST_CASE("single-model errors") {
  CHECK_THROWS_AS(recalibrate_single(to_records({{1.0, 1.0}})), DegenerateError);
  CHECK_THROWS_AS(recalibrate_single(to_records({{0.0, 0.0}, {0.0, 0.0}})), DegenerateError);
  CHECK_THROWS_AS(recalibrate_single(to_records({{1.5, 1.0}, {0.5, 0.0}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(recalibrate_single(to_records({{0.5, 0.25}, {0.5, 1.0}})),
                  std::invalid_argument);
}

TEST_CASE("aggregate hand examples") {
  // two identical folds halve the variance: sigma_agg = sigma_single/sqrt(2)
  const std::vector<std::pair<double, double>> fold = {
      {1.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}, {0.0, 0.0}};
  const auto single = recalibrate_single(to_records(fold));
  const auto agg = recalibrate_aggregate({to_records(fold), to_records(fold)});
  CHECK(agg.theta == doctest::Approx(2.0 / 3.0));
  CHECK(agg.sigma == doctest::Approx(single.sigma / std::sqrt(2.0)).epsilon(1e-12));

  // fold means (gamma, q) of (0.5, 0.8) and (0.7, 0.9): theta = 0.6/0.85
  const std::vector<std::pair<double, double>> f1 = {{1.0, 1.0}, {0.6, 0.0}};
  const std::vector<std::pair<double, double>> f2 = {
      {1.0, 1.0}, {0.8, 1.0}, {1.0, 1.0}, {0.8, 0.0}};
  const auto est = recalibrate_aggregate({to_records(f1), to_records(f2)});
  CHECK(est.folds[0].gamma == doctest::Approx(0.5));
  CHECK(est.folds[0].q == doctest::Approx(0.8));
  CHECK(est.folds[1].gamma == doctest::Approx(0.7));
  CHECK(est.folds[1].q == doctest::Approx(0.9));
  CHECK(est.theta == doctest::Approx(0.6 / 0.85).epsilon(1e-12));
  const auto brute = brute_aggregate({f1, f2});
  CHECK(est.theta == doctest::Approx(brute.theta).epsilon(1e-12));
  CHECK(est.sigma == doctest::Approx(brute.sigma).epsilon(1e-12));

  // all folds perfect
  const auto ones = to_records({{1.0, 1.0}, {1.0, 1.0}});
  const auto perfect = recalibrate_aggregate({ones, ones, ones});
  CHECK(perfect.theta == doctest::Approx(1.0));
  CHECK(perfect.sigma == doctest::Approx(0.0));
  CHECK(perfect.degenerate);
}

TEST_CASE("aggregate errors") {
  const std::vector<std::pair<double, double>> good = {{1.0, 1.0}, {0.5, 0.0}};
  const std::vector<std::pair<double, double>> dead = {{0.0, 0.0}, {0.0, 0.0}};
  CHECK_THROWS_AS(recalibrate_aggregate({to_records(good)}), std::invalid_argument);
  CHECK_THROWS_AS(recalibrate_aggregate({to_records(good), to_records(dead)}),
                  DegenerateError);
}

TEST_CASE("brute-force equivalence on random instances") {
  // A fold whose hits are all one has psi*hit == psi exactly, so the true
  // variance is zero; the two summation orders then round to values on the
  // order of 1e-17 before the square root. Flushing those to zero keeps the
  // comparison meaningful at 1e-12.
  const auto flush = [](double sigma) { return sigma < 1e-8 ? 0.0 : sigma; };
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(19));
    const auto fold = random_fold(rng, n);
    const auto est = recalibrate_single(to_records(fold));
    const auto brute = brute_single(fold);
    CHECK(std::abs(est.theta - brute.theta) < 1e-12);
    CHECK(std::abs(flush(est.sigma) - flush(brute.sigma)) < 1e-12);
  }
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(rng.below(2));
    std::vector<std::vector<std::pair<double, double>>> folds;
    std::vector<std::vector<RecalibRecord>> records;
    for (int k = 0; k < K; ++k) {
      const int n = 2 + static_cast<int>(rng.below(19));
      folds.push_back(random_fold(rng, n));
      records.push_back(to_records(folds.back()));
    }
    const auto est = recalibrate_aggregate(records);
    const auto brute = brute_aggregate(folds);
    CHECK(std::abs(est.theta - brute.theta) < 1e-12);
    CHECK(std::abs(flush(est.sigma) - flush(brute.sigma)) < 1e-12);
  }
}

TEST_CASE("theta always lies in [0,1]") {
  Rng rng(55);
  for (int trial = 0; trial < 200; ++trial) {
    const auto est = recalibrate_single(to_records(random_fold(rng, 10)));
    CHECK(est.theta >= 0.0);
    CHECK(est.theta <= 1.0);
  }
}

TEST_CASE("local coverage restricts and recombines") {
  Rng rng(91);
  const auto fold = random_fold(rng, 40);
  const auto records = to_records(fold);

  // flag everything: identical to the global estimate
  const std::vector<char> all(records.size(), 1);
  const auto global = recalibrate_single(records);
  const auto local_all = local_coverage(records, all);
  CHECK(local_all.theta == doctest::Approx(global.theta).epsilon(1e-15));
  CHECK(local_all.sigma == doctest::Approx(global.sigma).epsilon(1e-15));

  // a half split: restricted estimates match the brute force on the subset,
  // and the global gamma is the count-weighted mean of the regional gammas
  std::vector<char> left(records.size(), 0);
  std::vector<std::pair<double, double>> left_pairs, right_pairs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i % 2 == 0) {
      left[i] = 1;
      left_pairs.push_back(fold[i]);
    } else {
      right_pairs.push_back(fold[i]);
    }
  }
  const auto local_left = local_coverage(records, left);
  const auto brute_left = brute_single(left_pairs);
  CHECK(local_left.theta == doctest::Approx(brute_left.theta).epsilon(1e-12));
  CHECK(local_left.sigma == doctest::Approx(brute_left.sigma).epsilon(1e-12));

  std::vector<char> right(records.size(), 0);
  for (std::size_t i = 0; i < records.size(); ++i) right[i] = left[i] ? 0 : 1;
  const auto local_right = local_coverage(records, right);
  const double recombined =
      (local_left.gamma * left_pairs.size() + local_right.gamma * right_pairs.size()) /
      records.size();
  CHECK(recombined == doctest::Approx(global.gamma).epsilon(1e-12));

  const std::vector<char> none(records.size(), 0);
  CHECK_THROWS_AS(local_coverage(records, none), DegenerateError);
}

TEST_CASE("aggregate membership") {
  // two stub models built around fixed heads (zero-weight nets)
  SelectiveModel base;
  base.kind = ModelKind::kGaussianRegression;
  base.decision_mode = DecisionMode::kCoupled;
  base.prediction_spec = MlpSpec{2, {}, 2};
  base.prediction = zeros_like(base.prediction_spec);
  base.prediction.biases[0][0] = 0.0;
  base.prediction.biases[0][1] = softplus_inv(1.0);
  base.raw_beta = softplus_inv(300.0);  // effectively hard gate
  base.hyper.alpha = 0.1;
  base.hyper.delta = entropy_gaussian(1.0) + 1.0;  // accepts

  SelectiveModel shifted = base;
  shifted.prediction.biases[0][0] = 100.0;  // set far away: never contains 0
  SelectiveModel rejecting = base;
  rejecting.hyper.delta = entropy_gaussian(1.0) - 1.0;  // rejects

  const Eigen::Vector2d x(0.0, 0.0);
  // both accept, one hits: member = 0.5
  const auto half = aggregate_membership({base, shifted}, x, 0.0, 0.1);
  CHECK(half.accept == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(half.member == doctest::Approx(0.5).epsilon(1e-6));

  // agreeing models: member equals the shared hit indicator
  const auto agree = aggregate_membership({base, base}, x, 0.0, 0.1);
  CHECK(agree.member == doctest::Approx(1.0).epsilon(1e-9));

  // the rejecting model is excluded by its weight
  const auto weighted = aggregate_membership({base, rejecting}, x, 0.0, 0.1);
  CHECK(weighted.accept == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(weighted.member == doctest::Approx(1.0).epsilon(1e-6));

  // all models rejecting: membership undefined
  SelectiveModel dead = rejecting;
  dead.raw_beta = softplus_inv(1e4);
  CHECK_THROWS_AS(aggregate_membership({dead, dead}, x, 0.0, 0.1), DegenerateError);
}

TEST_CASE("report serialization") {
  const auto est = recalibrate_single(
      to_records({{1.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}, {0.5, 1.0}}));
  std::vector<CoverageReportEntry> entries;
  entries.push_back({"single", "", est, {0.9, 0.95}});
  const nlohmann::json doc = report_to_json(entries);
  CHECK(doc.at("estimates").size() == 1);
  CHECK(doc.at("estimates")[0].at("ci").size() == 2);
  CHECK(doc.at("estimates")[0].at("theta").get<double>() == doctest::Approx(est.theta));

  const std::string csv = report_to_csv(entries);
  CHECK(csv.find("single") != std::string::npos);
  CHECK(csv.find("0.9") != std::string::npos);
}

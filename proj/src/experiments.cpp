#include "selset/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "selset/errors.hpp"
#include "selset/io.hpp"
#include "selset/rng.hpp"
#include "selset/stats.hpp"

namespace selset {

namespace {

// Seed-stream tags local to the experiment runners.
enum StudyTag : std::uint64_t {
  kData = 1,
  kTrain = 2,
  kTruth = 3,
  kNeighborhoods = 4,
};

Eigen::MatrixXd square_grid(int side, double lo, double hi) {
  Eigen::MatrixXd points(2, side * side);
  for (int a = 0; a < side; ++a) {
    const double x1 = lo + (hi - lo) * a / (side - 1);
    for (int b = 0; b < side; ++b) {
      const double x2 = lo + (hi - lo) * b / (side - 1);
      points.col(a * side + b) << x1, x2;
    }
  }
  return points;
}

void append_grid_rows(GridPanelResult& result, double setting, const Eigen::MatrixXd& grid,
                      const Eigen::VectorXd& psi, const std::vector<char>& oracle) {
  for (int i = 0; i < grid.cols(); ++i) {
    result.rows.push_back(
        GridPanelRow{setting, grid(0, i), grid(1, i), psi[i], oracle[i] ? 1 : 0});
  }
}

double hard_agreement(const Eigen::VectorXd& psi, const std::vector<char>& oracle) {
  int agree = 0;
  for (int i = 0; i < psi.size(); ++i) {
    const bool accept = psi[i] >= 0.5;
    if (accept == static_cast<bool>(oracle[i])) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(psi.size());
}

double acceptance_fraction(const Eigen::VectorXd& psi) {
  int count = 0;
  for (int i = 0; i < psi.size(); ++i) {
    if (psi[i] >= 0.5) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(psi.size());
}

// Highest grid agreement achievable by any rule of the form
// "accept iff density > c". Equal densities move across the threshold
// together.
std::pair<double, std::vector<char>> best_density_rule(const std::vector<double>& density,
                                                       const Eigen::VectorXd& psi) {
  const int n = static_cast<int>(density.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return density[a] > density[b]; });
  std::vector<char> hard(n);
  int hard_accept_total = 0;
  for (int i = 0; i < n; ++i) {
    hard[i] = psi[i] >= 0.5 ? 1 : 0;
    hard_accept_total += hard[i];
  }
  // Threshold above every density: reject everything.
  int best_agree = n - hard_accept_total;
  int best_prefix = 0;
  int acc_match = 0;    // accepted points the model also accepts
  int acc_mismatch = 0; // accepted points the model rejects
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && density[order[j]] == density[order[i]]) {
      if (hard[order[j]]) {
        ++acc_match;
      } else {
        ++acc_mismatch;
      }
      ++j;
    }
    const int agree = acc_match + (n - hard_accept_total - acc_mismatch);
    if (agree > best_agree) {
      best_agree = agree;
      best_prefix = j;
    }
    i = j;
  }
  std::vector<char> oracle(n, 0);
  for (int k = 0; k < best_prefix; ++k) oracle[order[k]] = 1;
  return {static_cast<double>(best_agree) / static_cast<double>(n), std::move(oracle)};
}

TrainConfig gaussian_coupled_config(double alpha, double delta, double lambda,
                                    std::vector<int> hidden, int epochs, std::uint64_t seed) {
  TrainConfig config;
  config.kind = ModelKind::kGaussianRegression;
  config.decision_mode = DecisionMode::kCoupled;
  config.hyper.alpha = alpha;
  config.hyper.delta = delta;
  config.hyper.lambda = lambda;
  config.hidden = std::move(hidden);
  config.epochs = epochs;
  config.seed = seed;
  return config;
}

}  // namespace

std::string grid_panel_to_csv(const GridPanelResult& result) {
  std::string out = csv_row({"setting", "x1", "x2", "accept_prob", "oracle_accept"});
  for (const auto& row : result.rows) {
    out += csv_row({format_double(row.setting), format_double(row.x1), format_double(row.x2),
                    format_double(row.accept_prob), std::to_string(row.oracle_accept)});
  }
  return out;
}

GridPanelResult run_panel_a(const PanelAConfig& config) {
  GridPanelResult result;
  const Dataset data = gen_entropy_sim(config.n, mix_seed(config.seed, kData));
  const Eigen::MatrixXd grid = square_grid(config.grid, -3.0, 3.0);
  for (std::size_t j = 0; j < config.deltas.size(); ++j) {
    const double delta = config.deltas[j];
    const TrainConfig tc = gaussian_coupled_config(0.1, delta, config.lambda, {15, 15},
                                                   config.epochs, mix_seed(config.seed, kTrain, j));
    const TrainResult fit = train_selective(data, tc);
    const Eigen::VectorXd psi = accept_prob_batch(fit.model, grid);
    std::vector<char> oracle(grid.cols());
    for (int i = 0; i < grid.cols(); ++i) {
      const double true_entropy =
          entropy_gaussian(data.truth->stddev(grid(0, i), grid(1, i)));
      oracle[i] = true_entropy < delta ? 1 : 0;
    }
    result.settings.push_back(delta);
    result.agreement.push_back(hard_agreement(psi, oracle));
    result.acceptance_area.push_back(acceptance_fraction(psi));
    append_grid_rows(result, delta, grid, psi, oracle);
  }
  return result;
}

GridPanelResult run_panel_b(const PanelBConfig& config) {
  GridPanelResult result;
  const Dataset data =
      gen_density_sim(config.n, mix_seed(config.seed, kData), DensitySimOptions{config.sigma});
  const Eigen::MatrixXd grid = square_grid(config.grid, -3.0, 3.0);
  std::vector<double> density(grid.cols());
  for (int i = 0; i < grid.cols(); ++i) {
    density[i] = data.truth->density(grid(0, i), grid(1, i));
  }
  for (std::size_t j = 0; j < config.lambdas.size(); ++j) {
    const double lambda = config.lambdas[j];
    const TrainConfig tc = gaussian_coupled_config(0.1, config.delta, lambda, {15, 15},
                                                   config.epochs, mix_seed(config.seed, kTrain, j));
    const TrainResult fit = train_selective(data, tc);
    const Eigen::VectorXd psi = accept_prob_batch(fit.model, grid);
    auto [agreement, oracle] = best_density_rule(density, psi);
    result.settings.push_back(lambda);
    result.agreement.push_back(agreement);
    result.acceptance_area.push_back(acceptance_fraction(psi));
    append_grid_rows(result, lambda, grid, psi, oracle);
  }
  return result;
}

GridPanelResult run_panel_c(const PanelCConfig& config) {
  GridPanelResult result;
  const Dataset data = gen_misspec_sim(config.n, mix_seed(config.seed, kData));
  const Eigen::MatrixXd grid = square_grid(config.grid, -3.0, 3.0);

  TrainConfig tc;
  tc.kind = ModelKind::kGaussianRegression;
  tc.decision_mode = DecisionMode::kSeparate;
  tc.hidden = {};  // linear density head
  tc.decision_hidden = {15, 15};
  tc.hyper.alpha = 0.1;
  tc.hyper.delta = config.delta;
  tc.hyper.lambda = config.lambda;
  tc.epochs = config.epochs;
  tc.seed = mix_seed(config.seed, kTrain);
  const TrainResult fit = train_selective(data, tc);

  const Eigen::VectorXd psi = accept_prob_batch(fit.model, grid);
  std::vector<char> oracle(grid.cols());
  double sum_in = 0.0, sum_out = 0.0;
  int count_in = 0, count_out = 0;
  for (int i = 0; i < grid.cols(); ++i) {
    const bool inside = in_misspec_patch(grid(0, i), grid(1, i));
    oracle[i] = inside ? 0 : 1;
    if (inside) {
      sum_in += psi[i];
      ++count_in;
    } else {
      sum_out += psi[i];
      ++count_out;
    }
  }
  result.settings.push_back(config.delta);
  result.agreement.push_back(hard_agreement(psi, oracle));
  result.acceptance_area.push_back(acceptance_fraction(psi));
  result.mean_accept_inside = sum_in / count_in;
  result.mean_accept_outside = sum_out / count_out;
  append_grid_rows(result, config.delta, grid, psi, oracle);
  return result;
}

namespace {

struct TruthValues {
  std::vector<double> fold;
  double aggregate = 0.0;
};

// True coverage of each fold model and of their uniform mixture under the
// constant-entropy generator, by Monte Carlo over fresh inputs with the
// conditional coverage evaluated in closed form (the generator's conditional
// law is known).
TruthValues coverage_truth(const std::vector<SelectiveModel>& models,
                           const CoverageStudyConfig& config, std::uint64_t seed) {
  const int K = static_cast<int>(models.size());
  const double zq = normal_quantile(1.0 - config.alpha / 2.0);
  Rng rng(seed);
  std::vector<double> sum_psi(K, 0.0);
  std::vector<double> sum_hit(K, 0.0);
  int remaining = config.truth_samples;
  const int chunk_size = 100000;
  while (remaining > 0) {
    const int b = std::min(chunk_size, remaining);
    Eigen::MatrixXd inputs(2, b);
    for (int i = 0; i < b; ++i) {
      inputs(0, i) = rng.normal();
      inputs(1, i) = rng.normal();
    }
    for (int k = 0; k < K; ++k) {
      const SelectiveModel& model = models[k];
      const double beta = model.beta();
      const double delta = model.hyper.delta;
      const Eigen::MatrixXd outs = forward_batch(model.prediction, inputs);
      for (int i = 0; i < b; ++i) {
        const double mu = outs(0, i);
        const double sig = softplus(outs(1, i));
        const double psi = sigmoid(-beta * (entropy_gaussian(sig) - delta));
        const double hi = mu + zq * sig;
        const double lo = mu - zq * sig;
        const double cover =
            normal_cdf(hi / config.sigma) - normal_cdf(lo / config.sigma);
        sum_psi[k] += psi;
        sum_hit[k] += psi * cover;
      }
    }
    remaining -= b;
  }
  TruthValues truth;
  double total_psi = 0.0, total_hit = 0.0;
  for (int k = 0; k < K; ++k) {
    truth.fold.push_back(sum_hit[k] / sum_psi[k]);
    total_psi += sum_psi[k];
    total_hit += sum_hit[k];
  }
  truth.aggregate = total_hit / total_psi;
  return truth;
}

// Local-coverage spread: interquartile range of the local estimates over
// random box neighborhoods that have enough accepted validation points in
// every fold.
std::vector<double> local_iqrs(const Dataset& data, const FoldPlan& plan,
                               const std::vector<std::vector<RecalibRecord>>& records,
                               const CoverageStudyConfig& config, std::uint64_t seed) {
  const int K = plan.K;
  const auto folds = plan.fold_indices();
  Rng rng(seed);
  std::vector<std::vector<double>> thetas(K + 1);
  int found = 0;
  int attempts = 0;
  const int max_attempts = 400 * config.neighborhoods;
  while (found < config.neighborhoods && attempts < max_attempts) {
    ++attempts;
    const int center_row = static_cast<int>(rng.below(data.n()));
    const Eigen::Vector2d center = data.X.row(center_row).transpose();
    std::vector<std::vector<char>> flags(K);
    bool usable = true;
    for (int k = 0; k < K && usable; ++k) {
      flags[k].assign(records[k].size(), 0);
      int count = 0;
      double psi_sum = 0.0;
      for (std::size_t j = 0; j < folds[k].size(); ++j) {
        const Eigen::Vector2d x = data.X.row(folds[k][j]).transpose();
        if ((x - center).cwiseAbs().maxCoeff() <= config.neighborhood_halfwidth) {
          flags[k][j] = 1;
          ++count;
          psi_sum += records[k][j].psi;
        }
      }
      if (count < config.min_local_per_fold || psi_sum <= 0.0) usable = false;
    }
    if (!usable) continue;
    ++found;
    for (int k = 0; k < K; ++k) {
      thetas[k].push_back(local_coverage(records[k], flags[k]).theta);
    }
    thetas[K].push_back(local_coverage(records, flags).theta);
  }
  if (found < config.neighborhoods) {
    throw NumericalError("coverage study: could not place enough local neighborhoods");
  }
  std::vector<double> out(K + 1);
  for (int k = 0; k <= K; ++k) out[k] = iqr(thetas[k]);
  return out;
}

}  // namespace

std::vector<CoverageStudyRow> run_coverage_study(const CoverageStudyConfig& config) {
  std::vector<CoverageStudyRow> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int r = 0; r < config.replicates; ++r) {
    const std::uint64_t rep_seed = mix_seed(config.seed, 900, static_cast<std::uint64_t>(r));
    const Dataset data =
        gen_density_sim(config.n, mix_seed(rep_seed, kData), DensitySimOptions{config.sigma});
    TrainConfig tc = gaussian_coupled_config(config.alpha, config.delta, config.lambda,
                                             config.hidden, config.epochs,
                                             mix_seed(rep_seed, kTrain));
    tc.kfold = config.K;
    const KfoldResult kf = kfold_train(data, tc);
    std::vector<SelectiveModel> models;
    models.reserve(kf.fits.size());
    for (const auto& fit : kf.fits) models.push_back(fit.model);

    const auto records = build_fold_records(models, data, kf.plan, config.alpha);
    const CoverageEstimate agg = recalibrate_aggregate(records);
    std::vector<CoverageEstimate> singles;
    singles.reserve(records.size());
    for (const auto& fold_records : records) {
      singles.push_back(recalibrate_single(fold_records));
    }
    const TruthValues truth = coverage_truth(models, config, mix_seed(rep_seed, kTruth));

    std::vector<double> iqrs;
    if (config.with_local) {
      iqrs = local_iqrs(data, kf.plan, records, config, mix_seed(rep_seed, kNeighborhoods));
    }

    const auto make_row = [&](const std::string& name, const CoverageEstimate& est,
                              double truth_value, double local_iqr) {
      const ConfidenceInterval ci = est.ci(config.ci_level);
      CoverageStudyRow row;
      row.replicate = r;
      row.model = name;
      row.theta = est.theta;
      row.ci_lower = ci.lower;
      row.ci_upper = ci.upper;
      row.truth = truth_value;
      row.covered = (truth_value >= ci.lower && truth_value <= ci.upper) ? 1 : 0;
      const double z = normal_quantile(0.5 * (1.0 + config.ci_level));
      row.ci_width = 2.0 * z * est.sigma / std::sqrt(static_cast<double>(est.n_v));
      row.local_iqr = local_iqr;
      return row;
    };

    for (int k = 0; k < config.K; ++k) {
      rows.push_back(make_row("fold" + std::to_string(k), singles[k], truth.fold[k],
                              config.with_local ? iqrs[k] : nan));
    }
    rows.push_back(
        make_row("agg", agg, truth.aggregate, config.with_local ? iqrs[config.K] : nan));
  }
  return rows;
}

std::string coverage_study_to_csv(const std::vector<CoverageStudyRow>& rows) {
  std::string out = csv_row({"replicate", "model", "theta", "ci_lower", "ci_upper", "truth",
                             "covered", "ci_width", "local_iqr"});
  for (const auto& row : rows) {
    out += csv_row({std::to_string(row.replicate), row.model, format_double(row.theta),
                    format_double(row.ci_lower), format_double(row.ci_upper),
                    format_double(row.truth), std::to_string(row.covered),
                    format_double(row.ci_width), format_double(row.local_iqr)});
  }
  return out;
}

std::vector<std::pair<std::string, TrainConfig>> shipped_configs() {
  std::vector<std::pair<std::string, TrainConfig>> configs;

  configs.emplace_back("entropy-gate-gaussian",
                       gaussian_coupled_config(0.1, 1.7, 1e-4, {15, 15}, 80, 11));
  configs.emplace_back("density-gate-gaussian",
                       gaussian_coupled_config(0.1, 2.5, 0.001, {15, 15}, 80, 12));
  configs.emplace_back("study-gaussian", gaussian_coupled_config(0.1, 3.0, 1e-3, {12}, 30, 14));

  TrainConfig linear_sep;
  linear_sep.kind = ModelKind::kGaussianRegression;
  linear_sep.decision_mode = DecisionMode::kSeparate;
  linear_sep.hidden = {};
  linear_sep.decision_hidden = {15, 15};
  linear_sep.hyper.alpha = 0.1;
  linear_sep.hyper.delta = 1.3;
  linear_sep.hyper.lambda = 1e-4;
  linear_sep.epochs = 80;
  linear_sep.seed = 13;
  configs.emplace_back("misspec-linear-separate", linear_sep);

  TrainConfig interval;
  interval.kind = ModelKind::kIntervalRegression;
  interval.decision_mode = DecisionMode::kCoupled;
  interval.hidden = {15, 15};
  interval.hyper.alpha = 0.2;
  interval.hyper.delta = 0.5;
  interval.hyper.lambda = 0.01;
  interval.epochs = 60;
  interval.seed = 15;
  configs.emplace_back("interval-coupled", interval);

  TrainConfig categorical;
  categorical.kind = ModelKind::kCategorical;
  categorical.decision_mode = DecisionMode::kCoupled;
  categorical.hidden = {10};
  categorical.classes = 3;
  categorical.hyper.alpha = 0.1;
  categorical.hyper.delta = 0.3;
  categorical.hyper.lambda = 0.01;
  categorical.epochs = 60;
  categorical.seed = 16;
  configs.emplace_back("categorical-coupled", categorical);

  return configs;
}

}  // namespace selset

#include "selset/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/io.hpp"
#include "selset/rng.hpp"
#include "selset/stats.hpp"

namespace selset {

namespace {

// Seed-stream tags for the independent random streams a training run uses.
enum SeedTag : std::uint64_t {
  kInitPrediction = 1,
  kInitDecision = 2,
  kShuffle = 3,
  kPenalty = 4,
  kEvalPenalty = 5,
  kFoldPlan = 6,
  kCrossVal = 7,
};

int infer_classes(const Dataset& data, const TrainConfig& config) {
  if (config.classes > 0) return config.classes;
  const int c = static_cast<int>(data.y.maxCoeff()) + 1;
  if (c < 2) throw ConfigError("categorical training needs at least 2 classes");
  return c;
}

}  // namespace

void validate(const TrainConfig& config) {
  validate(config.hyper);
  if (config.epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (config.lr <= 0.0) throw std::invalid_argument("config: lr must be > 0");
  if (config.momentum < 0.0 || config.momentum >= 1.0) {
    throw std::invalid_argument("config: momentum must lie in [0,1)");
  }
  if (config.m_penalty < 0) throw std::invalid_argument("config: m_penalty must be >= 0");
  if (config.box_margin < 0.0) throw std::invalid_argument("config: box_margin must be >= 0");
  for (double l : config.lambda_grid) {
    if (l < 0.0) throw std::invalid_argument("config: lambda_grid entries must be >= 0");
  }
  if (config.kfold < 2) throw std::invalid_argument("config: kfold must be >= 2");
  if (!(config.whiten_var_fraction > 0.0 && config.whiten_var_fraction <= 1.0)) {
    throw std::invalid_argument("config: whiten_var_fraction outside (0,1]");
  }
}

Box domain_box(const Eigen::MatrixXd& X, double margin) {
  if (X.rows() < 1) throw std::invalid_argument("domain_box: empty data");
  if (margin < 0.0) throw std::invalid_argument("domain_box: negative margin");
  Box box;
  box.lo = X.colwise().minCoeff();
  box.hi = X.colwise().maxCoeff();
  for (int d = 0; d < box.dim(); ++d) {
    const double range = box.hi[d] - box.lo[d];
    if (range > 0.0) {
      box.lo[d] -= margin * range;
      box.hi[d] += margin * range;
    } else {
      box.lo[d] -= 1e-6;
      box.hi[d] += 1e-6;
    }
  }
  return box;
}

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics) {
  std::string out = csv_row({"epoch", "objective", "data_term", "penalty_term", "mean_psi"});
  for (const auto& m : metrics) {
    out += csv_row({std::to_string(m.epoch), format_double(m.objective),
                    format_double(m.data_term), format_double(m.penalty_term),
                    format_double(m.mean_accept)});
  }
  return out;
}

namespace {

SelectiveModel make_initial_model(const Dataset& data, const TrainConfig& config,
                                  const Eigen::MatrixXd& inputs_cols,
                                  std::optional<WhitenTransform> transform) {
  SelectiveModel model;
  model.kind = config.kind;
  model.decision_mode = config.decision_mode;
  model.hyper = config.hyper;
  model.preprocessing = std::move(transform);

  const int input_dim = static_cast<int>(inputs_cols.rows());
  int output_dim = 2;
  if (config.kind == ModelKind::kCategorical) {
    if (data.outcome_kind != OutcomeKind::kClass) {
      throw ConfigError("categorical model needs class outcomes");
    }
    output_dim = infer_classes(data, config);
  } else if (data.outcome_kind != OutcomeKind::kReal) {
    throw ConfigError("regression model needs real outcomes");
  }
  model.prediction_spec = MlpSpec{input_dim, config.hidden, output_dim};
  model.prediction = init_params(model.prediction_spec, mix_seed(config.seed, kInitPrediction));
  // Shrink the output layer and start the heads at the marginal outcome
  // statistics. Without this, points whose initial scale head lands far
  // below the residual scale produce gradients stiff enough to destabilize
  // momentum SGD on the likelihood objectives.
  model.prediction.weights.back() *= 0.1;
  if (config.kind != ModelKind::kCategorical) {
    const double mean_y = data.y.mean();
    const double var_y = (data.y.array() - mean_y).square().sum() /
                         std::max(1, static_cast<int>(data.y.size()) - 1);
    const double spread = std::max(std::sqrt(var_y), 1e-3);
    model.prediction.biases.back()[0] = mean_y;
    model.prediction.biases.back()[1] = softplus_inv(spread);
  }
  if (config.decision_mode == DecisionMode::kCoupled) {
    model.raw_beta = softplus_inv(5.0);  // moderately sharp but trainable gate
  } else {
    model.decision_spec = MlpSpec{input_dim, config.decision_hidden, 1};
    model.decision = init_params(model.decision_spec, mix_seed(config.seed, kInitDecision));
    // Accept-by-default start with a damped output layer. A gate that dives
    // to rejection while the prediction head is still settling saturates the
    // sigmoid and never recovers (zero gradient at psi ~ 0).
    model.decision.weights.back() *= 0.1;
    model.decision.biases.back()[0] = 2.0;
  }
  validate(model);
  return model;
}

TrainResult run_sgd(const Dataset& data, const TrainConfig& config, bool selective) {
  validate(config);
  validate(data);
  if (data.n() < 1) throw std::invalid_argument("train: empty dataset");

  std::optional<WhitenTransform> transform;
  Eigen::MatrixXd inputs;  // model space, observations in columns
  if (config.whiten) {
    transform = pca_whiten_fit(data.X, config.whiten_var_fraction);
    inputs = whiten_apply(*transform, data.X).transpose();
  } else {
    inputs = data.X.transpose();
  }

  TrainConfig effective = config;
  if (!selective) {
    // Plain empirical loss minimization: a coupled gate with an abstention
    // cost far above any reachable uncertainty saturates the sigmoid to
    // exactly one, so the data term reduces to the mean loss and every
    // decision gradient vanishes identically.
    effective.decision_mode = DecisionMode::kCoupled;
    effective.hyper.delta = 1e300;
    effective.hyper.lambda = 0.0;
    effective.hyper.gamma = 0.0;
  }

  SelectiveModel model = make_initial_model(data, effective, inputs, std::move(transform));
  const Box box = domain_box(inputs.transpose(), config.box_margin);
  const ObjectiveHyper hyper = effective.hyper;
  const int m_penalty =
      selective ? (config.m_penalty > 0 ? config.m_penalty : config.batch_size) : 0;
  const int eval_penalty = selective ? std::max(4 * config.batch_size, 256) : 0;

  const int n = data.n();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  SgdUpdater updater(model.trainable_count(), config.lr, config.momentum);
  Eigen::VectorXd params = model.trainable();

  std::vector<EpochMetrics> metrics;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, kShuffle, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (int start = 0; start < n; start += config.batch_size) {
      const int b = std::min(config.batch_size, n - start);
      Eigen::MatrixXd xb(inputs.rows(), b);
      Eigen::VectorXd yb(b);
      for (int j = 0; j < b; ++j) {
        xb.col(j) = inputs.col(order[start + j]);
        yb[j] = data.y[order[start + j]];
      }
      Eigen::MatrixXd penalty_points(inputs.rows(), 0);
      if (m_penalty > 0) {
        penalty_points = sample_uniform(box, m_penalty, mix_seed(config.seed, kPenalty, step));
      }
      model.set_trainable(params);
      auto [parts, grad] = objective_with_grad(model, xb, yb, hyper, box, penalty_points);
      if (!std::isfinite(parts.total)) {
        throw NumericalError("training diverged: non-finite objective (reduce lr)");
      }
      params = updater.step(params, grad);
      ++step;
    }
    model.set_trainable(params);
    const ObjectiveParts full = seeded_objective(model, inputs, data.y, hyper, box, eval_penalty,
                                                 mix_seed(config.seed, kEvalPenalty));
    metrics.push_back(EpochMetrics{epoch + 1, full.total, full.data_term, full.penalty_term,
                                   full.mean_accept});
  }

  model.set_trainable(params);
  TrainResult result;
  result.final_objective = metrics.empty() ? 0.0 : metrics.back().objective;
  result.model = std::move(model);
  result.metrics = std::move(metrics);
  return result;
}

}  // namespace

TrainResult train_selective(const Dataset& data, const TrainConfig& config) {
  return run_sgd(data, config, true);
}

TrainResult train_erm(const Dataset& data, const TrainConfig& config) {
  return run_sgd(data, config, false);
}

FoldPlan FoldPlan::make(int n, int K, std::uint64_t seed) {
  if (K < 2) throw std::invalid_argument("fold plan: K must be >= 2");
  if (n < 2 * K) throw std::invalid_argument("fold plan: need n >= 2K observations");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, kFoldPlan));
  rng.shuffle(order);
  FoldPlan plan;
  plan.K = K;
  plan.assignment.assign(n, 0);
  // Contiguous blocks over the shuffled order; the first n mod K folds get
  // one extra observation.
  const int base = n / K;
  const int extra = n % K;
  int pos = 0;
  for (int k = 0; k < K; ++k) {
    const int size = base + (k < extra ? 1 : 0);
    for (int j = 0; j < size; ++j) plan.assignment[order[pos++]] = k;
  }
  return plan;
}

std::vector<std::vector<int>> FoldPlan::fold_indices() const {
  std::vector<std::vector<int>> folds(K);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    folds[assignment[i]].push_back(static_cast<int>(i));
  }
  return folds;
}

std::vector<int> FoldPlan::complement_indices(int fold) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) out.push_back(static_cast<int>(i));
  }
  return out;
}

nlohmann::json fold_plan_to_json(const FoldPlan& plan) {
  return nlohmann::json{{"version", 1}, {"K", plan.K}, {"assignment", plan.assignment}};
}

FoldPlan fold_plan_from_json(const nlohmann::json& doc) {
  if (doc.at("version").get<int>() != 1) throw ConfigError("fold plan: unsupported version");
  FoldPlan plan;
  plan.K = doc.at("K").get<int>();
  plan.assignment = doc.at("assignment").get<std::vector<int>>();
  if (plan.K < 2) throw ConfigError("fold plan: K must be >= 2");
  for (int a : plan.assignment) {
    if (a < 0 || a >= plan.K) throw ConfigError("fold plan: assignment out of range");
  }
  return plan;
}

namespace {

Dataset subset(const Dataset& data, const std::vector<int>& indices) {
  Dataset out;
  out.outcome_kind = data.outcome_kind;
  out.feature_names = data.feature_names;
  out.truth = data.truth;
  out.X.resize(static_cast<int>(indices.size()), data.dim());
  out.y.resize(static_cast<int>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    out.X.row(static_cast<int>(j)) = data.X.row(indices[j]);
    out.y[static_cast<int>(j)] = data.y[indices[j]];
  }
  return out;
}

}  // namespace

KfoldResult kfold_train(const Dataset& data, const TrainConfig& config) {
  validate(config);
  validate(data);
  const int n = data.n();
  if (n < 2 * config.kfold) throw std::invalid_argument("kfold_train: need n >= 2K");

  KfoldResult result;
  result.plan = FoldPlan::make(n, config.kfold, config.seed);
  TrainConfig fold_config = config;
  if (config.kind == ModelKind::kCategorical) {
    // Pin the class count on the full dataset so folds agree on the head.
    fold_config.classes = infer_classes(data, config);
  }
  for (int k = 0; k < config.kfold; ++k) {
    const Dataset train_data = subset(data, result.plan.complement_indices(k));
    result.fits.push_back(train_selective(train_data, fold_config));
  }
  return result;
}

LambdaChoice tune_lambda(const Dataset& data, const TrainConfig& config) {
  validate(config);
  if (config.lambda_grid.empty()) {
    throw std::invalid_argument("tune_lambda: empty lambda grid");
  }
  LambdaChoice choice;
  choice.grid = config.lambda_grid;
  const FoldPlan plan = FoldPlan::make(data.n(), config.kfold, mix_seed(config.seed, kCrossVal));
  const auto folds = plan.fold_indices();

  TrainConfig base = config;
  if (config.kind == ModelKind::kCategorical) base.classes = infer_classes(data, config);

  for (double lambda : config.lambda_grid) {
    TrainConfig trial = base;
    trial.hyper.lambda = lambda;
    double score = 0.0;
    for (int k = 0; k < plan.K; ++k) {
      const TrainResult fit = train_selective(subset(data, plan.complement_indices(k)), trial);
      const Dataset held = subset(data, folds[k]);
      const Eigen::MatrixXd inputs = to_model_columns(fit.model, held.X);
      score += truncated_data_term(fit.model, inputs, held.y, trial.hyper);
    }
    choice.scores.push_back(score / plan.K);
  }
  int best = 0;
  for (std::size_t i = 1; i < choice.scores.size(); ++i) {
    const bool better = choice.scores[i] < choice.scores[best];
    const bool tie_smaller =
        choice.scores[i] == choice.scores[best] && choice.grid[i] < choice.grid[best];
    if (better || tie_smaller) best = static_cast<int>(i);
  }
  choice.lambda = choice.grid[best];
  return choice;
}

}  // namespace selset

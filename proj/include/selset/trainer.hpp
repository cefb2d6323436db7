#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "selset/datasets.hpp"
#include "selset/losses.hpp"
#include "selset/objective.hpp"
#include "selset/selective_model.hpp"

namespace selset {

struct TrainConfig {
  ModelKind kind = ModelKind::kGaussianRegression;
  DecisionMode decision_mode = DecisionMode::kCoupled;
  ObjectiveHyper hyper;
  std::vector<int> hidden = {15, 15};           // prediction net hidden layers
  std::vector<int> decision_hidden = {15, 15};  // separate mode only
  int classes = 0;  // categorical output count; 0 = infer from labels
  double lr = 0.01;
  double momentum = 0.9;
  int epochs = 50;
  int batch_size = 64;
  int m_penalty = 0;  // penalty samples per step; 0 = batch_size
  double box_margin = 0.10;
  std::uint64_t seed = 0;
  bool whiten = false;
  double whiten_var_fraction = 0.99;
  std::vector<double> lambda_grid;
  int kfold = 3;
};

void validate(const TrainConfig& config);

// Per-dimension [min - margin*range, max + margin*range] around the rows of
// X; zero-range dimensions are widened by an absolute 1e-6.
Box domain_box(const Eigen::MatrixXd& X, double margin);

struct EpochMetrics {
  int epoch = 0;
  double objective = 0.0;
  double data_term = 0.0;
  double penalty_term = 0.0;
  double mean_accept = 0.0;
};

std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics);

struct TrainResult {
  SelectiveModel model;
  std::vector<EpochMetrics> metrics;
  double final_objective = 0.0;
};

// Minimizes the selective objective by minibatch SGD with momentum. Penalty
// samples are redrawn each step from a per-step derived seed. Deterministic
// given (dataset, config). Throws NumericalError if the loss leaves the
// finite range (learning rate too high).
TrainResult train_selective(const Dataset& data, const TrainConfig& config);

// Plain empirical loss minimization of the prediction head alone (acceptance
// pinned to one, no penalty, no augmentation); the like-for-like baseline.
TrainResult train_erm(const Dataset& data, const TrainConfig& config);

// Deterministic shuffle, then contiguous blocks of near-equal size.
struct FoldPlan {
  int K = 0;
  std::vector<int> assignment;  // per observation, in {0, ..., K-1}

  static FoldPlan make(int n, int K, std::uint64_t seed);
  std::vector<std::vector<int>> fold_indices() const;     // ascending within fold
  std::vector<int> complement_indices(int fold) const;    // ascending
};

nlohmann::json fold_plan_to_json(const FoldPlan& plan);
FoldPlan fold_plan_from_json(const nlohmann::json& doc);

struct KfoldResult {
  std::vector<TrainResult> fits;  // fits[k] trained on the complement of fold k
  FoldPlan plan;
};

// K-fold cross-fitting: model k never sees fold k, which is reserved for
// certifying it. Every fold model starts from the same seed, so mirrored
// folds with identical data produce identical models regardless of
// scheduling.
KfoldResult kfold_train(const Dataset& data, const TrainConfig& config);

struct LambdaChoice {
  double lambda = 0.0;
  std::vector<double> grid;
  std::vector<double> scores;  // mean held-out truncated data term per grid value
};

// K-fold cross-validation over config.lambda_grid; the score is the held-out
// truncated data term (no penalty, no augmentation). Ties go to the smaller
// lambda.
LambdaChoice tune_lambda(const Dataset& data, const TrainConfig& config);

}  // namespace selset

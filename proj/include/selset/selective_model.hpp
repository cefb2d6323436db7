#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "selset/datasets.hpp"
#include "selset/losses.hpp"
#include "selset/mlp.hpp"

namespace selset {

enum class ModelKind { kIntervalRegression, kGaussianRegression, kCategorical };
enum class DecisionMode { kCoupled, kSeparate };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(DecisionMode mode);
DecisionMode decision_mode_from_string(const std::string& s);

// Either a closed real interval or a finite label set.
struct PredictionSet {
  enum class Kind { kInterval, kLabels };

  Kind kind = Kind::kInterval;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<int> labels;  // sorted, distinct

  static PredictionSet interval(double lo, double hi);
  static PredictionSet label_set(std::vector<int> labels);
};

// Closed-boundary membership; the same convention is used during training
// evaluation and recalibration.
bool contains(const PredictionSet& set, double y);

// A decision function paired with a prediction function. The prediction
// network's output head depends on the kind:
//   interval-regression  (center, raw radius), radius via softplus
//   gaussian-regression  (mean, raw sigma), sigma via softplus
//   categorical          class logits
// The decision function is either coupled -- a sigmoid gate on the model's
// own uncertainty, sharpness beta -- or a separate network with a scalar
// logit output.
struct SelectiveModel {
  ModelKind kind = ModelKind::kGaussianRegression;
  DecisionMode decision_mode = DecisionMode::kCoupled;
  MlpSpec prediction_spec;
  MlpParams prediction;
  double raw_beta = 0.0;  // beta = softplus(raw_beta) > 0
  MlpSpec decision_spec;
  MlpParams decision;  // separate mode only
  ObjectiveHyper hyper;
  std::optional<WhitenTransform> preprocessing;

  double beta() const;
  int classes() const;  // categorical only

  // Trainable parameters as one flat vector: prediction net, then either
  // raw_beta (coupled) or the decision net (separate).
  int trainable_count() const;
  Eigen::VectorXd trainable() const;
  void set_trainable(const Eigen::VectorXd& flat);
};

void validate(const SelectiveModel& model);

// Raw-input helpers; apply the fitted preprocessing when present.
Eigen::VectorXd to_model_space(const SelectiveModel& model, const Eigen::VectorXd& x_raw);
// Rows are observations; the result has observations in columns, ready for
// the batched network evaluations below.
Eigen::MatrixXd to_model_columns(const SelectiveModel& model, const Eigen::MatrixXd& X_raw);

// Uncertainty score: predictive entropy for density kinds, alpha times the
// interval radius for the interval kind. Inputs are in model space.
double uncertainty(const SelectiveModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd uncertainty_batch(const SelectiveModel& model,
                                  const Eigen::Ref<const Eigen::MatrixXd>& inputs);

// Acceptance probability in [0,1]. Coupled mode: sigmoid(-beta *
// (uncertainty - delta)), so acceptance falls as uncertainty rises.
double accept_prob(const SelectiveModel& model, const Eigen::VectorXd& x);
Eigen::VectorXd accept_prob_batch(const SelectiveModel& model,
                                  const Eigen::Ref<const Eigen::MatrixXd>& inputs);

// 1-alpha prediction set at x (model space). The interval kind ignores alpha
// at query time: its radius was shaped by alpha during training.
PredictionSet prediction_set(const SelectiveModel& model, const Eigen::VectorXd& x, double alpha);
PredictionSet prediction_set(const SelectiveModel& model, const Eigen::VectorXd& x);

// Head decoders for a prediction-net output column.
IntervalParams interval_head(const Eigen::VectorXd& out);
struct GaussianHead {
  double mu;
  double sigma;
};
GaussianHead gaussian_head(const Eigen::VectorXd& out);
Eigen::VectorXd class_probs(const Eigen::VectorXd& logits);

// Per-example quality loss of the prediction head (absolute discrepancy for
// the interval kind, negative log likelihood for density kinds).
double example_loss(const SelectiveModel& model, const Eigen::VectorXd& out, double y);

nlohmann::json model_to_json(const SelectiveModel& model);
SelectiveModel model_from_json(const nlohmann::json& doc);
void save_model(const SelectiveModel& model, const std::string& path);
SelectiveModel load_model(const std::string& path);

}  // namespace selset

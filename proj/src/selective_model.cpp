#include "selset/selective_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/io.hpp"
#include "selset/stats.hpp"

namespace selset {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kIntervalRegression: return "interval-regression";
    case ModelKind::kGaussianRegression: return "gaussian-regression";
    case ModelKind::kCategorical: return "categorical";
  }
  throw std::logic_error("unreachable");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "interval-regression") return ModelKind::kIntervalRegression;
  if (s == "gaussian-regression") return ModelKind::kGaussianRegression;
  if (s == "categorical") return ModelKind::kCategorical;
  throw ConfigError("unknown model kind: " + s);
}

std::string to_string(DecisionMode mode) {
  return mode == DecisionMode::kCoupled ? "coupled" : "separate";
}

DecisionMode decision_mode_from_string(const std::string& s) {
  if (s == "coupled") return DecisionMode::kCoupled;
  if (s == "separate") return DecisionMode::kSeparate;
  throw ConfigError("unknown decision mode: " + s);
}

PredictionSet PredictionSet::interval(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("PredictionSet: inverted interval");
  PredictionSet set;
  set.kind = Kind::kInterval;
  set.lower = lo;
  set.upper = hi;
  return set;
}

PredictionSet PredictionSet::label_set(std::vector<int> labels) {
  std::sort(labels.begin(), labels.end());
  if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
    throw std::invalid_argument("PredictionSet: duplicate labels");
  }
  PredictionSet set;
  set.kind = Kind::kLabels;
  set.labels = std::move(labels);
  return set;
}

bool contains(const PredictionSet& set, double y) {
  if (set.kind == PredictionSet::Kind::kInterval) {
    return y >= set.lower && y <= set.upper;
  }
  if (y != std::floor(y)) {
    throw std::invalid_argument("contains: label set queried with a non-integer outcome");
  }
  const int label = static_cast<int>(y);
  return std::binary_search(set.labels.begin(), set.labels.end(), label);
}

double SelectiveModel::beta() const { return softplus(raw_beta); }

int SelectiveModel::classes() const {
  if (kind != ModelKind::kCategorical) {
    throw std::logic_error("classes() is only defined for categorical models");
  }
  return prediction_spec.output_dim;
}

int SelectiveModel::trainable_count() const {
  int count = param_count(prediction_spec);
  if (decision_mode == DecisionMode::kCoupled) {
    count += 1;
  } else {
    count += param_count(decision_spec);
  }
  return count;
}

Eigen::VectorXd SelectiveModel::trainable() const {
  Eigen::VectorXd flat(trainable_count());
  const Eigen::VectorXd pred = flatten(prediction);
  flat.head(pred.size()) = pred;
  if (decision_mode == DecisionMode::kCoupled) {
    flat[pred.size()] = raw_beta;
  } else {
    flat.tail(flat.size() - pred.size()) = flatten(decision);
  }
  return flat;
}

void SelectiveModel::set_trainable(const Eigen::VectorXd& flat) {
  if (flat.size() != trainable_count()) {
    throw std::invalid_argument("set_trainable: length mismatch");
  }
  const int pred_count = param_count(prediction_spec);
  prediction = unflatten(prediction_spec, flat.head(pred_count));
  if (decision_mode == DecisionMode::kCoupled) {
    raw_beta = flat[pred_count];
  } else {
    decision = unflatten(decision_spec, flat.tail(flat.size() - pred_count));
  }
}

void validate(const SelectiveModel& model) {
  validate(model.prediction_spec);
  validate(model.hyper);
  if (!shapes_match(model.prediction_spec, model.prediction)) {
    throw std::invalid_argument("model: prediction params do not match spec");
  }
  const int out = model.prediction_spec.output_dim;
  if (model.kind != ModelKind::kCategorical && out != 2) {
    throw std::invalid_argument("model: regression heads need exactly 2 outputs");
  }
  if (model.kind == ModelKind::kCategorical && out < 2) {
    throw std::invalid_argument("model: categorical head needs at least 2 classes");
  }
  if (model.decision_mode == DecisionMode::kSeparate) {
    validate(model.decision_spec);
    if (model.decision_spec.output_dim != 1) {
      throw std::invalid_argument("model: decision net must have a scalar output");
    }
    if (model.decision_spec.input_dim != model.prediction_spec.input_dim) {
      throw std::invalid_argument("model: decision/prediction input dims differ");
    }
    if (!shapes_match(model.decision_spec, model.decision)) {
      throw std::invalid_argument("model: decision params do not match spec");
    }
  }
  if (model.preprocessing &&
      model.preprocessing->components() != model.prediction_spec.input_dim) {
    throw std::invalid_argument("model: preprocessing output dim does not match network input");
  }
}

Eigen::VectorXd to_model_space(const SelectiveModel& model, const Eigen::VectorXd& x_raw) {
  return model.preprocessing ? whiten_apply(*model.preprocessing, x_raw) : x_raw;
}

Eigen::MatrixXd to_model_columns(const SelectiveModel& model, const Eigen::MatrixXd& X_raw) {
  if (model.preprocessing) {
    return whiten_apply(*model.preprocessing, X_raw).transpose();
  }
  return X_raw.transpose();
}

IntervalParams interval_head(const Eigen::VectorXd& out) {
  return IntervalParams{out[0], softplus(out[1])};
}

GaussianHead gaussian_head(const Eigen::VectorXd& out) {
  return GaussianHead{out[0], softplus(out[1])};
}

Eigen::VectorXd class_probs(const Eigen::VectorXd& logits) { return softmax(logits); }

namespace {

double uncertainty_from_output(const SelectiveModel& model, const Eigen::VectorXd& out) {
  switch (model.kind) {
    case ModelKind::kIntervalRegression:
      return model.hyper.alpha * softplus(out[1]);
    case ModelKind::kGaussianRegression:
      return entropy_gaussian(softplus(out[1]));
    case ModelKind::kCategorical:
      return entropy_categorical(class_probs(out));
  }
  throw std::logic_error("unreachable");
}

}  // namespace

double uncertainty(const SelectiveModel& model, const Eigen::VectorXd& x) {
  return uncertainty_from_output(model, forward(model.prediction, x));
}

Eigen::VectorXd uncertainty_batch(const SelectiveModel& model,
                                  const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  const Eigen::MatrixXd outs = forward_batch(model.prediction, inputs);
  Eigen::VectorXd u(inputs.cols());
  for (int i = 0; i < outs.cols(); ++i) {
    u[i] = uncertainty_from_output(model, outs.col(i));
  }
  return u;
}

double accept_prob(const SelectiveModel& model, const Eigen::VectorXd& x) {
  if (model.decision_mode == DecisionMode::kCoupled) {
    return sigmoid(-model.beta() * (uncertainty(model, x) - model.hyper.delta));
  }
  return sigmoid(forward(model.decision, x)[0]);
}

Eigen::VectorXd accept_prob_batch(const SelectiveModel& model,
                                  const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  Eigen::VectorXd psi(inputs.cols());
  if (model.decision_mode == DecisionMode::kCoupled) {
    const Eigen::VectorXd u = uncertainty_batch(model, inputs);
    const double beta = model.beta();
    for (int i = 0; i < psi.size(); ++i) {
      psi[i] = sigmoid(-beta * (u[i] - model.hyper.delta));
    }
  } else {
    const Eigen::MatrixXd logits = forward_batch(model.decision, inputs);
    for (int i = 0; i < psi.size(); ++i) psi[i] = sigmoid(logits(0, i));
  }
  return psi;
}

PredictionSet prediction_set(const SelectiveModel& model, const Eigen::VectorXd& x, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("prediction_set: alpha outside (0,1)");
  }
  const Eigen::VectorXd out = forward(model.prediction, x);
  switch (model.kind) {
    case ModelKind::kIntervalRegression: {
      const IntervalParams iv = interval_head(out);
      return PredictionSet::interval(iv.center - iv.radius, iv.center + iv.radius);
    }
    case ModelKind::kGaussianRegression: {
      const GaussianHead head = gaussian_head(out);
      const double z = normal_quantile(1.0 - alpha / 2.0);
      return PredictionSet::interval(head.mu - z * head.sigma, head.mu + z * head.sigma);
    }
    case ModelKind::kCategorical: {
      const Eigen::VectorXd probs = class_probs(out);
      std::vector<int> order(probs.size());
      std::iota(order.begin(), order.end(), 0);
      // Descending probability, ties broken by lower class index.
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return probs[a] > probs[b]; });
      std::vector<int> labels;
      double mass = 0.0;
      const double target = 1.0 - alpha;
      for (int idx : order) {
        labels.push_back(idx);
        mass += probs[idx];
        if (mass >= target - 1e-9) break;  // slack for accumulated rounding
      }
      return PredictionSet::label_set(std::move(labels));
    }
  }
  throw std::logic_error("unreachable");
}

PredictionSet prediction_set(const SelectiveModel& model, const Eigen::VectorXd& x) {
  return prediction_set(model, x, model.hyper.alpha);
}

double example_loss(const SelectiveModel& model, const Eigen::VectorXd& out, double y) {
  switch (model.kind) {
    case ModelKind::kIntervalRegression:
      return abs_discrepancy(model.hyper.alpha, interval_head(out), y);
    case ModelKind::kGaussianRegression: {
      const GaussianHead head = gaussian_head(out);
      return gaussian_nll(head.mu, head.sigma, y);
    }
    case ModelKind::kCategorical: {
      const Eigen::VectorXd logp = log_softmax(out);
      const int label = static_cast<int>(y);
      if (label < 0 || label >= out.size()) {
        throw std::invalid_argument("example_loss: label out of range");
      }
      return std::min(-logp[label], kNllCap);
    }
  }
  throw std::logic_error("unreachable");
}

namespace {

nlohmann::json hyper_to_json(const ObjectiveHyper& hyper) {
  return nlohmann::json{{"alpha", hyper.alpha},
                        {"delta", hyper.delta},
                        {"lambda", hyper.lambda},
                        {"gamma", hyper.gamma},
                        {"t_alpha", hyper.t_alpha}};
}

ObjectiveHyper hyper_from_json(const nlohmann::json& doc) {
  ObjectiveHyper hyper;
  hyper.alpha = doc.at("alpha").get<double>();
  hyper.delta = doc.at("delta").get<double>();
  hyper.lambda = doc.at("lambda").get<double>();
  hyper.gamma = doc.at("gamma").get<double>();
  hyper.t_alpha = doc.at("t_alpha").get<double>();
  return hyper;
}

}  // namespace

nlohmann::json model_to_json(const SelectiveModel& model) {
  validate(model);
  nlohmann::json doc{
      {"version", 1},
      {"kind", to_string(model.kind)},
      {"decision_mode", to_string(model.decision_mode)},
      {"hyper", hyper_to_json(model.hyper)},
      {"prediction", mlp_to_json(model.prediction_spec, model.prediction)},
  };
  if (model.decision_mode == DecisionMode::kCoupled) {
    doc["raw_beta"] = model.raw_beta;
  } else {
    doc["decision"] = mlp_to_json(model.decision_spec, model.decision);
  }
  doc["preprocessing"] =
      model.preprocessing ? whiten_to_json(*model.preprocessing) : nlohmann::json(nullptr);
  return doc;
}

SelectiveModel model_from_json(const nlohmann::json& doc) {
  if (doc.at("version").get<int>() != 1) {
    throw ConfigError("model document: unsupported version");
  }
  SelectiveModel model;
  model.kind = model_kind_from_string(doc.at("kind").get<std::string>());
  model.decision_mode = decision_mode_from_string(doc.at("decision_mode").get<std::string>());
  model.hyper = hyper_from_json(doc.at("hyper"));
  mlp_from_json(doc.at("prediction"), model.prediction_spec, model.prediction);
  if (model.decision_mode == DecisionMode::kCoupled) {
    model.raw_beta = doc.at("raw_beta").get<double>();
  } else {
    mlp_from_json(doc.at("decision"), model.decision_spec, model.decision);
  }
  if (!doc.at("preprocessing").is_null()) {
    model.preprocessing = whiten_from_json(doc.at("preprocessing"));
  }
  validate(model);
  return model;
}

void save_model(const SelectiveModel& model, const std::string& path) {
  atomic_write_text(path, model_to_json(model).dump(2) + "\n");
}

SelectiveModel load_model(const std::string& path) {
  return model_from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace selset

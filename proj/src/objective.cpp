#include "selset/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "selset/stats.hpp"

namespace selset {

namespace {

// Per-column head quantities for one prediction-net output: the example
// loss, the uncertainty score, and their gradients w.r.t. the raw outputs.
struct HeadEval {
  double loss = 0.0;
  double uncertainty = 0.0;
  Eigen::VectorXd dloss;
  Eigen::VectorXd duncertainty;
};

HeadEval eval_head(const SelectiveModel& model, const ObjectiveHyper& hyper,
                   const Eigen::VectorXd& out, double y, bool with_loss) {
  HeadEval ev;
  ev.dloss = Eigen::VectorXd::Zero(out.size());
  ev.duncertainty = Eigen::VectorXd::Zero(out.size());
  switch (model.kind) {
    case ModelKind::kIntervalRegression: {
      const double center = out[0];
      const double radius = softplus(out[1]);
      const double dradius = sigmoid(out[1]);
      ev.uncertainty = hyper.alpha * radius;
      ev.duncertainty[1] = hyper.alpha * dradius;
      if (with_loss) {
        const double below = (center - radius) - y;  // shortfall below the lower end
        const double above = y - (center + radius);
        const double lo_active = below > 0.0 ? 1.0 : 0.0;
        const double hi_active = above > 0.0 ? 1.0 : 0.0;
        ev.loss = hyper.alpha * radius + std::max(below, 0.0) + std::max(above, 0.0);
        ev.dloss[0] = lo_active - hi_active;
        ev.dloss[1] = (hyper.alpha - lo_active - hi_active) * dradius;
      }
      return ev;
    }
    case ModelKind::kGaussianRegression: {
      const double mu = out[0];
      const double sigma = softplus(out[1]);
      const double dsigma = sigmoid(out[1]);
      ev.uncertainty = entropy_gaussian(sigma);
      ev.duncertainty[1] = dsigma / sigma;
      if (with_loss) {
        const double resid = y - mu;
        ev.loss =
            0.5 * std::log(2.0 * M_PI * sigma * sigma) + 0.5 * resid * resid / (sigma * sigma);
        ev.dloss[0] = -resid / (sigma * sigma);
        ev.dloss[1] = (1.0 / sigma - resid * resid / (sigma * sigma * sigma)) * dsigma;
      }
      return ev;
    }
    case ModelKind::kCategorical: {
      const Eigen::VectorXd logp = log_softmax(out);
      const Eigen::VectorXd probs = logp.array().exp();
      ev.uncertainty = entropy_categorical(probs);
      for (int k = 0; k < out.size(); ++k) {
        ev.duncertainty[k] =
            probs[k] > 0.0 ? -probs[k] * (std::log(probs[k]) + ev.uncertainty) : 0.0;
      }
      if (with_loss) {
        const int label = static_cast<int>(y);
        if (label < 0 || label >= out.size()) {
          throw std::invalid_argument("objective: label out of range");
        }
        if (-logp[label] >= kNllCap) {
          ev.loss = kNllCap;  // capped region is flat: no gradient
        } else {
          ev.loss = -logp[label];
          ev.dloss = probs;
          ev.dloss[label] -= 1.0;
        }
      }
      return ev;
    }
  }
  throw std::logic_error("unreachable");
}

struct Evaluation {
  ObjectiveParts parts;
  std::vector<HeadEval> head;      // per data column
  Eigen::VectorXd psi;             // per data column
  std::vector<HeadEval> pen_head;  // per penalty column (coupled mode)
  Eigen::VectorXd pen_psi;
  ForwardCache pred_cache;
  ForwardCache dec_cache;
  ForwardCache pen_pred_cache;
  ForwardCache pen_dec_cache;
  Eigen::MatrixXd pred_out;
  Eigen::MatrixXd dec_out;
  Eigen::MatrixXd pen_pred_out;
  Eigen::MatrixXd pen_dec_out;
};

Evaluation evaluate(const SelectiveModel& model,
                    const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                    const Eigen::Ref<const Eigen::VectorXd>& y, const ObjectiveHyper& hyper,
                    const Box& box, const Eigen::Ref<const Eigen::MatrixXd>& penalty_points,
                    bool need_caches) {
  const int n = static_cast<int>(inputs.cols());
  if (n == 0) throw std::invalid_argument("objective: empty batch");
  if (y.size() != n) throw std::invalid_argument("objective: batch size mismatch");
  validate(hyper);

  Evaluation ev;
  const bool coupled = model.decision_mode == DecisionMode::kCoupled;
  const double beta = model.beta();

  ev.pred_out = need_caches ? forward_batch(model.prediction, inputs, ev.pred_cache)
                            : forward_batch(model.prediction, inputs);
  ev.head.reserve(n);
  for (int i = 0; i < n; ++i) {
    ev.head.push_back(eval_head(model, hyper, ev.pred_out.col(i), y[i], true));
  }
  ev.psi.resize(n);
  if (coupled) {
    for (int i = 0; i < n; ++i) {
      ev.psi[i] = sigmoid(-beta * (ev.head[i].uncertainty - hyper.delta));
    }
  } else {
    ev.dec_out = need_caches ? forward_batch(model.decision, inputs, ev.dec_cache)
                             : forward_batch(model.decision, inputs);
    for (int i = 0; i < n; ++i) ev.psi[i] = sigmoid(ev.dec_out(0, i));
  }

  double data = 0.0;
  double plain = 0.0;
  for (int i = 0; i < n; ++i) {
    data += ev.head[i].loss * ev.psi[i] + hyper.delta * (1.0 - ev.psi[i]);
    plain += ev.head[i].loss;
  }
  ev.parts.data_term = data / n;
  ev.parts.augmentation_term = hyper.gamma * plain / n;
  ev.parts.mean_accept = ev.psi.mean();

  const int m = static_cast<int>(penalty_points.cols());
  if (m > 0) {
    ev.pen_psi.resize(m);
    if (coupled) {
      ev.pen_pred_out = need_caches
                            ? forward_batch(model.prediction, penalty_points, ev.pen_pred_cache)
                            : forward_batch(model.prediction, penalty_points);
      ev.pen_head.reserve(m);
      for (int s = 0; s < m; ++s) {
        ev.pen_head.push_back(eval_head(model, hyper, ev.pen_pred_out.col(s), 0.0, false));
        ev.pen_psi[s] = sigmoid(-beta * (ev.pen_head[s].uncertainty - hyper.delta));
      }
    } else {
      ev.pen_dec_out = need_caches
                           ? forward_batch(model.decision, penalty_points, ev.pen_dec_cache)
                           : forward_batch(model.decision, penalty_points);
      for (int s = 0; s < m; ++s) ev.pen_psi[s] = sigmoid(ev.pen_dec_out(0, s));
    }
    ev.parts.penalty_integral = box.volume() * ev.pen_psi.mean();
  }
  ev.parts.penalty_term = hyper.lambda * ev.parts.penalty_integral;
  ev.parts.total = ev.parts.data_term + ev.parts.penalty_term + ev.parts.augmentation_term;
  return ev;
}

}  // namespace

ObjectiveParts objective_parts(const SelectiveModel& model,
                               const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                               const Eigen::Ref<const Eigen::VectorXd>& y,
                               const ObjectiveHyper& hyper, const Box& box,
                               const Eigen::Ref<const Eigen::MatrixXd>& penalty_points) {
  return evaluate(model, inputs, y, hyper, box, penalty_points, false).parts;
}

std::pair<ObjectiveParts, Eigen::VectorXd> objective_with_grad(
    const SelectiveModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
    const Eigen::Ref<const Eigen::VectorXd>& y, const ObjectiveHyper& hyper, const Box& box,
    const Eigen::Ref<const Eigen::MatrixXd>& penalty_points) {
  Evaluation ev = evaluate(model, inputs, y, hyper, box, penalty_points, true);
  const int n = static_cast<int>(inputs.cols());
  const int m = static_cast<int>(penalty_points.cols());
  const bool coupled = model.decision_mode == DecisionMode::kCoupled;
  const double beta = model.beta();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double pen_coef = m > 0 ? hyper.lambda * box.volume() / static_cast<double>(m) : 0.0;

  // Upstream into the prediction net at the data columns:
  //   (psi_i + gamma)/n * dloss_i  +  (loss_i - delta)/n * dpsi_i/d out.
  Eigen::MatrixXd up_pred =
      Eigen::MatrixXd::Zero(model.prediction_spec.output_dim, n);
  double raw_beta_grad = 0.0;
  const double dbeta_draw = sigmoid(model.raw_beta);
  for (int i = 0; i < n; ++i) {
    const HeadEval& h = ev.head[i];
    const double psi = ev.psi[i];
    up_pred.col(i) = (psi + hyper.gamma) * inv_n * h.dloss;
    if (coupled) {
      const double dpsi_du = -beta * psi * (1.0 - psi);
      up_pred.col(i) += (h.loss - hyper.delta) * inv_n * dpsi_du * h.duncertainty;
      const double dpsi_dbeta = -(h.uncertainty - hyper.delta) * psi * (1.0 - psi);
      raw_beta_grad += (h.loss - hyper.delta) * inv_n * dpsi_dbeta * dbeta_draw;
    }
  }
  MlpParams pred_grad = backward_batch(model.prediction, ev.pred_cache, up_pred);

  MlpParams dec_grad;
  if (!coupled) {
    Eigen::MatrixXd up_dec(1, n);
    for (int i = 0; i < n; ++i) {
      const double psi = ev.psi[i];
      up_dec(0, i) = (ev.head[i].loss - hyper.delta) * inv_n * psi * (1.0 - psi);
    }
    dec_grad = backward_batch(model.decision, ev.dec_cache, up_dec);
  }

  if (m > 0 && pen_coef != 0.0) {
    if (coupled) {
      Eigen::MatrixXd up_pen(model.prediction_spec.output_dim, m);
      for (int s = 0; s < m; ++s) {
        const HeadEval& h = ev.pen_head[s];
        const double psi = ev.pen_psi[s];
        const double dpsi_du = -beta * psi * (1.0 - psi);
        up_pen.col(s) = pen_coef * dpsi_du * h.duncertainty;
        const double dpsi_dbeta = -(h.uncertainty - hyper.delta) * psi * (1.0 - psi);
        raw_beta_grad += pen_coef * dpsi_dbeta * dbeta_draw;
      }
      MlpParams pen_grad = backward_batch(model.prediction, ev.pen_pred_cache, up_pen);
      add_scaled(pred_grad, pen_grad, 1.0);
    } else {
      Eigen::MatrixXd up_pen(1, m);
      for (int s = 0; s < m; ++s) {
        const double psi = ev.pen_psi[s];
        up_pen(0, s) = pen_coef * psi * (1.0 - psi);
      }
      MlpParams pen_grad = backward_batch(model.decision, ev.pen_dec_cache, up_pen);
      add_scaled(dec_grad, pen_grad, 1.0);
    }
  }

  Eigen::VectorXd flat(model.trainable_count());
  const Eigen::VectorXd pred_flat = flatten(pred_grad);
  flat.head(pred_flat.size()) = pred_flat;
  if (coupled) {
    flat[pred_flat.size()] = raw_beta_grad;
  } else {
    flat.tail(flat.size() - pred_flat.size()) = flatten(dec_grad);
  }
  return {ev.parts, std::move(flat)};
}

ObjectiveParts seeded_objective(const SelectiveModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const Eigen::Ref<const Eigen::VectorXd>& y,
                                const ObjectiveHyper& hyper, const Box& box, int m,
                                std::uint64_t seed) {
  if (m > 0) {
    const Eigen::MatrixXd points = sample_uniform(box, m, seed);
    return objective_parts(model, inputs, y, hyper, box, points);
  }
  return objective_parts(model, inputs, y, hyper, box, Eigen::MatrixXd(box.dim(), 0));
}

double truncated_data_term(const SelectiveModel& model,
                           const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           const Eigen::Ref<const Eigen::VectorXd>& y,
                           const ObjectiveHyper& hyper) {
  Box dummy{Eigen::VectorXd::Zero(inputs.rows()), Eigen::VectorXd::Ones(inputs.rows())};
  return objective_parts(model, inputs, y, hyper, dummy, Eigen::MatrixXd(inputs.rows(), 0))
      .data_term;
}

}  // namespace selset

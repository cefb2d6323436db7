#include "selset/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "selset/errors.hpp"
#include "selset/rng.hpp"
#include "selset/stats.hpp"

namespace selset {

void validate(const ObjectiveHyper& hyper) {
  if (!(hyper.alpha > 0.0 && hyper.alpha < 1.0)) {
    throw std::invalid_argument("hyper: alpha must lie in (0,1)");
  }
  if (!(hyper.delta >= 0.0)) throw std::invalid_argument("hyper: delta must be >= 0");
  if (!(hyper.lambda >= 0.0)) throw std::invalid_argument("hyper: lambda must be >= 0");
  if (!(hyper.gamma >= 0.0)) throw std::invalid_argument("hyper: gamma must be >= 0");
  if (!(hyper.t_alpha > 0.0)) throw std::invalid_argument("hyper: t_alpha must be > 0");
}

double abs_discrepancy(double alpha, const IntervalParams& interval, double y) {
  const double lo = interval.center - interval.radius;
  const double hi = interval.center + interval.radius;
  return alpha * interval.radius + std::max(lo - y, 0.0) + std::max(y - hi, 0.0);
}

double step_loss(double set_size, bool contains_y, double t_alpha) {
  if (!(t_alpha > 0.0)) throw std::invalid_argument("step_loss: t_alpha must be > 0");
  return set_size + (contains_y ? 0.0 : 1.0 / t_alpha);
}

double gaussian_nll(double mu, double sigma, double y) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_nll: sigma must be > 0");
  const double z = (y - mu) / sigma;
  return 0.5 * std::log(2.0 * M_PI * sigma * sigma) + 0.5 * z * z;
}

double categorical_nll(const Eigen::VectorXd& probs, int label) {
  if (label < 0 || label >= probs.size()) {
    throw std::invalid_argument("categorical_nll: label out of range");
  }
  if (probs.minCoeff() < 0.0 || std::abs(probs.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("categorical_nll: not a probability vector");
  }
  const double p = probs[label];
  if (p < std::exp(-kNllCap)) return kNllCap;
  return -std::log(p);
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  return logits.array() - log_sum_exp(logits);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  return log_softmax(logits).array().exp();
}

double entropy_gaussian(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("entropy_gaussian: sigma must be > 0");
  return 0.5 * std::log(2.0 * M_E * M_PI * sigma * sigma);
}

double entropy_categorical(const Eigen::VectorXd& probs) {
  double h = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) h -= probs[i] * std::log(probs[i]);
  }
  return h;
}

double Box::volume() const {
  double v = 1.0;
  for (int d = 0; d < dim(); ++d) v *= (hi[d] - lo[d]);
  return v;
}

bool Box::contains(const Eigen::VectorXd& x) const {
  for (int d = 0; d < dim(); ++d) {
    if (x[d] < lo[d] || x[d] > hi[d]) return false;
  }
  return true;
}

Eigen::MatrixXd sample_uniform(const Box& box, int m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("sample_uniform: m must be >= 1");
  if (!(box.volume() > 0.0)) throw std::invalid_argument("sample_uniform: box has zero volume");
  Rng rng(seed);
  Eigen::MatrixXd points(box.dim(), m);
  for (int s = 0; s < m; ++s) {
    for (int d = 0; d < box.dim(); ++d) {
      points(d, s) = rng.uniform(box.lo[d], box.hi[d]);
    }
  }
  return points;
}

double acceptance_penalty_mc(const std::function<double(const Eigen::VectorXd&)>& accept_prob,
                             const Box& box, int m, std::uint64_t seed) {
  const Eigen::MatrixXd points = sample_uniform(box, m, seed);
  double mean = 0.0;
  for (int s = 0; s < m; ++s) {
    mean += accept_prob(points.col(s));
  }
  mean /= static_cast<double>(m);
  return box.volume() * mean;
}

}  // namespace selset

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

namespace selset {

// Symmetric interval with center and radius, closed on both ends.
struct IntervalParams {
  double center = 0.0;
  double radius = 0.0;
};

// Hyperparameters of the selective training objective.
//   alpha   target miscoverage of the prediction sets
//   delta   cost of abstaining (also the uncertainty gate in coupled mode)
//   lambda  weight of the uniform acceptance penalty
//   gamma   weight of the untruncated empirical-loss augmentation
//   t_alpha threshold of the step loss (used by tests only)
struct ObjectiveHyper {
  double alpha = 0.1;
  double delta = 1.0;
  double lambda = 0.0;
  double gamma = 0.5;
  double t_alpha = 0.5;
};

void validate(const ObjectiveHyper& hyper);

// Interval quality loss: alpha * radius + distance of y outside the interval.
// Its conditional minimizer has endpoints at the alpha/2 and 1-alpha/2
// quantiles of y.
double abs_discrepancy(double alpha, const IntervalParams& interval, double y);

// Set-size loss with a fixed miss penalty: |h| + (1/t_alpha) * 1{y not in h}.
double step_loss(double set_size, bool contains_y, double t_alpha);

// Negative log density of N(mu, sigma^2) at y. May be negative.
double gaussian_nll(double mu, double sigma, double y);

// -log(probs[label]); capped at kNllCap so underflowing class probabilities
// keep the objective finite.
inline constexpr double kNllCap = 50.0;
double categorical_nll(const Eigen::VectorXd& probs, int label);

// Stable softmax and its log.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

// Differential entropy of N(mu, sigma^2): 0.5*log(2*e*pi*sigma^2). Negative
// for small sigma.
double entropy_gaussian(double sigma);

// Shannon entropy, 0*log(0) = 0.
double entropy_categorical(const Eigen::VectorXd& probs);

// Axis-aligned box in input space; the region the acceptance penalty
// integrates over.
struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  int dim() const { return static_cast<int>(lo.size()); }
  double volume() const;
  bool contains(const Eigen::VectorXd& x) const;
};

// m uniform points in the box, one per column. Deterministic given seed.
Eigen::MatrixXd sample_uniform(const Box& box, int m, std::uint64_t seed);

// volume(box) * mean of accept_prob over m uniform points: an unbiased
// Monte-Carlo estimate of the integral of the acceptance probability.
double acceptance_penalty_mc(const std::function<double(const Eigen::VectorXd&)>& accept_prob,
                             const Box& box, int m, std::uint64_t seed);

}  // namespace selset

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>

#include "selset/losses.hpp"
#include "selset/selective_model.hpp"

namespace selset {

// Decomposition of the selective training objective over a batch:
//   total = data_term + penalty_term + augmentation_term
//   data_term          mean of loss_i*psi_i + delta*(1 - psi_i)
//   penalty_integral   Monte-Carlo estimate of the integral of psi over the
//                      admissible box (volume times mean acceptance at the
//                      penalty points); penalty_term = lambda * integral
//   augmentation_term  gamma times the mean untruncated loss
struct ObjectiveParts {
  double total = 0.0;
  double data_term = 0.0;
  double penalty_term = 0.0;
  double penalty_integral = 0.0;
  double augmentation_term = 0.0;
  double mean_accept = 0.0;
};

// inputs: observations in columns, already in model space. penalty_points:
// frozen uniform samples drawn from box (zero columns disable the penalty
// estimate). hyper overrides the model's stored hyperparameters so that
// lambda/delta sweeps need not mutate the model.
ObjectiveParts objective_parts(const SelectiveModel& model,
                               const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                               const Eigen::Ref<const Eigen::VectorXd>& y,
                               const ObjectiveHyper& hyper, const Box& box,
                               const Eigen::Ref<const Eigen::MatrixXd>& penalty_points);

// Same value plus the exact gradient with respect to the flat trainable
// vector (prediction net, then raw beta or the decision net).
std::pair<ObjectiveParts, Eigen::VectorXd> objective_with_grad(
    const SelectiveModel& model, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
    const Eigen::Ref<const Eigen::VectorXd>& y, const ObjectiveHyper& hyper, const Box& box,
    const Eigen::Ref<const Eigen::MatrixXd>& penalty_points);

// Convenience wrapper that draws m penalty samples inside the box.
ObjectiveParts seeded_objective(const SelectiveModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const Eigen::Ref<const Eigen::VectorXd>& y,
                                const ObjectiveHyper& hyper, const Box& box, int m,
                                std::uint64_t seed);

// Held-out score used for lambda selection: the truncated data term alone.
double truncated_data_term(const SelectiveModel& model,
                           const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                           const Eigen::Ref<const Eigen::VectorXd>& y,
                           const ObjectiveHyper& hyper);

}  // namespace selset

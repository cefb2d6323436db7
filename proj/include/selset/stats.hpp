#pragma once

#include <Eigen/Core>
#include <vector>

namespace selset {

// Numerically stable logistic function.
double sigmoid(double x);

// softplus(x) = log(1 + exp(x)), stable for large |x|.
double softplus(double x);

// Inverse of softplus on (0, inf).
double softplus_inv(double y);

// log(sum(exp(v))) without overflow.
double log_sum_exp(const Eigen::VectorXd& v);

// Standard normal CDF and its inverse. The quantile is accurate to close to
// machine precision (rational initial guess refined by Newton steps).
double normal_cdf(double x);
double normal_quantile(double p);

// Type-7 (linear interpolation) quantile of an unsorted sample.
double quantile(std::vector<double> values, double q);

// Inter-quartile range, type-7 quantiles.
double iqr(const std::vector<double>& values);

}  // namespace selset

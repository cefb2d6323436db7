#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace selset {

enum class OutcomeKind { kReal, kClass };

std::string to_string(OutcomeKind kind);
OutcomeKind outcome_kind_from_string(const std::string& s);

// Ground truth of a synthetic 2-D generator: conditional mean and standard
// deviation of the outcome, and the input density.
struct GeneratorTruth {
  std::function<double(double, double)> mean;
  std::function<double(double, double)> stddev;
  std::function<double(double, double)> density;
};

struct Dataset {
  Eigen::MatrixXd X;  // rows are observations
  Eigen::VectorXd y;
  OutcomeKind outcome_kind = OutcomeKind::kReal;
  std::vector<std::string> feature_names;
  std::optional<GeneratorTruth> truth;

  int n() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
};

void validate(const Dataset& data);

// X uniform on [-3,3]^2; Y | X ~ N(0, sigma(x)^2) with the piecewise-linear
// noise scale sigma(x) = 0.3 + max(0, x1). Conditional entropy rises with x1.
Dataset gen_entropy_sim(int n, std::uint64_t seed);

// X standard bivariate normal; Y | X ~ N(0, sigma^2) with constant sigma, so
// conditional entropy is flat and only the input density varies.
struct DensitySimOptions {
  double sigma = 3.5;
};
Dataset gen_density_sim(int n, std::uint64_t seed, const DensitySimOptions& opt = {});

// X uniform on [-3,3]^2; E[Y|X=x] = x1 + x2 plus a quadratic bump
// 4*(1-x1^2)*(1-x2^2) on the patch [-1,1]^2 (continuous on the boundary);
// constant noise scale 0.3.
Dataset gen_misspec_sim(int n, std::uint64_t seed);

bool in_misspec_patch(double x1, double x2);

// PCA plus whitening: center, rotate to principal axes, rescale the kept
// components to unit sample variance. Components are kept until the
// cumulative explained variance reaches var_fraction.
struct WhitenTransform {
  Eigen::VectorXd mean;
  Eigen::MatrixXd axes;    // input_dim x kept, orthonormal columns
  Eigen::VectorXd scales;  // per-component standard deviations

  int input_dim() const { return static_cast<int>(mean.size()); }
  int components() const { return static_cast<int>(scales.size()); }
};

WhitenTransform pca_whiten_fit(const Eigen::MatrixXd& X, double var_fraction = 0.99);
Eigen::MatrixXd whiten_apply(const WhitenTransform& transform, const Eigen::MatrixXd& X);
Eigen::VectorXd whiten_apply(const WhitenTransform& transform, const Eigen::VectorXd& x);

nlohmann::json whiten_to_json(const WhitenTransform& transform);
WhitenTransform whiten_from_json(const nlohmann::json& doc);

// Comma-separated ingestion: header required, '.' decimal separator, all
// features numeric. Empty feature list means "every column except the
// outcome". Malformed rows raise ConfigError naming the row and column.
struct CsvSchema {
  std::vector<std::string> feature_columns;
  std::string outcome_column;
  OutcomeKind outcome_kind = OutcomeKind::kReal;
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Dumps features plus outcome in the same format load_csv reads.
std::string dataset_to_csv(const Dataset& data);

}  // namespace selset

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

namespace selset {

// Comparator abstention rule: accept iff the model's uncertainty score is
// strictly below delta.
bool threshold_decide(double model_uncertainty, double delta);

struct IsolationForestParams {
  int n_trees = 100;
  int subsample = 256;  // capped at n during fit
  std::uint64_t seed = 0;
};

// Random axis-parallel split trees; anomaly score in (0,1), higher means
// more isolated.
class IsolationForest {
 public:
  static IsolationForest fit(const Eigen::MatrixXd& X, const IsolationForestParams& params);

  double score(const Eigen::VectorXd& x) const;
  Eigen::VectorXd score_rows(const Eigen::MatrixXd& X) const;

  int tree_count() const { return static_cast<int>(trees_.size()); }
  int subsample_size() const { return subsample_; }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double cut = 0.0;
    int left = -1;
    int right = -1;
    int size = 0;  // leaf: number of subsampled points that reached it
  };
  struct Tree {
    std::vector<Node> nodes;
  };

  double path_length(const Tree& tree, const Eigen::VectorXd& x) const;

  std::vector<Tree> trees_;
  int subsample_ = 0;
  int dim_ = 0;
};

// Average unsuccessful-search path length of a binary search tree with n
// points; the isolation-forest score normalizer.
double average_path_length(int n);

// Smallest score such that roughly a (1 - outlier_quantile) fraction of the
// training rows score at or above it; used as the rejection cutoff.
double score_threshold(const IsolationForest& forest, const Eigen::MatrixXd& X,
                       double outlier_quantile);

// Accept iff the uncertainty is below delta AND the outlier score is below
// the threshold; the acceptance set is a subset of the plain threshold rule.
bool combined_decide(double model_uncertainty, double delta, double score,
                     double threshold_score);

struct ThresholdPolicy {
  double delta = 0.0;
  std::optional<double> outlier_quantile;  // absent: no outlier screen
};

}  // namespace selset

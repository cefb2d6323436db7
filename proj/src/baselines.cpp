#include "selset/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "selset/rng.hpp"
#include "selset/stats.hpp"

namespace selset {

bool threshold_decide(double model_uncertainty, double delta) {
  return model_uncertainty < delta;
}

double average_path_length(int n) {
  if (n <= 1) return 0.0;
  if (n == 2) return 1.0;
  const double h = std::log(static_cast<double>(n - 1)) + 0.5772156649015329;
  return 2.0 * h - 2.0 * static_cast<double>(n - 1) / static_cast<double>(n);
}

IsolationForest IsolationForest::fit(const Eigen::MatrixXd& X,
                                     const IsolationForestParams& params) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n < 2) throw std::invalid_argument("iforest_fit: need at least 2 observations");
  if (params.n_trees < 1) throw std::invalid_argument("iforest_fit: need at least 1 tree");
  bool any_range = false;
  for (int d = 0; d < p; ++d) {
    if (X.col(d).maxCoeff() > X.col(d).minCoeff()) {
      any_range = true;
      break;
    }
  }
  if (!any_range) throw std::invalid_argument("iforest_fit: all features are constant");

  IsolationForest forest;
  forest.dim_ = p;
  forest.subsample_ = std::min(params.subsample, n);
  if (forest.subsample_ < 2) throw std::invalid_argument("iforest_fit: subsample too small");
  const int depth_cap =
      static_cast<int>(std::ceil(std::log2(static_cast<double>(forest.subsample_))));

  struct Item {
    std::vector<int> rows;
    int depth;
    int node;
  };

  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(mix_seed(params.seed, 0x150f0ULL, static_cast<std::uint64_t>(t)));
    // Subsample without replacement over the given row order.
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    rng.shuffle(rows);
    rows.resize(forest.subsample_);

    Tree tree;
    tree.nodes.push_back(Node{});
    std::vector<Item> stack;
    stack.push_back(Item{std::move(rows), 0, 0});
    while (!stack.empty()) {
      Item item = std::move(stack.back());
      stack.pop_back();
      const int count = static_cast<int>(item.rows.size());

      // Features with spread at this node; zero-range features are skipped.
      std::vector<int> splittable;
      std::vector<std::pair<double, double>> ranges(p);
      if (count > 1 && item.depth < depth_cap) {
        for (int d = 0; d < p; ++d) {
          double lo = X(item.rows[0], d);
          double hi = lo;
          for (int r : item.rows) {
            lo = std::min(lo, X(r, d));
            hi = std::max(hi, X(r, d));
          }
          ranges[d] = {lo, hi};
          if (hi > lo) splittable.push_back(d);
        }
      }
      if (count <= 1 || item.depth >= depth_cap || splittable.empty()) {
        tree.nodes[item.node].feature = -1;
        tree.nodes[item.node].size = count;
        continue;
      }

      const int d = splittable[rng.below(splittable.size())];
      const double cut = rng.uniform(ranges[d].first, ranges[d].second);
      std::vector<int> left;
      std::vector<int> right;
      for (int r : item.rows) {
        (X(r, d) < cut ? left : right).push_back(r);
      }
      if (left.empty() || right.empty()) {
        // The uniform draw landed on the boundary; stop splitting here.
        tree.nodes[item.node].feature = -1;
        tree.nodes[item.node].size = count;
        continue;
      }
      const int left_idx = static_cast<int>(tree.nodes.size());
      const int right_idx = left_idx + 1;
      tree.nodes.push_back(Node{});
      tree.nodes.push_back(Node{});
      tree.nodes[item.node].feature = d;
      tree.nodes[item.node].cut = cut;
      tree.nodes[item.node].left = left_idx;
      tree.nodes[item.node].right = right_idx;
      stack.push_back(Item{std::move(left), item.depth + 1, left_idx});
      stack.push_back(Item{std::move(right), item.depth + 1, right_idx});
    }
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

double IsolationForest::path_length(const Tree& tree, const Eigen::VectorXd& x) const {
  int idx = 0;
  double depth = 0.0;
  while (tree.nodes[idx].feature >= 0) {
    const Node& node = tree.nodes[idx];
    idx = x[node.feature] < node.cut ? node.left : node.right;
    depth += 1.0;
  }
  return depth + average_path_length(tree.nodes[idx].size);
}

double IsolationForest::score(const Eigen::VectorXd& x) const {
  if (x.size() != dim_) throw std::invalid_argument("iforest_score: dimension mismatch");
  double mean_path = 0.0;
  for (const auto& tree : trees_) mean_path += path_length(tree, x);
  mean_path /= static_cast<double>(trees_.size());
  return std::pow(2.0, -mean_path / average_path_length(subsample_));
}

Eigen::VectorXd IsolationForest::score_rows(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd scores(X.rows());
  for (int i = 0; i < X.rows(); ++i) scores[i] = score(X.row(i).transpose());
  return scores;
}

double score_threshold(const IsolationForest& forest, const Eigen::MatrixXd& X,
                       double outlier_quantile) {
  if (!(outlier_quantile >= 0.0 && outlier_quantile <= 1.0)) {
    throw std::invalid_argument("score_threshold: quantile outside [0,1]");
  }
  if (outlier_quantile >= 1.0) {
    return std::numeric_limits<double>::infinity();  // nothing rejected
  }
  if (outlier_quantile <= 0.0) {
    return -std::numeric_limits<double>::infinity();  // everything rejected
  }
  const Eigen::VectorXd scores = forest.score_rows(X);
  std::vector<double> values(scores.data(), scores.data() + scores.size());
  return quantile(values, outlier_quantile);
}

bool combined_decide(double model_uncertainty, double delta, double score,
                     double threshold_score) {
  return threshold_decide(model_uncertainty, delta) && score < threshold_score;
}

}  // namespace selset

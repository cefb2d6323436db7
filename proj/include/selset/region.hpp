#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace selset {

// Conjunction of simple per-feature inequalities over raw inputs, e.g.
// "x1>0" or "x1>0 & x2<=1.5". Features are 1-based (x1 is the first column).
struct RegionClause {
  enum class Op { kLt, kLe, kGt, kGe };
  int feature = 0;  // 0-based column index
  Op op = Op::kGt;
  double value = 0.0;
};

struct Region {
  std::string text;
  std::vector<RegionClause> clauses;

  bool contains(const Eigen::VectorXd& x) const;
};

// Throws ConfigError on malformed expressions.
Region parse_region(const std::string& expr);

}  // namespace selset

#include "selset/region.hpp"

#include <charconv>
#include <cctype>

#include "selset/errors.hpp"

namespace selset {

bool Region::contains(const Eigen::VectorXd& x) const {
  for (const auto& clause : clauses) {
    if (clause.feature < 0 || clause.feature >= x.size()) {
      throw ConfigError("region '" + text + "': feature index out of range");
    }
    const double v = x[clause.feature];
    switch (clause.op) {
      case RegionClause::Op::kLt:
        if (!(v < clause.value)) return false;
        break;
      case RegionClause::Op::kLe:
        if (!(v <= clause.value)) return false;
        break;
      case RegionClause::Op::kGt:
        if (!(v > clause.value)) return false;
        break;
      case RegionClause::Op::kGe:
        if (!(v >= clause.value)) return false;
        break;
    }
  }
  return true;
}

namespace {

std::string strip_spaces(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  }
  return out;
}

RegionClause parse_clause(const std::string& raw, const std::string& full) {
  const std::string clause = strip_spaces(raw);
  if (clause.size() < 4 || clause[0] != 'x') {
    throw ConfigError("region '" + full + "': clause must look like x<k><op><number>");
  }
  std::size_t pos = 1;
  while (pos < clause.size() && std::isdigit(static_cast<unsigned char>(clause[pos]))) ++pos;
  if (pos == 1) throw ConfigError("region '" + full + "': missing feature index");
  const int feature_1based = std::stoi(clause.substr(1, pos - 1));
  if (feature_1based < 1) throw ConfigError("region '" + full + "': feature index must be >= 1");

  RegionClause out;
  out.feature = feature_1based - 1;
  if (clause.compare(pos, 2, "<=") == 0) {
    out.op = RegionClause::Op::kLe;
    pos += 2;
  } else if (clause.compare(pos, 2, ">=") == 0) {
    out.op = RegionClause::Op::kGe;
    pos += 2;
  } else if (clause[pos] == '<') {
    out.op = RegionClause::Op::kLt;
    pos += 1;
  } else if (clause[pos] == '>') {
    out.op = RegionClause::Op::kGt;
    pos += 1;
  } else {
    throw ConfigError("region '" + full + "': expected one of < <= > >=");
  }
  const std::string number = clause.substr(pos);
  if (number.empty()) throw ConfigError("region '" + full + "': missing bound");
  const auto res = std::from_chars(number.data(), number.data() + number.size(), out.value);
  if (res.ec != std::errc() || res.ptr != number.data() + number.size()) {
    throw ConfigError("region '" + full + "': cannot parse bound '" + number + "'");
  }
  return out;
}

}  // namespace

Region parse_region(const std::string& expr) {
  Region region;
  region.text = expr;
  std::size_t start = 0;
  while (start <= expr.size()) {
    std::size_t amp = expr.find('&', start);
    if (amp == std::string::npos) amp = expr.size();
    const std::string clause = expr.substr(start, amp - start);
    if (!strip_spaces(clause).empty()) {
      region.clauses.push_back(parse_clause(clause, expr));
    }
    if (amp == expr.size()) break;
    start = amp + 1;
  }
  if (region.clauses.empty()) throw ConfigError("region '" + expr + "': no clauses");
  return region;
}

}  // namespace selset

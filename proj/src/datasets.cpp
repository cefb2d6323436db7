#include "selset/datasets.hpp"

#include <Eigen/Eigenvalues>
#include <charconv>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/io.hpp"
#include "selset/rng.hpp"

namespace selset {

std::string to_string(OutcomeKind kind) {
  return kind == OutcomeKind::kReal ? "real" : "class";
}

OutcomeKind outcome_kind_from_string(const std::string& s) {
  if (s == "real") return OutcomeKind::kReal;
  if (s == "class") return OutcomeKind::kClass;
  throw ConfigError("unknown outcome kind: " + s);
}

void validate(const Dataset& data) {
  if (data.X.rows() != data.y.size()) {
    throw std::invalid_argument("dataset: feature/outcome row counts differ");
  }
  if (!data.X.allFinite() || !data.y.allFinite()) {
    throw std::invalid_argument("dataset: non-finite entries");
  }
  if (data.outcome_kind == OutcomeKind::kClass) {
    for (int i = 0; i < data.y.size(); ++i) {
      if (data.y[i] != std::floor(data.y[i]) || data.y[i] < 0.0) {
        throw std::invalid_argument("dataset: class outcomes must be non-negative integers");
      }
    }
  }
}

namespace {

Dataset make_2d(int n) {
  Dataset data;
  data.X.resize(n, 2);
  data.y.resize(n);
  data.feature_names = {"x1", "x2"};
  return data;
}

}  // namespace

Dataset gen_entropy_sim(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_entropy_sim: n must be >= 1");
  Rng rng(seed);
  Dataset data = make_2d(n);
  const auto stddev = [](double x1, double) { return 0.3 + std::max(0.0, x1); };
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.uniform(-3.0, 3.0);
    const double x2 = rng.uniform(-3.0, 3.0);
    data.X(i, 0) = x1;
    data.X(i, 1) = x2;
    data.y[i] = stddev(x1, x2) * rng.normal();
  }
  data.truth = GeneratorTruth{
      [](double, double) { return 0.0; },
      stddev,
      [](double x1, double x2) {
        const bool inside = x1 >= -3.0 && x1 <= 3.0 && x2 >= -3.0 && x2 <= 3.0;
        return inside ? 1.0 / 36.0 : 0.0;
      },
  };
  return data;
}

Dataset gen_density_sim(int n, std::uint64_t seed, const DensitySimOptions& opt) {
  if (n < 1) throw std::invalid_argument("gen_density_sim: n must be >= 1");
  if (!(opt.sigma > 0.0)) throw std::invalid_argument("gen_density_sim: sigma must be > 0");
  Rng rng(seed);
  Dataset data = make_2d(n);
  const double sigma = opt.sigma;
  for (int i = 0; i < n; ++i) {
    data.X(i, 0) = rng.normal();
    data.X(i, 1) = rng.normal();
    data.y[i] = sigma * rng.normal();
  }
  data.truth = GeneratorTruth{
      [](double, double) { return 0.0; },
      [sigma](double, double) { return sigma; },
      [](double x1, double x2) {
        return std::exp(-0.5 * (x1 * x1 + x2 * x2)) / (2.0 * M_PI);
      },
  };
  return data;
}

bool in_misspec_patch(double x1, double x2) {
  return x1 >= -1.0 && x1 <= 1.0 && x2 >= -1.0 && x2 <= 1.0;
}

Dataset gen_misspec_sim(int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_misspec_sim: n must be >= 1");
  Rng rng(seed);
  Dataset data = make_2d(n);
  const auto mean = [](double x1, double x2) {
    double m = x1 + x2;
    if (in_misspec_patch(x1, x2)) {
      m += 4.0 * (1.0 - x1 * x1) * (1.0 - x2 * x2);
    }
    return m;
  };
  for (int i = 0; i < n; ++i) {
    const double x1 = rng.uniform(-3.0, 3.0);
    const double x2 = rng.uniform(-3.0, 3.0);
    data.X(i, 0) = x1;
    data.X(i, 1) = x2;
    data.y[i] = mean(x1, x2) + 0.3 * rng.normal();
  }
  data.truth = GeneratorTruth{
      mean,
      [](double, double) { return 0.3; },
      [](double x1, double x2) {
        const bool inside = x1 >= -3.0 && x1 <= 3.0 && x2 >= -3.0 && x2 <= 3.0;
        return inside ? 1.0 / 36.0 : 0.0;
      },
  };
  return data;
}

WhitenTransform pca_whiten_fit(const Eigen::MatrixXd& X, double var_fraction) {
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  if (n < 2) throw std::invalid_argument("pca_whiten_fit: need at least 2 observations");
  if (!(var_fraction > 0.0 && var_fraction <= 1.0)) {
    throw std::invalid_argument("pca_whiten_fit: var_fraction outside (0,1]");
  }
  WhitenTransform t;
  t.mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - t.mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("pca_whiten_fit: eigendecomposition failed");
  }
  // Eigen returns ascending eigenvalues; walk them in descending order.
  const Eigen::VectorXd evals = solver.eigenvalues();
  const Eigen::MatrixXd evecs = solver.eigenvectors();
  const double total = std::max(evals.sum(), 0.0);
  const double floor = std::max(evals[p - 1], 0.0) * 1e-12;
  if (total <= 0.0 || evals[p - 1] <= 0.0) {
    throw std::invalid_argument("pca_whiten_fit: data has no variance");
  }
  int kept = 0;
  double cum = 0.0;
  for (int j = p - 1; j >= 0; --j) {
    if (evals[j] <= floor) break;  // numerically rank-deficient directions
    ++kept;
    cum += evals[j];
    if (cum >= var_fraction * total) break;
  }
  t.axes.resize(p, kept);
  t.scales.resize(kept);
  for (int c = 0; c < kept; ++c) {
    const int j = p - 1 - c;
    t.axes.col(c) = evecs.col(j);
    t.scales[c] = std::sqrt(evals[j]);
  }
  return t;
}

Eigen::MatrixXd whiten_apply(const WhitenTransform& transform, const Eigen::MatrixXd& X) {
  if (X.cols() != transform.input_dim()) {
    throw std::invalid_argument("whiten_apply: feature count mismatch");
  }
  Eigen::MatrixXd projected =
      (X.rowwise() - transform.mean.transpose()) * transform.axes;
  projected.array().rowwise() /= transform.scales.transpose().array();
  return projected;
}

Eigen::VectorXd whiten_apply(const WhitenTransform& transform, const Eigen::VectorXd& x) {
  if (x.size() != transform.input_dim()) {
    throw std::invalid_argument("whiten_apply: feature count mismatch");
  }
  return (transform.axes.transpose() * (x - transform.mean)).cwiseQuotient(transform.scales);
}

nlohmann::json whiten_to_json(const WhitenTransform& transform) {
  std::vector<std::vector<double>> axes(transform.input_dim());
  for (int r = 0; r < transform.input_dim(); ++r) {
    axes[r].assign(transform.axes.row(r).begin(), transform.axes.row(r).end());
  }
  return nlohmann::json{
      {"mean", std::vector<double>(transform.mean.data(), transform.mean.data() + transform.mean.size())},
      {"axes", axes},
      {"scales",
       std::vector<double>(transform.scales.data(), transform.scales.data() + transform.scales.size())},
  };
}

WhitenTransform whiten_from_json(const nlohmann::json& doc) {
  WhitenTransform t;
  const auto mean = doc.at("mean").get<std::vector<double>>();
  const auto scales = doc.at("scales").get<std::vector<double>>();
  const auto axes = doc.at("axes").get<std::vector<std::vector<double>>>();
  t.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  t.scales = Eigen::Map<const Eigen::VectorXd>(scales.data(), scales.size());
  t.axes.resize(static_cast<int>(axes.size()), static_cast<int>(scales.size()));
  for (std::size_t r = 0; r < axes.size(); ++r) {
    if (axes[r].size() != scales.size()) throw ConfigError("whitening document: ragged axes");
    for (std::size_t c = 0; c < axes[r].size(); ++c) {
      t.axes(static_cast<int>(r), static_cast<int>(c)) = axes[r][c];
    }
  }
  return t;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

std::string strip(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_number(const std::string& raw, int line_number, const std::string& column) {
  const std::string text = strip(raw);
  if (text.empty()) {
    throw ConfigError("csv row " + std::to_string(line_number) + ": empty value in column '" +
                      column + "'");
  }
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("csv row " + std::to_string(line_number) + ": cannot parse '" + text +
                      "' in column '" + column + "'");
  }
  if (!std::isfinite(value)) {
    throw ConfigError("csv row " + std::to_string(line_number) + ": non-finite value in column '" +
                      column + "'");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  const std::string content = read_text_file(path);
  std::stringstream ss(content);
  std::string line;
  if (!std::getline(ss, line)) throw ConfigError("csv file is empty: " + path);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = strip(h);

  const auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw ConfigError("csv file " + path + ": missing column '" + name + "'");
  };

  const int outcome_col = column_index(schema.outcome_column);
  std::vector<std::string> feature_names = schema.feature_columns;
  if (feature_names.empty()) {
    for (const auto& h : header) {
      if (h != schema.outcome_column) feature_names.push_back(h);
    }
  }
  if (feature_names.empty()) throw ConfigError("csv file " + path + ": no feature columns");
  std::vector<int> feature_cols;
  for (const auto& name : feature_names) feature_cols.push_back(column_index(name));

  std::vector<std::vector<double>> rows;
  std::vector<double> outcomes;
  int line_number = 1;
  while (std::getline(ss, line)) {
    ++line_number;
    if (strip(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw ConfigError("csv row " + std::to_string(line_number) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      row.push_back(parse_number(fields[feature_cols[j]], line_number, feature_names[j]));
    }
    const double y = parse_number(fields[outcome_col], line_number, schema.outcome_column);
    if (schema.outcome_kind == OutcomeKind::kClass &&
        (y != std::floor(y) || y < 0.0)) {
      throw ConfigError("csv row " + std::to_string(line_number) +
                        ": class outcome must be a non-negative integer, got '" +
                        strip(fields[outcome_col]) + "'");
    }
    rows.push_back(std::move(row));
    outcomes.push_back(y);
  }
  if (rows.empty()) throw ConfigError("csv file " + path + ": no data rows");

  Dataset data;
  data.outcome_kind = schema.outcome_kind;
  data.feature_names = feature_names;
  data.X.resize(static_cast<int>(rows.size()), static_cast<int>(feature_names.size()));
  data.y.resize(static_cast<int>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      data.X(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    }
    data.y[static_cast<int>(i)] = outcomes[i];
  }
  validate(data);
  return data;
}

std::string dataset_to_csv(const Dataset& data) {
  std::string out;
  std::vector<std::string> header = data.feature_names;
  if (header.empty()) {
    for (int j = 0; j < data.dim(); ++j) header.push_back("x" + std::to_string(j + 1));
  }
  header.push_back("y");
  out += csv_row(header);
  for (int i = 0; i < data.n(); ++i) {
    std::vector<std::string> fields;
    fields.reserve(data.dim() + 1);
    for (int j = 0; j < data.dim(); ++j) fields.push_back(format_double(data.X(i, j)));
    fields.push_back(format_double(data.y[i]));
    out += csv_row(fields);
  }
  return out;
}

}  // namespace selset

// Command-line front end: train selective prediction-set models, certify
// their coverage, predict, and run the scripted simulation studies.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selset/errors.hpp"
#include "selset/experiments.hpp"
#include "selset/io.hpp"
#include "selset/recalibration.hpp"
#include "selset/region.hpp"
#include "selset/selective_model.hpp"
#include "selset/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOverrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> kfold;
  std::vector<std::string> regions;
  std::optional<std::string> panel;
};

void expect_keys(const json& obj, const std::string& context,
                 std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw selset::ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool known = false;
    for (const char* k : keys) {
      if (key == k) {
        known = true;
        break;
      }
    }
    if (!known) throw selset::ConfigError(context + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<T>();
}

json load_config(const CliOverrides& cli) {
  json config;
  try {
    config = json::parse(selset::read_text_file(cli.config_path));
  } catch (const json::parse_error& e) {
    throw selset::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (cli.out) config["out"] = *cli.out;
  return config;
}

std::string out_dir(const json& config) {
  const std::string dir = get_or<std::string>(config, "out", "out");
  fs::create_directories(dir);
  return dir;
}

selset::Dataset load_dataset(const json& spec, const std::string& context,
                             std::optional<std::uint64_t> seed_override) {
  expect_keys(spec, context,
              {"generator", "n", "seed", "sigma", "csv", "features", "outcome", "outcome_kind"});
  if (spec.contains("generator") == spec.contains("csv")) {
    throw selset::ConfigError(context + ": specify exactly one of 'generator' or 'csv'");
  }
  if (spec.contains("generator")) {
    const std::string name = spec.at("generator").get<std::string>();
    const int n = spec.at("n").get<int>();
    const std::uint64_t seed =
        seed_override ? *seed_override : get_or<std::uint64_t>(spec, "seed", 0);
    if (name == "entropy") return selset::gen_entropy_sim(n, seed);
    if (name == "density") {
      selset::DensitySimOptions opt;
      opt.sigma = get_or<double>(spec, "sigma", opt.sigma);
      return selset::gen_density_sim(n, seed, opt);
    }
    if (name == "misspec") return selset::gen_misspec_sim(n, seed);
    throw selset::ConfigError(context + ": unknown generator '" + name + "'");
  }
  selset::CsvSchema schema;
  schema.feature_columns = get_or<std::vector<std::string>>(spec, "features", {});
  schema.outcome_column = get_or<std::string>(spec, "outcome", "y");
  schema.outcome_kind =
      selset::outcome_kind_from_string(get_or<std::string>(spec, "outcome_kind", "real"));
  return selset::load_csv(spec.at("csv").get<std::string>(), schema);
}

selset::TrainConfig parse_train_config(const json& spec,
                                       std::optional<std::uint64_t> seed_override) {
  expect_keys(spec, "train",
              {"kind", "decision_mode", "alpha", "delta", "lambda", "gamma", "t_alpha", "hidden",
               "decision_hidden", "classes", "lr", "momentum", "epochs", "batch_size",
               "m_penalty", "box_margin", "seed", "whiten", "whiten_var_fraction", "lambda_grid",
               "kfold", "tune_lambda"});
  selset::TrainConfig config;
  config.kind = selset::model_kind_from_string(
      get_or<std::string>(spec, "kind", "gaussian-regression"));
  config.decision_mode =
      selset::decision_mode_from_string(get_or<std::string>(spec, "decision_mode", "coupled"));
  config.hyper.alpha = get_or<double>(spec, "alpha", config.hyper.alpha);
  config.hyper.delta = get_or<double>(spec, "delta", config.hyper.delta);
  config.hyper.lambda = get_or<double>(spec, "lambda", config.hyper.lambda);
  config.hyper.gamma = get_or<double>(spec, "gamma", config.hyper.gamma);
  config.hyper.t_alpha = get_or<double>(spec, "t_alpha", config.hyper.t_alpha);
  config.hidden = get_or<std::vector<int>>(spec, "hidden", config.hidden);
  config.decision_hidden =
      get_or<std::vector<int>>(spec, "decision_hidden", config.decision_hidden);
  config.classes = get_or<int>(spec, "classes", config.classes);
  config.lr = get_or<double>(spec, "lr", config.lr);
  config.momentum = get_or<double>(spec, "momentum", config.momentum);
  config.epochs = get_or<int>(spec, "epochs", config.epochs);
  config.batch_size = get_or<int>(spec, "batch_size", config.batch_size);
  config.m_penalty = get_or<int>(spec, "m_penalty", config.m_penalty);
  config.box_margin = get_or<double>(spec, "box_margin", config.box_margin);
  config.seed = seed_override ? *seed_override : get_or<std::uint64_t>(spec, "seed", 0);
  config.whiten = get_or<bool>(spec, "whiten", config.whiten);
  config.whiten_var_fraction =
      get_or<double>(spec, "whiten_var_fraction", config.whiten_var_fraction);
  config.lambda_grid = get_or<std::vector<double>>(spec, "lambda_grid", {});
  config.kfold = get_or<int>(spec, "kfold", config.kfold);
  return config;
}

int cmd_train(const CliOverrides& cli) {
  const json config = load_config(cli);
  expect_keys(config, "config", {"dataset", "train", "kfold", "out"});
  const selset::Dataset data = load_dataset(config.at("dataset"), "dataset", cli.seed);
  selset::TrainConfig train_config = parse_train_config(config.at("train"), cli.seed);
  const int kfold_models = cli.kfold ? *cli.kfold : get_or<int>(config, "kfold", 0);
  const std::string dir = out_dir(config);

  if (get_or<bool>(config.at("train"), "tune_lambda", false)) {
    if (train_config.lambda_grid.empty()) {
      throw selset::ConfigError("tune_lambda requested but lambda_grid is empty");
    }
    const selset::LambdaChoice choice = selset::tune_lambda(data, train_config);
    train_config.hyper.lambda = choice.lambda;
    std::string csv = selset::csv_row({"lambda", "cv_score"});
    for (std::size_t i = 0; i < choice.grid.size(); ++i) {
      csv += selset::csv_row(
          {selset::format_double(choice.grid[i]), selset::format_double(choice.scores[i])});
    }
    selset::atomic_write_text(dir + "/lambda_scores.csv", csv);
    std::cout << "selected lambda " << selset::format_double(choice.lambda) << "\n";
  }

  if (kfold_models >= 2) {
    train_config.kfold = kfold_models;
    const selset::KfoldResult result = selset::kfold_train(data, train_config);
    for (int k = 0; k < kfold_models; ++k) {
      selset::save_model(result.fits[k].model, dir + "/model_" + std::to_string(k) + ".json");
      selset::atomic_write_text(dir + "/metrics_" + std::to_string(k) + ".csv",
                                selset::metrics_to_csv(result.fits[k].metrics));
    }
    selset::atomic_write_text(dir + "/fold_plan.json",
                              selset::fold_plan_to_json(result.plan).dump(2) + "\n");
    std::cout << "trained " << kfold_models << " cross-fitted models into " << dir << "\n";
  } else {
    const selset::TrainResult result = selset::train_selective(data, train_config);
    selset::save_model(result.model, dir + "/model.json");
    selset::atomic_write_text(dir + "/metrics.csv", selset::metrics_to_csv(result.metrics));
    std::cout << "trained model into " << dir << " (final objective "
              << selset::format_double(result.final_objective) << ")\n";
  }
  return 0;
}

int cmd_recalibrate(const CliOverrides& cli) {
  const json config = load_config(cli);
  expect_keys(config, "config",
              {"models", "fold_plan", "validation", "alpha", "levels", "regions", "out"});
  const auto model_paths = config.at("models").get<std::vector<std::string>>();
  if (model_paths.empty()) throw selset::ConfigError("recalibrate: no model files given");
  std::vector<selset::SelectiveModel> models;
  for (const auto& path : model_paths) models.push_back(selset::load_model(path));

  const selset::Dataset data = load_dataset(config.at("validation"), "validation", cli.seed);
  const double alpha = get_or<double>(config, "alpha", models.front().hyper.alpha);
  const std::vector<double> levels = get_or<std::vector<double>>(config, "levels", {0.95});
  std::vector<std::string> region_texts = get_or<std::vector<std::string>>(config, "regions", {});
  region_texts.insert(region_texts.end(), cli.regions.begin(), cli.regions.end());
  std::vector<selset::Region> regions;
  for (const auto& text : region_texts) regions.push_back(selset::parse_region(text));

  std::vector<selset::CoverageReportEntry> entries;
  if (models.size() == 1) {
    const auto records = selset::build_records(models[0], data.X, data.y, alpha);
    entries.push_back({"single", "", selset::recalibrate_single(records), levels});
    for (const auto& region : regions) {
      std::vector<char> flags(records.size());
      for (int i = 0; i < data.n(); ++i) {
        flags[i] = region.contains(data.X.row(i).transpose()) ? 1 : 0;
      }
      entries.push_back({"single", region.text, selset::local_coverage(records, flags), levels});
    }
  } else {
    if (!config.contains("fold_plan")) {
      throw selset::ConfigError("recalibrate: fold_plan required for multiple models");
    }
    const selset::FoldPlan plan = selset::fold_plan_from_json(
        json::parse(selset::read_text_file(config.at("fold_plan").get<std::string>())));
    const auto records = selset::build_fold_records(models, data, plan, alpha);
    entries.push_back({"agg", "", selset::recalibrate_aggregate(records), levels});
    for (std::size_t k = 0; k < records.size(); ++k) {
      entries.push_back({"fold" + std::to_string(k), "",
                         selset::recalibrate_single(records[k]), levels});
    }
    const auto folds = plan.fold_indices();
    for (const auto& region : regions) {
      std::vector<std::vector<char>> flags(records.size());
      for (std::size_t k = 0; k < records.size(); ++k) {
        flags[k].resize(records[k].size());
        for (std::size_t j = 0; j < folds[k].size(); ++j) {
          flags[k][j] = region.contains(data.X.row(folds[k][j]).transpose()) ? 1 : 0;
        }
      }
      entries.push_back({"agg", region.text, selset::local_coverage(records, flags), levels});
    }
  }

  const std::string dir = out_dir(config);
  selset::atomic_write_text(dir + "/report.json",
                            selset::report_to_json(entries).dump(2) + "\n");
  selset::atomic_write_text(dir + "/report.csv", selset::report_to_csv(entries));
  std::cout << "coverage estimate " << selset::format_double(entries.front().estimate.theta)
            << " written to " << dir << "\n";
  return 0;
}

Eigen::MatrixXd load_feature_matrix(const std::string& path,
                                    const std::vector<std::string>& feature_names) {
  // Reuse the dataset loader by treating the last column as the outcome when
  // no explicit feature list is given; here every listed column is a
  // feature, so parse manually through load_csv with a synthetic outcome.
  const std::string content = selset::read_text_file(path);
  std::stringstream ss(content);
  std::string header_line;
  if (!std::getline(ss, header_line)) throw selset::ConfigError("csv file is empty: " + path);
  std::vector<std::string> header;
  {
    std::stringstream hs(header_line);
    std::string field;
    while (std::getline(hs, field, ',')) {
      while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
      header.push_back(field);
    }
  }
  std::vector<std::string> columns = feature_names.empty() ? header : feature_names;
  std::vector<int> idx;
  for (const auto& name : columns) {
    bool found = false;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) {
        idx.push_back(static_cast<int>(i));
        found = true;
        break;
      }
    }
    if (!found) throw selset::ConfigError("csv file " + path + ": missing column '" + name + "'");
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_number = 1;
  while (std::getline(ss, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (fields.size() != header.size()) {
      throw selset::ConfigError("csv row " + std::to_string(line_number) +
                                ": field count does not match header");
    }
    std::vector<double> row;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      try {
        row.push_back(std::stod(fields[idx[j]]));
      } catch (const std::exception&) {
        throw selset::ConfigError("csv row " + std::to_string(line_number) +
                                  ": cannot parse value in column '" + columns[j] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw selset::ConfigError("csv file " + path + ": no data rows");
  Eigen::MatrixXd X(static_cast<int>(rows.size()), static_cast<int>(idx.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      X(static_cast<int>(i), static_cast<int>(j)) = rows[i][j];
    }
  }
  return X;
}

int cmd_predict(const CliOverrides& cli) {
  const json config = load_config(cli);
  expect_keys(config, "config", {"model", "input", "features", "alpha", "out"});
  const selset::SelectiveModel model =
      selset::load_model(config.at("model").get<std::string>());
  const Eigen::MatrixXd X =
      load_feature_matrix(config.at("input").get<std::string>(),
                          get_or<std::vector<std::string>>(config, "features", {}));
  const double alpha = get_or<double>(config, "alpha", model.hyper.alpha);

  const Eigen::MatrixXd inputs = selset::to_model_columns(model, X);
  const Eigen::VectorXd psi = selset::accept_prob_batch(model, inputs);
  const Eigen::VectorXd unc = selset::uncertainty_batch(model, inputs);

  std::string csv = selset::csv_row(
      {"accept_prob", "decision", "lower", "upper", "labels", "uncertainty"});
  for (int i = 0; i < X.rows(); ++i) {
    const selset::PredictionSet set = selset::prediction_set(model, inputs.col(i), alpha);
    std::string lower, upper, labels;
    if (set.kind == selset::PredictionSet::Kind::kInterval) {
      lower = selset::format_double(set.lower);
      upper = selset::format_double(set.upper);
    } else {
      for (std::size_t j = 0; j < set.labels.size(); ++j) {
        if (j > 0) labels += ';';
        labels += std::to_string(set.labels[j]);
      }
    }
    csv += selset::csv_row({selset::format_double(psi[i]),
                            psi[i] >= 0.5 ? "accept" : "abstain", lower, upper, labels,
                            selset::format_double(unc[i])});
  }
  const std::string dir = out_dir(config);
  selset::atomic_write_text(dir + "/predictions.csv", csv);
  std::cout << "wrote predictions for " << X.rows() << " rows to " << dir << "\n";
  return 0;
}

int cmd_simulate(const CliOverrides& cli) {
  const json config = load_config(cli);
  expect_keys(config, "config",
              {"panel", "n", "seed", "grid", "epochs", "lambda", "deltas", "lambdas", "delta",
               "sigma", "replicates", "K", "alpha", "hidden", "truth_samples", "ci_level",
               "neighborhoods", "neighborhood_halfwidth", "min_local_per_fold", "out"});
  const std::string panel =
      cli.panel ? *cli.panel : get_or<std::string>(config, "panel", "");
  if (panel.size() != 1 || panel[0] < 'A' || panel[0] > 'F') {
    throw selset::ConfigError("simulate: panel must be one of A,B,C,D,E,F");
  }
  const std::string dir = out_dir(config);
  const auto seed_of = [&](std::uint64_t fallback) {
    return cli.seed ? *cli.seed : get_or<std::uint64_t>(config, "seed", fallback);
  };

  json summary;
  summary["panel"] = panel;
  if (panel == "A" || panel == "B" || panel == "C") {
    selset::GridPanelResult result;
    if (panel == "A") {
      selset::PanelAConfig pc;
      pc.n = get_or<int>(config, "n", pc.n);
      pc.seed = seed_of(pc.seed);
      pc.grid = get_or<int>(config, "grid", pc.grid);
      pc.lambda = get_or<double>(config, "lambda", pc.lambda);
      pc.deltas = get_or<std::vector<double>>(config, "deltas", pc.deltas);
      pc.epochs = get_or<int>(config, "epochs", pc.epochs);
      result = selset::run_panel_a(pc);
    } else if (panel == "B") {
      selset::PanelBConfig pc;
      pc.n = get_or<int>(config, "n", pc.n);
      pc.seed = seed_of(pc.seed);
      pc.grid = get_or<int>(config, "grid", pc.grid);
      pc.delta = get_or<double>(config, "delta", pc.delta);
      pc.sigma = get_or<double>(config, "sigma", pc.sigma);
      pc.lambdas = get_or<std::vector<double>>(config, "lambdas", pc.lambdas);
      pc.epochs = get_or<int>(config, "epochs", pc.epochs);
      result = selset::run_panel_b(pc);
    } else {
      selset::PanelCConfig pc;
      pc.n = get_or<int>(config, "n", pc.n);
      pc.seed = seed_of(pc.seed);
      pc.grid = get_or<int>(config, "grid", pc.grid);
      pc.delta = get_or<double>(config, "delta", pc.delta);
      pc.lambda = get_or<double>(config, "lambda", pc.lambda);
      pc.epochs = get_or<int>(config, "epochs", pc.epochs);
      result = selset::run_panel_c(pc);
    }
    selset::atomic_write_text(dir + "/panel_" + panel + ".csv",
                              selset::grid_panel_to_csv(result));
    summary["settings"] = result.settings;
    summary["agreement"] = result.agreement;
    summary["acceptance_area"] = result.acceptance_area;
    if (panel == "C") {
      summary["mean_accept_inside"] = result.mean_accept_inside;
      summary["mean_accept_outside"] = result.mean_accept_outside;
    }
  } else {
    selset::CoverageStudyConfig sc;
    sc.with_local = panel == "F";
    if (panel == "F") sc.n = 1000;
    sc.replicates = get_or<int>(config, "replicates", sc.replicates);
    sc.n = get_or<int>(config, "n", sc.n);
    sc.K = get_or<int>(config, "K", sc.K);
    sc.seed = seed_of(sc.seed);
    sc.alpha = get_or<double>(config, "alpha", sc.alpha);
    sc.delta = get_or<double>(config, "delta", sc.delta);
    sc.lambda = get_or<double>(config, "lambda", sc.lambda);
    sc.sigma = get_or<double>(config, "sigma", sc.sigma);
    sc.hidden = get_or<std::vector<int>>(config, "hidden", sc.hidden);
    sc.epochs = get_or<int>(config, "epochs", sc.epochs);
    sc.truth_samples = get_or<int>(config, "truth_samples", sc.truth_samples);
    sc.ci_level = get_or<double>(config, "ci_level", sc.ci_level);
    sc.neighborhoods = get_or<int>(config, "neighborhoods", sc.neighborhoods);
    sc.neighborhood_halfwidth =
        get_or<double>(config, "neighborhood_halfwidth", sc.neighborhood_halfwidth);
    sc.min_local_per_fold = get_or<int>(config, "min_local_per_fold", sc.min_local_per_fold);
    const auto rows = selset::run_coverage_study(sc);
    selset::atomic_write_text(dir + "/panel_" + panel + ".csv",
                              selset::coverage_study_to_csv(rows));
    int covered = 0, total = 0;
    for (const auto& row : rows) {
      covered += row.covered;
      ++total;
    }
    summary["replicates"] = sc.replicates;
    summary["ci_cover_rate"] = static_cast<double>(covered) / total;
  }
  selset::atomic_write_text(dir + "/panel_" + panel + "_summary.json",
                            summary.dump(2) + "\n");
  std::cout << "panel " << panel << " artifacts written to " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective prediction sets: training, coverage certification, simulation"};
  app.require_subcommand(1);

  CliOverrides cli;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", cli.config_path, "JSON config file")->required();
    cmd->add_option("--seed", cli.seed, "override the config seed");
    cmd->add_option("--out", cli.out, "override the output directory");
  };

  CLI::App* train = app.add_subcommand("train", "fit a selective model (optionally K-fold)");
  add_common(train);
  train->add_option("--kfold", cli.kfold, "train K cross-fitted models");

  CLI::App* recal = app.add_subcommand("recalibrate", "estimate coverage with CIs");
  add_common(recal);
  recal->add_option("--region", cli.regions, "local-coverage region, e.g. \"x1>0\"");

  CLI::App* predict = app.add_subcommand("predict", "score a CSV of inputs");
  add_common(predict);

  CLI::App* simulate = app.add_subcommand("simulate", "run a scripted study panel");
  add_common(simulate);
  simulate->add_option("--panel", cli.panel, "panel A-F");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(cli);
    if (recal->parsed()) return cmd_recalibrate(cli);
    if (predict->parsed()) return cmd_predict(cli);
    if (simulate->parsed()) return cmd_simulate(cli);
    std::cerr << "no subcommand given\n";
    return 2;
  } catch (const selset::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const selset::DegenerateError& e) {
    std::cerr << "recalibration degenerate: " << e.what() << "\n";
    return 4;
  } catch (const selset::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

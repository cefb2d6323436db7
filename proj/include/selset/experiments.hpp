#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "selset/recalibration.hpp"
#include "selset/selective_model.hpp"
#include "selset/trainer.hpp"

namespace selset {

// Scripted simulation studies behind the `simulate` CLI command. Panels A-C
// are decision-boundary grids; D-F are replicated coverage studies.

struct GridPanelRow {
  double setting = 0.0;  // the delta (A) or lambda (B) the model was trained with
  double x1 = 0.0;
  double x2 = 0.0;
  double accept_prob = 0.0;
  int oracle_accept = 0;
};

struct GridPanelResult {
  std::vector<GridPanelRow> rows;
  std::vector<double> settings;
  std::vector<double> agreement;        // per setting, fraction of grid points
  std::vector<double> acceptance_area;  // per setting, fraction accepted
  double mean_accept_inside = 0.0;      // panel C only
  double mean_accept_outside = 0.0;     // panel C only
};

std::string grid_panel_to_csv(const GridPanelResult& result);

// Decision boundaries against entropy level sets: heteroscedastic generator,
// small lambda, two abstention costs. The oracle accepts where the true
// conditional entropy is below delta.
struct PanelAConfig {
  int n = 5000;
  std::uint64_t seed = 11;
  int grid = 50;
  double lambda = 1e-4;
  std::vector<double> deltas = {1.7, 2.25};
  int epochs = 80;
};
GridPanelResult run_panel_a(const PanelAConfig& config);

// Decision boundaries against input-density level sets: constant conditional
// entropy slightly below delta, two penalty weights. Agreement is measured
// against the best-matching density threshold rule.
struct PanelBConfig {
  int n = 5000;
  std::uint64_t seed = 12;
  int grid = 50;
  double delta = 2.5;
  double sigma = 2.7;  // keeps the flat entropy just below delta
  std::vector<double> lambdas = {0.001, 0.01};
  int epochs = 80;
};
GridPanelResult run_panel_b(const PanelBConfig& config);

// Misspecification: linear prediction head, separate decision network. The
// oracle accepts outside the quadratic patch [-1,1]^2.
struct PanelCConfig {
  int n = 5000;
  std::uint64_t seed = 13;
  int grid = 50;
  double delta = 1.3;
  double lambda = 1e-4;
  int epochs = 80;
};
GridPanelResult run_panel_c(const PanelCConfig& config);

// Replicated coverage study on the constant-entropy generator: K-fold
// cross-fitting, per-fold and aggregate estimates, ground truth by Monte
// Carlo over fresh inputs with the conditional coverage evaluated exactly.
struct CoverageStudyConfig {
  int replicates = 100;
  int n = 2000;
  int K = 3;
  std::uint64_t seed = 14;
  double alpha = 0.1;
  double delta = 3.0;
  double lambda = 1e-3;
  double sigma = 3.5;
  std::vector<int> hidden = {12};
  int epochs = 30;
  int truth_samples = 1000000;
  double ci_level = 0.95;
  bool with_local = false;  // panel F: local-coverage spread over neighborhoods
  int neighborhoods = 50;
  double neighborhood_halfwidth = 0.75;
  int min_local_per_fold = 8;
};

struct CoverageStudyRow {
  int replicate = 0;
  std::string model;  // "agg" or "fold<k>"
  double theta = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double truth = 0.0;
  int covered = 0;
  double ci_width = 0.0;
  double local_iqr = 0.0;  // NaN unless with_local
};

std::vector<CoverageStudyRow> run_coverage_study(const CoverageStudyConfig& config);

std::string coverage_study_to_csv(const std::vector<CoverageStudyRow>& rows);

// Every training configuration exercised by the panels plus the remaining
// model kinds; the gradient checks run over all of these.
std::vector<std::pair<std::string, TrainConfig>> shipped_configs();

}  // namespace selset

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tsd/stats.hpp"
#include "tsd/trainer.hpp"

namespace tsd {

/// One ablation cell: a named variation of the base config.
struct AblationCell {
  std::string group;  // full | modality | representations | fusion | regularization
  std::string name;   // row label
  TrainConfig cfg;
};

/// Expands the requested axes into cells. Valid axes: modality,
/// representations, fusion, regularization (or the single word "all").
/// The full model is always the first cell.
std::vector<AblationCell> ablation_cells(const TrainConfig& base,
                                         const std::vector<std::string>& axes);

struct CellResult {
  std::string group;
  std::string name;
  std::uint64_t seed = 0;
  MetricsResult test;
  double val_mse = 0.0;  // validation task loss at the best epoch
};

/// One run per cell per seed (model seeds base.seed..base.seed+n_seeds-1,
/// shared dataset). Writes per-run metrics under
/// out_dir/<cell>/seed_<s>/ plus cells.csv and a Table-shaped report.csv.
std::vector<CellResult> run_ablation(const TrainConfig& base,
                                     const std::vector<std::string>& axes, std::size_t n_seeds,
                                     const std::string& out_dir);

void write_ablation_report(const std::string& path, const std::vector<CellResult>& results);

struct SweepRow {
  std::string lambda_name;  // lambda1..lambda4
  double value = 0.0;
  std::uint64_t seed = 0;
  double mae = 0.0;
  double acc7 = 0.0;
  double val_mse = 0.0;
};

/// One-at-a-time sensitivity sweep over every lambda with the given grid;
/// rows come back sorted by (lambda name, value, seed).
std::vector<SweepRow> sweep_lambda(const TrainConfig& base, const std::vector<double>& grid,
                                   std::size_t n_seeds, const std::string& out_dir);

struct StatsRow {
  std::string metric;
  double mean_a = 0.0;
  double mean_b = 0.0;
  TTestResult test;
  double p_holm = 1.0;
};

/// Seed-wise paired comparison of two run directories produced by
/// run_ablation (or any directory tree with seed_<s>/metrics.csv): paired
/// t-tests on the final test metrics, Holm-adjusted within the block.
std::vector<StatsRow> compare_runs(const std::string& dir_a, const std::string& dir_b);

/// Final test-row metrics of one run directory, keyed by metric name.
std::vector<std::pair<std::string, double>> read_final_test_metrics(const std::string& run_dir);

}  // namespace tsd

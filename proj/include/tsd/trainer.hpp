// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tsd/checkpoint.hpp"
#include "tsd/config.hpp"
#include "tsd/dataset_io.hpp"
#include "tsd/metrics.hpp"
#include "tsd/model.hpp"

namespace tsd {

/// Per-subspace gate statistics over an evaluation pass (the data behind the
/// fusion-weight diagnostics).
struct PsiStat {
  std::string key;
  double mean = 0.0;
  double stddev = 0.0;
  double contribution = 0.0;  // mean of psi_k * |pooled_k|_2 per sample
};

struct EvalOutcome {
  MetricsResult metrics;
  LossBreakdown losses;
  std::vector<double> mean_psi;      // per fusion subspace; empty for sum/concat
  std::vector<PsiStat> psi_stats;    // empty unless saca fusion with subspaces
  std::vector<double> predictions;   // per sample, in index order
  std::vector<double> labels;
};

struct TrainResult {
  std::vector<MetricsRow> history;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_value = 0.0;  // monitored validation metric at the best epoch
  std::vector<ParamSnapshot> best_params;
  EvalOutcome final_test;
};

/// Model config with the dataset-derived fields (raw widths, class count)
/// resolved; rejects a config whose task mode disagrees with the dataset.
ModelConfig resolve_model_config(const TrainConfig& cfg, const Dataset& data);

/// Forward pass over the given samples without gradients: predictions,
/// metrics, loss breakdown (averaged over batches of at least 2), and gate
/// statistics. Deterministic; no RNG is consumed.
EvalOutcome evaluate(const TsdModel& model, const Dataset& data,
                     const std::vector<std::size_t>& indices, const TrainConfig& cfg);

/// Full training run with per-epoch validation, best-checkpoint retention,
/// and early stopping on validation MAE (regression) or accuracy
/// (classification). When out_dir is nonempty, writes metrics.csv,
/// checkpoint.tsdc, and psi_summary.csv there.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const Split& split,
                  const std::string& out_dir = "");

/// Writes pooled subspace embeddings + gate weights + labels for every given
/// sample into the dataset container: modality block l holds the 12 pooled
/// embeddings (12 * d_c wide), block v the gate weights (9 wide), block a
/// one copy of the label; the label field repeats the label.
void export_embeddings(const TsdModel& model, const Dataset& data,
                       const std::vector<std::size_t>& indices, const std::string& path);

/// Number of gate slots a model reports (9, or 3 when non-disentangled).
std::size_t psi_slots(const ModelConfig& cfg);

}  // namespace tsd

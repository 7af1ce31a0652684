// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tsd/config.hpp"
#include "tsd/losses.hpp"

namespace tsd {

struct MetricsResult {
  double mae = 0.0;
  double mse = 0.0;
  double acc7 = 0.0;  // percent; plain accuracy in classification mode
  double acc2 = 0.0;  // percent
  double f1 = 0.0;    // percent; macro-F1 in classification mode
  bool acc2_defined = true;  // false when the nonzero-label subset is empty
};

/// Sentiment bucket of a continuous score: round(clip(x, -3, 3)) with ties
/// away from zero, shifted to 0..6.
int acc7_bucket(double x);

/// Regression: MAE, MSE, ACC7 over rounded buckets, ACC2/F1 over the binary
/// task selected by `mode` (predictions >= 0 count as positive).
/// Classification: accuracy and macro-F1 over argmax predictions; MAE/MSE
/// are computed on the class indices.
MetricsResult compute_metrics(const std::vector<double>& preds,
                              const std::vector<double>& labels, TaskMode task,
                              Acc2Mode mode = Acc2Mode::exclude_zero,
                              std::size_t n_classes = 0);

/// Argmax rows of a [B x C] logit tensor.
std::vector<double> argmax_rows(const Tensor& logits);

/// One row of a run's metrics file.
struct MetricsRow {
  std::size_t epoch = 0;
  std::string split;
  MetricsResult metrics;
  LossBreakdown losses;
  std::vector<double> mean_psi;  // one entry per fusion subspace; may be empty
};

/// Fixed CSV header for metrics files (documented schema).
std::string metrics_csv_header(std::size_t n_psi);
std::string metrics_csv_row(const MetricsRow& row, std::size_t n_psi);

/// Shortest round-trip decimal rendering of a double (deterministic).
std::string format_double(double v);

}  // namespace tsd

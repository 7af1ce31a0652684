// SPDX-License-Identifier: Apache-2.0
#include "tsd/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace tsd {

int acc7_bucket(double x) {
  const double clipped = std::clamp(x, -3.0, 3.0);
  return static_cast<int>(std::lround(clipped)) + 3;
}

namespace {

// Weighted binary F1 over {negative, positive} with supports as weights.
double weighted_binary_f1(const std::vector<bool>& pred_pos, const std::vector<bool>& label_pos) {
  const std::size_t n = pred_pos.size();
  auto f1_for = [&](bool positive_class) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = pred_pos[i] == positive_class;
      const bool l = label_pos[i] == positive_class;
      if (p && l) ++tp;
      else if (p && !l) ++fp;
      else if (!p && l) ++fn;
    }
    const double denom = 2 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2 * tp / denom;
  };
  double support_pos = 0;
  for (bool l : label_pos) support_pos += l ? 1 : 0;
  const double support_neg = static_cast<double>(n) - support_pos;
  if (n == 0) return 0.0;
  return (f1_for(true) * support_pos + f1_for(false) * support_neg) / static_cast<double>(n);
}

MetricsResult classification_metrics(const std::vector<double>& preds,
                                     const std::vector<double>& labels, std::size_t n_classes) {
  MetricsResult r;
  r.acc2_defined = false;
  const std::size_t n = preds.size();
  double hits = 0, abs_err = 0, sq_err = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (preds[i] == labels[i]) ++hits;
    abs_err += std::abs(preds[i] - labels[i]);
    sq_err += (preds[i] - labels[i]) * (preds[i] - labels[i]);
  }
  r.acc7 = 100.0 * hits / static_cast<double>(n);
  r.mae = abs_err / static_cast<double>(n);
  r.mse = sq_err / static_cast<double>(n);

  // macro-F1 over all classes
  if (n_classes == 0) {
    for (double l : labels) n_classes = std::max(n_classes, static_cast<std::size_t>(l) + 1);
    for (double p : preds) n_classes = std::max(n_classes, static_cast<std::size_t>(p) + 1);
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = static_cast<std::size_t>(preds[i]) == c;
      const bool l = static_cast<std::size_t>(labels[i]) == c;
      if (p && l) ++tp;
      else if (p && !l) ++fp;
      else if (!p && l) ++fn;
    }
    const double denom = 2 * tp + fp + fn;
    f1_sum += denom == 0.0 ? 0.0 : 2 * tp / denom;
  }
  r.f1 = 100.0 * f1_sum / static_cast<double>(n_classes);
  r.acc2 = 0.0;
  return r;
}

}  // namespace

MetricsResult compute_metrics(const std::vector<double>& preds,
                              const std::vector<double>& labels, TaskMode task, Acc2Mode mode,
                              std::size_t n_classes) {
  if (preds.size() != labels.size()) {
    throw contract_error("compute_metrics: prediction/label lengths differ");
  }
  if (preds.empty()) throw contract_error("compute_metrics: empty input");

  if (task == TaskMode::classification) {
    return classification_metrics(preds, labels, n_classes);
  }

  MetricsResult r;
  const std::size_t n = preds.size();
  double abs_err = 0, sq_err = 0, hits7 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    abs_err += std::abs(preds[i] - labels[i]);
    sq_err += (preds[i] - labels[i]) * (preds[i] - labels[i]);
    if (acc7_bucket(preds[i]) == acc7_bucket(labels[i])) ++hits7;
  }
  r.mae = abs_err / static_cast<double>(n);
  r.mse = sq_err / static_cast<double>(n);
  r.acc7 = 100.0 * hits7 / static_cast<double>(n);

  std::vector<bool> pred_pos, label_pos;
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == Acc2Mode::exclude_zero && labels[i] == 0.0) continue;
    label_pos.push_back(mode == Acc2Mode::exclude_zero ? labels[i] > 0.0 : labels[i] >= 0.0);
    pred_pos.push_back(preds[i] >= 0.0);
  }
  if (label_pos.empty()) {
    r.acc2_defined = false;
    r.acc2 = 0.0;
    r.f1 = 0.0;
    return r;
  }
  double hits2 = 0;
  for (std::size_t i = 0; i < label_pos.size(); ++i)
    if (pred_pos[i] == label_pos[i]) ++hits2;
  r.acc2 = 100.0 * hits2 / static_cast<double>(label_pos.size());
  r.f1 = 100.0 * weighted_binary_f1(pred_pos, label_pos);
  return r;
}

std::vector<double> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw shape_error("argmax_rows: expected [B x C]");
  const std::size_t b = logits.extent(0), c = logits.extent(1);
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    double best_v = logits.at({i, 0});
    for (std::size_t j = 1; j < c; ++j) {
      if (logits.at({i, j}) > best_v) {
        best_v = logits.at({i, j});
        best = j;
      }
    }
    out[i] = static_cast<double>(best);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string metrics_csv_header(std::size_t n_psi) {
  std::string h =
      "epoch,split,mae,mse,acc7,acc2,f1,acc2_defined,"
      "l_com,l_pair,l_pri,l_ort,l_sup,l_ts,l_task,l_all";
  for (std::size_t k = 0; k < n_psi; ++k) h += ",psi_" + std::to_string(k);
  return h;
}

std::string metrics_csv_row(const MetricsRow& row, std::size_t n_psi) {
  std::string s = std::to_string(row.epoch) + "," + row.split + "," +
                  format_double(row.metrics.mae) + "," + format_double(row.metrics.mse) + "," +
                  format_double(row.metrics.acc7) + "," + format_double(row.metrics.acc2) + "," +
                  format_double(row.metrics.f1) + "," + (row.metrics.acc2_defined ? "1" : "0");
  const LossBreakdown& l = row.losses;
  for (double v : {l.l_com, l.l_pair, l.l_pri, l.l_ort, l.l_sup, l.l_ts, l.l_task, l.l_all}) {
    s += "," + format_double(v);
  }
  for (std::size_t k = 0; k < n_psi; ++k) {
    s += "," + format_double(k < row.mean_psi.size() ? row.mean_psi[k] : 0.0);
  }
  return s;
}

}  // namespace tsd

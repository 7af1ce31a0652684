// SPDX-License-Identifier: Apache-2.0
#include "tsd/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tsd/optim.hpp"
#include "tsd/saca.hpp"

namespace tsd {

namespace {

void check_breakdown_finite(const LossBreakdown& b, std::size_t epoch, std::size_t step) {
  const std::pair<const char*, double> terms[] = {
      {"l_com", b.l_com}, {"l_pair", b.l_pair}, {"l_pri", b.l_pri}, {"l_ort", b.l_ort},
      {"l_sup", b.l_sup}, {"l_task", b.l_task}, {"l_ts", b.l_ts},   {"l_all", b.l_all}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw numeric_error("training diverged: " + std::string(name) + " is non-finite at epoch " +
                          std::to_string(epoch) + ", step " + std::to_string(step));
    }
  }
}

std::vector<double> predictions_of(const TsdModel& model, const TsdModel::ForwardOut& fwd) {
  if (model.config().mode == TaskMode::regression) return fwd.prediction.values();
  return argmax_rows(fwd.prediction);
}

}  // namespace

std::size_t psi_slots(const ModelConfig& cfg) { return cfg.non_disentangled ? 3 : 9; }

ModelConfig resolve_model_config(const TrainConfig& cfg, const Dataset& data) {
  ModelConfig m = cfg.model;
  for (int i = 0; i < 3; ++i) m.d_raw[i] = data.d[i];
  if ((m.mode == TaskMode::classification) != (data.label_mode == TaskMode::classification)) {
    throw config_error("model.mode does not match the dataset's label mode");
  }
  if (m.mode == TaskMode::classification) {
    if (data.n_classes < 2) throw config_error("dataset lacks a class count");
    m.n_classes = data.n_classes;
  }
  m.validate();
  return m;
}

EvalOutcome evaluate(const TsdModel& model, const Dataset& data,
                     const std::vector<std::size_t>& indices, const TrainConfig& cfg) {
  if (indices.empty()) throw contract_error("evaluate: empty index list");
  NoGradGuard no_grad;
  EvalOutcome out;
  const std::size_t slots = psi_slots(model.config());
  const bool gated = model.config().fusion == FusionVariant::saca;
  std::vector<double> psi_sum(slots, 0.0), psi_sq(slots, 0.0), contrib(slots, 0.0);
  std::size_t psi_count = 0;

  LossComputeOptions loss_opts = cfg.loss_options();
  double loss_weight = 0.0;
  LossBreakdown acc{};

  for (const auto& batch_idx : eval_batches(indices, cfg.batch_size)) {
    ModalityBatch batch = assemble_batch(data, batch_idx);
    TsdModel::ForwardOut fwd = model.forward(batch);
    const std::vector<double> preds = predictions_of(model, fwd);
    out.predictions.insert(out.predictions.end(), preds.begin(), preds.end());
    for (double l : batch.labels.values()) out.labels.push_back(l);

    if (gated && fwd.psi.defined()) {
      const std::size_t b = batch_idx.size();
      for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < slots; ++k) {
          const double w = fwd.psi.at({i, k});
          psi_sum[k] += w;
          psi_sq[k] += w * w;
        }
      }
      if (fwd.has_bundle) {
        // contribution proxy: psi_k times the norm of the pooled member
        const auto& keys = fusion_keys();
        for (std::size_t k = 0; k < keys.size(); ++k) {
          const Tensor* pooled = nullptr;
          switch (keys[k].kind) {
            case SubspaceKind::common: pooled = &fwd.pooled.common[keys[k].index]; break;
            case SubspaceKind::subshared: pooled = nullptr; break;
            case SubspaceKind::priv: pooled = &fwd.pooled.priv[keys[k].index]; break;
          }
          Tensor pooled_concat;
          if (keys[k].kind == SubspaceKind::subshared) {
            pooled_concat = pool(fwd.bundle.pair_concat[keys[k].index]);
            pooled = &pooled_concat;
          }
          for (std::size_t i = 0; i < batch_idx.size(); ++i) {
            double norm2 = 0.0;
            for (std::size_t j = 0; j < pooled->extent(1); ++j) {
              const double v = pooled->at({i, j});
              norm2 += v * v;
            }
            contrib[k] += fwd.psi.at({i, k}) * std::sqrt(norm2);
          }
        }
      }
      psi_count += b;
    }

    if (batch_idx.size() >= 2) {
      // loss breakdown needs the HSIC batch contract; no mixing RNG in eval
      LossResult lr = compute_losses(model, fwd, batch.labels, loss_opts, nullptr);
      const double w = static_cast<double>(batch_idx.size());
      acc.l_com += w * lr.breakdown.l_com;
      acc.l_pair += w * lr.breakdown.l_pair;
      acc.l_pri += w * lr.breakdown.l_pri;
      acc.l_ort += w * lr.breakdown.l_ort;
      acc.l_sup += w * lr.breakdown.l_sup;
      acc.l_ts += w * lr.breakdown.l_ts;
      acc.l_task += w * lr.breakdown.l_task;
      acc.l_all += w * lr.breakdown.l_all;
      acc.com_weight = lr.breakdown.com_weight;
      acc.weights = lr.breakdown.weights;
      loss_weight += w;
    }
  }

  if (loss_weight > 0) {
    acc.l_com /= loss_weight;
    acc.l_pair /= loss_weight;
    acc.l_pri /= loss_weight;
    acc.l_ort /= loss_weight;
    acc.l_sup /= loss_weight;
    acc.l_ts /= loss_weight;
    acc.l_task /= loss_weight;
    acc.l_all /= loss_weight;
  }
  out.losses = acc;

  out.metrics = compute_metrics(out.predictions, out.labels, model.config().mode, cfg.acc2_mode,
                                model.config().n_classes);
  if (psi_count > 0) {
    out.mean_psi.resize(slots);
    for (std::size_t k = 0; k < slots; ++k) out.mean_psi[k] = psi_sum[k] / psi_count;
    if (slots == 9) {
      const auto& keys = fusion_keys();
      out.psi_stats.resize(slots);
      for (std::size_t k = 0; k < slots; ++k) {
        PsiStat& s = out.psi_stats[k];
        s.key = keys[k].name();
        s.mean = psi_sum[k] / psi_count;
        const double var = std::max(0.0, psi_sq[k] / psi_count - s.mean * s.mean);
        s.stddev = std::sqrt(var);
        s.contribution = contrib[k] / psi_count;
      }
    }
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const Dataset& data, const Split& split,
                  const std::string& out_dir) {
  TrainConfig run_cfg = cfg;
  // class counts and raw widths come from the dataset; validate afterwards
  run_cfg.model = resolve_model_config(cfg, data);
  run_cfg.validate();
  const ModelConfig& mc = run_cfg.model;

  TsdModel model(mc, run_cfg.seed);
  LossComputeOptions loss_opts = run_cfg.loss_options();

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = run_cfg.learning_rate;
  adam_cfg.beta1 = run_cfg.beta1;
  adam_cfg.beta2 = run_cfg.beta2;
  adam_cfg.eps = run_cfg.adam_eps;
  adam_cfg.weight_decay = run_cfg.weight_decay;
  auto params = loss_opts.supervisor_active() && !mc.non_disentangled
                    ? model.parameters()
                    : model.parameters_without_supervisor();
  Adam adam(params, adam_cfg);

  Rng mix_rng = Rng(run_cfg.seed).derive(hash_name("supervisor-mix"));
  const std::size_t slots = psi_slots(mc);
  const bool regression = mc.mode == TaskMode::regression;

  TrainResult result;
  auto monitored = [&](const MetricsResult& m) { return regression ? m.mae : m.acc7; };
  auto improved = [&](double value, double best) {
    return regression ? value < best : value > best;
  };

  // epoch-0 row: the untrained model's validation status
  {
    EvalOutcome ev = evaluate(model, data, split.validation, run_cfg);
    result.history.push_back({0, "val", ev.metrics, ev.losses, ev.mean_psi});
    result.best_epoch = 0;
    result.best_value = monitored(ev.metrics);
    result.best_params = snapshot_params(model.parameters());
  }

  for (std::size_t epoch = 1; epoch <= run_cfg.max_epochs; ++epoch) {
    // training pass
    std::vector<double> train_preds, train_labels;
    std::vector<double> psi_sum(slots, 0.0);
    std::size_t psi_count = 0;
    LossBreakdown acc{};
    double loss_weight = 0.0;
    std::size_t step = 0;

    for (const auto& batch_idx :
         epoch_batches(split.train, run_cfg.batch_size, run_cfg.seed, epoch)) {
      ++step;
      ModalityBatch batch = assemble_batch(data, batch_idx);
      TsdModel::ForwardOut fwd = model.forward(batch);
      LossResult lr = compute_losses(model, fwd, batch.labels,
                                     loss_opts, loss_opts.supervisor_active() ? &mix_rng : nullptr);
      check_breakdown_finite(lr.breakdown, epoch, step);

      adam.zero_grad();
      backward(lr.l_all);
      adam.step();

      const std::vector<double> preds = predictions_of(model, fwd);
      train_preds.insert(train_preds.end(), preds.begin(), preds.end());
      for (double l : batch.labels.values()) train_labels.push_back(l);
      if (fwd.psi.defined()) {
        for (std::size_t i = 0; i < batch_idx.size(); ++i)
          for (std::size_t k = 0; k < slots; ++k) psi_sum[k] += fwd.psi.at({i, k});
        psi_count += batch_idx.size();
      }
      const double w = static_cast<double>(batch_idx.size());
      acc.l_com += w * lr.breakdown.l_com;
      acc.l_pair += w * lr.breakdown.l_pair;
      acc.l_pri += w * lr.breakdown.l_pri;
      acc.l_ort += w * lr.breakdown.l_ort;
      acc.l_sup += w * lr.breakdown.l_sup;
      acc.l_ts += w * lr.breakdown.l_ts;
      acc.l_task += w * lr.breakdown.l_task;
      acc.l_all += w * lr.breakdown.l_all;
      loss_weight += w;
    }
    if (loss_weight > 0) {
      acc.l_com /= loss_weight;
      acc.l_pair /= loss_weight;
      acc.l_pri /= loss_weight;
      acc.l_ort /= loss_weight;
      acc.l_sup /= loss_weight;
      acc.l_ts /= loss_weight;
      acc.l_task /= loss_weight;
      acc.l_all /= loss_weight;
    }

    MetricsRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.metrics = compute_metrics(train_preds, train_labels, mc.mode, run_cfg.acc2_mode,
                                        mc.n_classes);
    train_row.losses = acc;
    if (psi_count > 0) {
      train_row.mean_psi.resize(slots);
      for (std::size_t k = 0; k < slots; ++k) train_row.mean_psi[k] = psi_sum[k] / psi_count;
    }
    result.history.push_back(std::move(train_row));

    // validation pass
    EvalOutcome ev = evaluate(model, data, split.validation, run_cfg);
    result.history.push_back({epoch, "val", ev.metrics, ev.losses, ev.mean_psi});
    result.epochs_run = epoch;

    const double value = monitored(ev.metrics);
    if (improved(value, result.best_value)) {
      result.best_value = value;
      result.best_epoch = epoch;
      result.best_params = snapshot_params(model.parameters());
    } else if (epoch - result.best_epoch >= run_cfg.patience) {
      break;
    }
  }

  // restore the best checkpoint and score the test split
  restore_params(model.parameters(), result.best_params);
  result.final_test = evaluate(model, data, split.test, run_cfg);
  MetricsRow test_row;
  test_row.epoch = result.best_epoch;
  test_row.split = "test";
  test_row.metrics = result.final_test.metrics;
  test_row.losses = result.final_test.losses;
  test_row.mean_psi = result.final_test.mean_psi;
  result.history.push_back(std::move(test_row));

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream mf(out_dir + "/metrics.csv", std::ios::trunc);
    if (!mf) throw format_error("train: cannot write metrics to '" + out_dir + "'");
    mf << metrics_csv_header(slots) << "\n";
    for (const MetricsRow& row : result.history) mf << metrics_csv_row(row, slots) << "\n";
    write_checkpoint(out_dir + "/checkpoint.tsdc", result.best_params);
    if (!result.final_test.psi_stats.empty()) {
      std::ofstream pf(out_dir + "/psi_summary.csv", std::ios::trunc);
      pf << "subspace,mean_weight,std_weight,contribution\n";
      for (const PsiStat& s : result.final_test.psi_stats) {
        pf << s.key << "," << format_double(s.mean) << "," << format_double(s.stddev) << ","
           << format_double(s.contribution) << "\n";
      }
    }
  }
  return result;
}

void export_embeddings(const TsdModel& model, const Dataset& data,
                       const std::vector<std::size_t>& indices, const std::string& path) {
  if (model.config().non_disentangled) {
    throw contract_error("export_embeddings: non-disentangled models have no subspaces");
  }
  NoGradGuard no_grad;
  const std::size_t d_c = model.config().d_c;
  const std::size_t emb_width = 12 * d_c;

  Dataset out;
  out.label_mode = data.label_mode;
  out.n_classes = data.n_classes;
  out.n_samples = indices.size();
  out.t = {1, 1, 1};
  out.d = {static_cast<std::uint32_t>(emb_width), 9, 1};
  out.payload[0].reserve(indices.size() * emb_width);
  out.payload[1].reserve(indices.size() * 9);
  out.payload[2].reserve(indices.size());

  const bool gated = model.config().fusion == FusionVariant::saca;
  for (const auto& batch_idx : eval_batches(indices, 64)) {
    ModalityBatch batch = assemble_batch(data, batch_idx);
    TsdModel::ForwardOut fwd = model.forward(batch);
    const std::size_t b = batch_idx.size();
    for (std::size_t i = 0; i < b; ++i) {
      // 12 pooled embeddings in canonical order: c_l,c_v,c_a; the six
      // directional pair members in (pair, direction) order; p_l,p_v,p_a
      for (int m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < d_c; ++j)
          out.payload[0].push_back(fwd.pooled.common[m].at({i, j}));
      for (int p = 0; p < 3; ++p) {
        for (std::size_t j = 0; j < d_c; ++j)
          out.payload[0].push_back(fwd.pooled.pair_first[p].at({i, j}));
        for (std::size_t j = 0; j < d_c; ++j)
          out.payload[0].push_back(fwd.pooled.pair_second[p].at({i, j}));
      }
      for (int m = 0; m < 3; ++m)
        for (std::size_t j = 0; j < d_c; ++j)
          out.payload[0].push_back(fwd.pooled.priv[m].at({i, j}));
      for (std::size_t k = 0; k < 9; ++k) {
        out.payload[1].push_back(gated && fwd.psi.defined() ? fwd.psi.at({i, k}) : 0.0);
      }
      out.payload[2].push_back(batch.labels.values()[i]);
    }
  }
  for (std::size_t idx : indices) {
    if (data.label_mode == TaskMode::regression) {
      out.labels_reg.push_back(data.labels_reg[idx]);
    } else {
      out.labels_cls.push_back(data.labels_cls[idx]);
    }
  }
  write_dataset(path, out);
}

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#include "tsd/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace tsd {

namespace {

TrainConfig with_drop_modality(TrainConfig cfg, Modality m) {
  cfg.model.drop_modality[static_cast<int>(m)] = true;
  return cfg;
}

TrainConfig with_drop_kind(TrainConfig cfg, SubspaceKind k) {
  cfg.model.drop_kind[static_cast<int>(k)] = true;
  return cfg;
}

TrainConfig with_fusion(TrainConfig cfg, FusionVariant v) {
  cfg.model.fusion = v;
  return cfg;
}

TrainConfig with_loss_drop(TrainConfig cfg, LossDrop d) {
  cfg.drop_loss = d;
  return cfg;
}

}  // namespace

std::vector<AblationCell> ablation_cells(const TrainConfig& base,
                                         const std::vector<std::string>& axes) {
  bool want_mod = false, want_repr = false, want_fusion = false, want_reg = false;
  for (const std::string& a : axes) {
    if (a == "all") want_mod = want_repr = want_fusion = want_reg = true;
    else if (a == "modality") want_mod = true;
    else if (a == "representations") want_repr = true;
    else if (a == "fusion") want_fusion = true;
    else if (a == "regularization") want_reg = true;
    else throw config_error("ablate: unknown axis '" + a + "'");
  }

  std::vector<AblationCell> cells;
  cells.push_back({"full", "tsd", base});
  if (want_mod) {
    cells.push_back({"modality", "wo_linguistic", with_drop_modality(base, Modality::l)});
    cells.push_back({"modality", "wo_acoustic", with_drop_modality(base, Modality::a)});
    cells.push_back({"modality", "wo_visual", with_drop_modality(base, Modality::v)});
  }
  if (want_repr) {
    cells.push_back({"representations", "wo_common", with_drop_kind(base, SubspaceKind::common)});
    cells.push_back({"representations", "wo_private", with_drop_kind(base, SubspaceKind::priv)});
    cells.push_back(
        {"representations", "wo_subshared", with_drop_kind(base, SubspaceKind::subshared)});
    TrainConfig nd = base;
    nd.model.non_disentangled = true;
    cells.push_back({"representations", "non_disen", nd});
  }
  if (want_fusion) {
    cells.push_back({"fusion", "sum", with_fusion(base, FusionVariant::sum)});
    cells.push_back({"fusion", "concat", with_fusion(base, FusionVariant::concat)});
  }
  if (want_reg) {
    cells.push_back({"regularization", "wo_l_com", with_loss_drop(base, LossDrop::com)});
    cells.push_back({"regularization", "wo_l_pair", with_loss_drop(base, LossDrop::pair)});
    cells.push_back({"regularization", "wo_l_pri", with_loss_drop(base, LossDrop::pri)});
    cells.push_back({"regularization", "wo_l_ort", with_loss_drop(base, LossDrop::ort)});
    cells.push_back({"regularization", "wo_l_sup", with_loss_drop(base, LossDrop::sup)});
    TrainConfig to = base;
    to.task_only = true;
    to.weights = LossWeights{0.0, 0.0, 0.0, 0.0};
    cells.push_back({"regularization", "only_task", to});
  }
  return cells;
}

std::vector<CellResult> run_ablation(const TrainConfig& base,
                                     const std::vector<std::string>& axes, std::size_t n_seeds,
                                     const std::string& out_dir) {
  if (n_seeds == 0) throw contract_error("run_ablation: n_seeds must be >= 1");
  const std::vector<AblationCell> cells = ablation_cells(base, axes);

  SyntheticData synth = generate(base.data);
  Split split = make_splits(synth.dataset.n_samples, base.split_ratios, base.data.seed);

  std::vector<CellResult> results;
  for (const AblationCell& cell : cells) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      TrainConfig cfg = cell.cfg;
      cfg.seed = base.seed + s;
      std::string run_dir;
      if (!out_dir.empty()) {
        run_dir = out_dir + "/" + cell.name + "/seed_" + std::to_string(cfg.seed);
      }
      TrainResult tr = train(cfg, synth.dataset, split, run_dir);

      CellResult r;
      r.group = cell.group;
      r.name = cell.name;
      r.seed = cfg.seed;
      r.test = tr.final_test.metrics;
      // validation task loss at the retained best epoch
      for (const MetricsRow& row : tr.history) {
        if (row.split == "val" && row.epoch == tr.best_epoch) r.val_mse = row.losses.l_task;
      }
      results.push_back(std::move(r));
    }
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream cf(out_dir + "/cells.csv", std::ios::trunc);
    cf << "group,cell,seed,mae,mse,acc7,acc2,f1,val_mse\n";
    for (const CellResult& r : results) {
      cf << r.group << "," << r.name << "," << r.seed << "," << format_double(r.test.mae) << ","
         << format_double(r.test.mse) << "," << format_double(r.test.acc7) << ","
         << format_double(r.test.acc2) << "," << format_double(r.test.f1) << ","
         << format_double(r.val_mse) << "\n";
    }
    write_ablation_report(out_dir + "/report.csv", results);
  }
  return results;
}

void write_ablation_report(const std::string& path, const std::vector<CellResult>& results) {
  // Table-3 row structure: sections in a fixed order, one row per cell with
  // mean +/- std over seeds.
  struct Agg {
    std::vector<double> mae, acc7, val_mse;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::string, Agg> agg;
  for (const CellResult& r : results) {
    const std::string key = r.group + "/" + r.name;
    if (!agg.count(key)) order.emplace_back(r.group, r.name);
    agg[key].mae.push_back(r.test.mae);
    agg[key].acc7.push_back(r.test.acc7);
    agg[key].val_mse.push_back(r.val_mse);
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };

  std::ofstream f(path, std::ios::trunc);
  if (!f) throw format_error("ablation report: cannot write '" + path + "'");
  f << "group,cell,n_seeds,mae_mean,mae_std,acc7_mean,acc7_std,val_mse_mean,val_mse_std\n";
  const char* group_order[] = {"full", "modality", "representations", "fusion", "regularization"};
  for (const char* g : group_order) {
    for (const auto& [group, name] : order) {
      if (group != g) continue;
      const Agg& a = agg[group + "/" + name];
      f << group << "," << name << "," << a.mae.size() << "," << format_double(mean_of(a.mae))
        << "," << format_double(std_of(a.mae)) << "," << format_double(mean_of(a.acc7)) << ","
        << format_double(std_of(a.acc7)) << "," << format_double(mean_of(a.val_mse)) << ","
        << format_double(std_of(a.val_mse)) << "\n";
    }
  }
}

std::vector<SweepRow> sweep_lambda(const TrainConfig& base, const std::vector<double>& grid,
                                   std::size_t n_seeds, const std::string& out_dir) {
  if (grid.empty()) throw contract_error("sweep_lambda: empty grid");
  SyntheticData synth = generate(base.data);
  Split split = make_splits(synth.dataset.n_samples, base.split_ratios, base.data.seed);

  std::vector<SweepRow> rows;
  const char* names[] = {"lambda1", "lambda2", "lambda3", "lambda4"};
  for (int which = 0; which < 4; ++which) {
    for (double value : grid) {
      for (std::size_t s = 0; s < n_seeds; ++s) {
        TrainConfig cfg = base;
        switch (which) {
          case 0: cfg.weights.lambda1 = value; break;
          case 1: cfg.weights.lambda2 = value; break;
          case 2: cfg.weights.lambda3 = value; break;
          case 3: cfg.weights.lambda4 = value; break;
        }
        cfg.seed = base.seed + s;
        TrainResult tr = train(cfg, synth.dataset, split, "");
        SweepRow r;
        r.lambda_name = names[which];
        r.value = value;
        r.seed = cfg.seed;
        r.mae = tr.final_test.metrics.mae;
        r.acc7 = tr.final_test.metrics.acc7;
        for (const MetricsRow& row : tr.history) {
          if (row.split == "val" && row.epoch == tr.best_epoch) r.val_mse = row.losses.l_task;
        }
        rows.push_back(std::move(r));
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.lambda_name != b.lambda_name) return a.lambda_name < b.lambda_name;
    if (a.value != b.value) return a.value < b.value;
    return a.seed < b.seed;
  });

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/sweep.csv", std::ios::trunc);
    f << "lambda,value,seed,mae,acc7,val_mse\n";
    for (const SweepRow& r : rows) {
      f << r.lambda_name << "," << format_double(r.value) << "," << r.seed << ","
        << format_double(r.mae) << "," << format_double(r.acc7) << ","
        << format_double(r.val_mse) << "\n";
    }
  }
  return rows;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, double>> read_final_test_metrics(const std::string& run_dir) {
  const std::string path = run_dir + "/metrics.csv";
  std::ifstream f(path);
  if (!f) throw format_error("stats: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw format_error("stats: empty metrics file '" + path + "'");
  const std::vector<std::string> header = split_csv_line(line);
  std::vector<std::string> test_row;
  while (std::getline(f, line)) {
    const auto cells = split_csv_line(line);
    if (cells.size() >= 2 && cells[1] == "test") test_row = cells;
  }
  if (test_row.empty()) throw format_error("stats: no test row in '" + path + "'");
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 2; i < header.size() && i < test_row.size(); ++i) {
    try {
      out.emplace_back(header[i], std::stod(test_row[i]));
    } catch (const std::exception&) {
      // non-numeric column; skip
    }
  }
  return out;
}

std::vector<StatsRow> compare_runs(const std::string& dir_a, const std::string& dir_b) {
  namespace fs = std::filesystem;
  auto seeds_of = [](const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0) {
        out.push_back(entry.path().filename().string());
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto seeds_a = seeds_of(dir_a);
  const auto seeds_b = seeds_of(dir_b);
  std::vector<std::string> shared;
  std::set_intersection(seeds_a.begin(), seeds_a.end(), seeds_b.begin(), seeds_b.end(),
                        std::back_inserter(shared));
  if (shared.size() < 2) {
    throw contract_error("stats: need at least 2 shared seeds between '" + dir_a + "' and '" +
                         dir_b + "'");
  }

  const char* metric_names[] = {"mae", "acc7", "acc2", "f1"};
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  for (const std::string& seed : shared) {
    auto ma = read_final_test_metrics(dir_a + "/" + seed);
    auto mb = read_final_test_metrics(dir_b + "/" + seed);
    auto find = [](const auto& vec, const std::string& key) {
      for (const auto& [k, v] : vec)
        if (k == key) return v;
      throw format_error("stats: metric '" + key + "' missing from a run");
    };
    for (const char* m : metric_names) {
      series[m].first.push_back(find(ma, m));
      series[m].second.push_back(find(mb, m));
    }
  }

  std::vector<StatsRow> rows;
  std::vector<double> raw_ps;
  for (const char* m : metric_names) {
    StatsRow r;
    r.metric = m;
    const auto& [a, b] = series[m];
    double sa = 0.0, sb = 0.0;
    for (double v : a) sa += v;
    for (double v : b) sb += v;
    r.mean_a = sa / static_cast<double>(a.size());
    r.mean_b = sb / static_cast<double>(b.size());
    r.test = paired_t_test(a, b);
    raw_ps.push_back(r.test.p);
    rows.push_back(std::move(r));
  }
  const std::vector<double> adjusted = holm_correct(raw_ps);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].p_holm = adjusted[i];
  return rows;
}

}  // namespace tsd

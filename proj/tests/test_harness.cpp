// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "tsd/ablation.hpp"
#include "tsd/optim.hpp"
#include "tsd/probe.hpp"
#include "tsd/trainer.hpp"

using namespace tsd;

namespace {

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 3;
  cfg.patience = 2;
  cfg.seed = 5;
  cfg.model.d_m = 8;
  cfg.model.d_z = 8;
  cfg.model.d_c = 8;
  cfg.model.d_h = 8;
  cfg.model.head_hidden = 8;
  cfg.model.heads = 2;
  cfg.data.n_samples = 80;
  cfg.data.t = {4, 5, 6};
  cfg.data.d_raw = {6, 6, 6};
  cfg.data.dim_g = 2;
  cfg.data.dim_u = {2, 2, 2};
  cfg.data.dim_r = {2, 2, 2};
  cfg.data.noise_sigma = 0.1;
  cfg.data.w_g = 0.3;
  cfg.data.w_u = {0.3, 0.1, 0.1};
  cfg.data.w_r = {0.1, 0.1, 0.1};
  cfg.data.seed = 9;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
  Tensor w = Tensor::from_data({3}, {1, 2, 3}, true);
  AdamConfig cfg;
  cfg.weight_decay = 0.0;
  Adam adam({{"w", w}}, cfg);
  adam.zero_grad();
  adam.step();
  CHECK(w.values() == std::vector<double>{1, 2, 3});
}

TEST_CASE("adam first step is -lr in the gradient direction") {
  Tensor w = Tensor::from_data({2}, {0.5, -0.5}, true);
  AdamConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.weight_decay = 0.0;
  cfg.eps = 1e-12;
  Adam adam({{"w", w}}, cfg);
  backward(sum(mul(w, Tensor::from_data({2}, {2.0, -3.0}))));  // grad = [2, -3]
  adam.step();
  CHECK(w.values()[0] == doctest::Approx(0.5 - 1e-3).epsilon(1e-9));
  CHECK(w.values()[1] == doctest::Approx(-0.5 + 1e-3).epsilon(1e-9));
}

TEST_CASE("adam runs are bit-deterministic") {
  auto run = []() {
    Rng rng(3);
    Tensor w = Tensor::randn({4}, rng, true);
    AdamConfig cfg;
    Adam adam({{"w", w}}, cfg);
    for (int i = 0; i < 5; ++i) {
      adam.zero_grad();
      backward(sum(square(w)));
      adam.step();
    }
    return w.values();
  };
  CHECK(run() == run());
}

TEST_CASE("acc7 binning convention") {
  CHECK(acc7_bucket(2.6) == 6);
  CHECK(acc7_bucket(2.4) == 5);
  CHECK(acc7_bucket(2.5) == 6);    // ties away from zero
  CHECK(acc7_bucket(-2.5) == 0);
  CHECK(acc7_bucket(0.0) == 3);
  CHECK(acc7_bucket(7.0) == 6);    // clipped
  CHECK(acc7_bucket(-9.0) == 0);
}

TEST_CASE("compute_metrics regression oracle cases") {
  MetricsResult perfect = compute_metrics({1.0, -2.0, 0.5}, {1.0, -2.0, 0.5},
                                          TaskMode::regression);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.acc7 == 100.0);
  CHECK(perfect.acc2 == 100.0);
  CHECK(perfect.f1 == 100.0);
  CHECK(perfect.acc2_defined);

  MetricsResult degenerate = compute_metrics({1.0, -1.0}, {0.0, 0.0}, TaskMode::regression);
  CHECK(degenerate.mae == doctest::Approx(1.0));
  CHECK_FALSE(degenerate.acc2_defined);
  CHECK(degenerate.acc2 == 0.0);
  CHECK(degenerate.f1 == 0.0);

  // 2.6 -> bucket 6, 2.4 -> bucket 5: a miss
  MetricsResult miss = compute_metrics({2.4}, {2.6}, TaskMode::regression);
  CHECK(miss.acc7 == 0.0);

  // MAE is translation covariant
  MetricsResult base = compute_metrics({1.0, 2.0, 3.0}, {0.5, 2.5, 2.0}, TaskMode::regression);
  MetricsResult shifted = compute_metrics({11.0, 12.0, 13.0}, {10.5, 12.5, 12.0},
                                          TaskMode::regression);
  CHECK(base.mae == doctest::Approx(shifted.mae).epsilon(1e-12));
}

TEST_CASE("acc2 modes treat zero labels differently") {
  const std::vector<double> preds = {0.5, -0.5, 0.5};
  const std::vector<double> labels = {1.0, -1.0, 0.0};
  MetricsResult excl = compute_metrics(preds, labels, TaskMode::regression,
                                       Acc2Mode::exclude_zero);
  CHECK(excl.acc2 == 100.0);  // zero-label sample excluded
  MetricsResult incl = compute_metrics(preds, labels, TaskMode::regression,
                                       Acc2Mode::neg_vs_nonneg);
  CHECK(incl.acc2 == 100.0);  // zero label counts as positive, pred 0.5 >= 0
  MetricsResult incl2 = compute_metrics({0.5, -0.5, -0.5}, labels, TaskMode::regression,
                                        Acc2Mode::neg_vs_nonneg);
  CHECK(incl2.acc2 == doctest::Approx(100.0 * 2.0 / 3.0));
}

TEST_CASE("classification metrics") {
  MetricsResult m = compute_metrics({0, 1, 2, 2}, {0, 1, 2, 1}, TaskMode::classification,
                                    Acc2Mode::exclude_zero, 3);
  CHECK(m.acc7 == doctest::Approx(75.0));
  CHECK_FALSE(m.acc2_defined);
  // class F1: c0 = 1, c1 = 2/3, c2 = 2/3 -> macro = 7/9
  CHECK(m.f1 == doctest::Approx(100.0 * 7.0 / 9.0).epsilon(1e-12));
}

TEST_CASE("config parser round trip and fail-closed behavior") {
  const std::string text = R"(
# comment
[model]
d_z = 8
heads = 2

[train]
batch_size = 4
seed = 42

[loss]
lambda3 = 0.5

[data]
n_samples = 40
dim_g = 2
dim_u_lv = 2
dim_u_la = 2
dim_u_va = 2
dim_r_l = 2
dim_r_v = 2
dim_r_a = 2

[ablation]
drop_loss = ort
)";
  ConfigMap cm = ConfigMap::parse_string(text);
  TrainConfig cfg = load_train_config(cm);
  CHECK(cfg.model.d_z == 8);
  CHECK(cfg.model.d_c == 8);  // defaults to d_z
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.seed == 42);
  CHECK(cfg.weights.lambda3 == 0.5);
  CHECK(cfg.drop_loss == LossDrop::ort);

  ConfigMap bad = ConfigMap::parse_string("[train]\nbatch_sise = 4\n");
  CHECK_THROWS_AS(load_train_config(bad), config_error);

  CHECK_THROWS_AS(ConfigMap::parse_string("key_without_section = 1\n"), config_error);
  // type errors surface when the key is read
  ConfigMap not_a_number = ConfigMap::parse_string("[train]\nbatch_size = nope\n");
  CHECK_THROWS_AS(load_train_config(not_a_number), config_error);
  CHECK_THROWS_AS(ConfigMap::parse_string("[a]\nx = 1\nx = 2\n"), config_error);
}

TEST_CASE("training is deterministic: identical runs write identical files") {
  TrainConfig cfg = small_config();
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);

  const std::string dir1 = "/tmp/tsd_det_a", dir2 = "/tmp/tsd_det_b";
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
  train(cfg, synth.dataset, split, dir1);
  train(cfg, synth.dataset, split, dir2);
  CHECK(slurp(dir1 + "/metrics.csv") == slurp(dir2 + "/metrics.csv"));
  CHECK(slurp(dir1 + "/checkpoint.tsdc") == slurp(dir2 + "/checkpoint.tsdc"));
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("checkpoint restore reproduces validation metrics exactly") {
  TrainConfig cfg = small_config();
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  const std::string dir = "/tmp/tsd_ckpt_test";
  std::filesystem::remove_all(dir);
  TrainResult res = train(cfg, synth.dataset, split, dir);

  TsdModel model(resolve_model_config(cfg, synth.dataset), cfg.seed);
  restore_params(model.parameters(), read_checkpoint(dir + "/checkpoint.tsdc"));
  EvalOutcome ev = evaluate(model, synth.dataset, split.test, cfg);
  CHECK(ev.metrics.mae == res.final_test.metrics.mae);  // bitwise
  CHECK(ev.metrics.acc7 == res.final_test.metrics.acc7);
  CHECK(ev.losses.l_all == res.final_test.losses.l_all);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint format errors") {
  const std::string path = "/tmp/tsd_ckpt_bad.tsdc";
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "NOPE";
  }
  CHECK_THROWS_AS(read_checkpoint(path), format_error);
  std::remove(path.c_str());

  Tensor w = Tensor::from_data({2}, {1, 2}, true);
  write_checkpoint(path, snapshot_params({{"w", w}}));
  Tensor other = Tensor::from_data({3}, {1, 2, 3}, true);
  CHECK_THROWS_AS(restore_params({{"w", other}}, read_checkpoint(path)), format_error);
  CHECK_THROWS_AS(restore_params({{"missing", w}}, read_checkpoint(path)), format_error);
  std::remove(path.c_str());
}

TEST_CASE("early stopping halts patience epochs after the best epoch") {
  TrainConfig cfg = small_config();
  cfg.max_epochs = 30;
  cfg.patience = 2;
  cfg.learning_rate = 0.0001;
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  TrainResult res = train(cfg, synth.dataset, split, "");
  CHECK(res.epochs_run <= cfg.max_epochs);
  if (res.epochs_run < cfg.max_epochs) {
    CHECK(res.epochs_run == res.best_epoch + cfg.patience);
  }
}

TEST_CASE("training aborts with the offending term named on a non-finite loss") {
  TrainConfig cfg = small_config();
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  synth.dataset.labels_reg[split.train[0]] = std::nan("");  // poisons l_task
  CHECK_THROWS_WITH_AS(train(cfg, synth.dataset, split, ""),
                       doctest::Contains("l_task is non-finite"), numeric_error);
}

TEST_CASE("classification training runs end to end") {
  TrainConfig cfg = small_config();
  cfg.model.mode = TaskMode::classification;
  cfg.data.label_kind = LabelKind::class7;
  cfg.max_epochs = 2;
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  TrainResult res = train(cfg, synth.dataset, split, "");
  CHECK(res.final_test.metrics.acc7 >= 0.0);
  CHECK(res.final_test.metrics.acc7 <= 100.0);
  CHECK_FALSE(res.final_test.metrics.acc2_defined);
}

TEST_CASE("resolve_model_config rejects mode mismatches") {
  TrainConfig cfg = small_config();
  SyntheticData synth = generate(cfg.data);
  cfg.model.mode = TaskMode::classification;
  CHECK_THROWS_AS(resolve_model_config(cfg, synth.dataset), config_error);
}

TEST_CASE("export_embeddings writes (n, 12 d_c + 9 + 1) rows with bitwise labels") {
  TrainConfig cfg = small_config();
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  TsdModel model(resolve_model_config(cfg, synth.dataset), cfg.seed);

  const std::string path = "/tmp/tsd_emb_test.tsd1";
  export_embeddings(model, synth.dataset, split.test, path);
  Dataset emb = read_dataset(path);
  CHECK(emb.n_samples == split.test.size());
  CHECK(emb.d[0] == 12 * cfg.model.d_c);
  CHECK(emb.d[1] == 9);
  CHECK(emb.d[2] == 1);
  CHECK(emb.t == std::array<std::uint32_t, 3>{1, 1, 1});
  for (std::size_t i = 0; i < emb.n_samples; ++i) {
    CHECK(emb.labels_reg[i] == synth.dataset.labels_reg[split.test[i]]);  // bitwise
    CHECK(emb.payload[2][i] == synth.dataset.labels_reg[split.test[i]]);
  }
  // deterministic
  export_embeddings(model, synth.dataset, split.test, path + ".b");
  CHECK(slurp(path) == slurp(path + ".b"));
  std::remove(path.c_str());
  std::remove((path + ".b").c_str());
}

TEST_CASE("ridge probe of a latent from itself gives R^2 = 1") {
  Rng rng(4);
  const std::size_t n = 50, p = 3;
  std::vector<double> x(n * p);
  for (double& v : x) v = rng.normal();
  CHECK(ridge_r2(x, n, p, x, p) == doctest::Approx(1.0).epsilon(1e-6));

  // constant target convention
  std::vector<double> constant(n, 2.0);
  CHECK(ridge_r2(x, n, p, constant, 1) == 0.0);
}

TEST_CASE("probe report covers every (latent, embedding) pairing") {
  TrainConfig cfg = small_config();
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  TsdModel model(resolve_model_config(cfg, synth.dataset), cfg.seed);
  auto rows = probe_disentanglement(model, synth, split.test);
  CHECK(rows.size() == 7 * 15);  // 7 latent groups x (12 pooled + 3 concat)
  for (const ProbeRow& r : rows) {
    CHECK(std::isfinite(r.r2));
    CHECK(r.r2 <= 1.0 + 1e-9);
  }
  CHECK(probe_r2(rows, "u_lv", "s_lv") == probe_r2(rows, "u_lv", "s_lv"));
  CHECK_THROWS_AS(probe_r2(rows, "nope", "s_lv"), contract_error);
}

TEST_CASE("ablation cells cover the Table-3 axes with definitional settings") {
  TrainConfig base = small_config();
  auto cells = ablation_cells(base, {"all"});
  REQUIRE(cells.size() == 16);
  CHECK(cells[0].name == "tsd");

  auto find = [&](const std::string& name) -> const AblationCell& {
    for (const auto& c : cells)
      if (c.name == name) return c;
    throw std::runtime_error("cell not found: " + name);
  };
  const AblationCell& only_task = find("only_task");
  CHECK(only_task.cfg.task_only);
  CHECK(only_task.cfg.weights.lambda1 == 0.0);
  CHECK(only_task.cfg.weights.lambda4 == 0.0);
  CHECK_FALSE(only_task.cfg.loss_options().supervisor_active());

  const AblationCell& wo_visual = find("wo_visual");
  CHECK(wo_visual.cfg.model.drop_modality[static_cast<int>(Modality::v)]);
  CHECK_FALSE(wo_visual.cfg.model.drop_modality[static_cast<int>(Modality::l)]);

  const AblationCell& non_disen = find("non_disen");
  CHECK(non_disen.cfg.model.non_disentangled);

  CHECK_THROWS_AS(ablation_cells(base, {"bogus"}), config_error);
}

TEST_CASE("sweep grid produces sorted rows with the default point included") {
  TrainConfig cfg = small_config();
  cfg.max_epochs = 1;
  cfg.data.n_samples = 40;
  auto rows = sweep_lambda(cfg, {0.2, 0.1}, 2, "");
  REQUIRE(rows.size() == 2 * 4 * 2);  // grid x lambdas x seeds
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& a = rows[i - 1];
    const auto& b = rows[i];
    const bool sorted = a.lambda_name < b.lambda_name ||
                        (a.lambda_name == b.lambda_name &&
                         (a.value < b.value || (a.value == b.value && a.seed < b.seed)));
    CHECK(sorted);
  }
}

TEST_CASE("stats runner compares two run trees with Holm correction") {
  TrainConfig cfg = small_config();
  cfg.max_epochs = 2;
  SyntheticData synth = generate(cfg.data);
  Split split = make_splits(synth.dataset.n_samples, cfg.split_ratios, cfg.data.seed);

  const std::string root = "/tmp/tsd_stats_test";
  std::filesystem::remove_all(root);
  for (std::uint64_t s = 0; s < 3; ++s) {
    TrainConfig a = cfg;
    a.seed = 100 + s;
    train(a, synth.dataset, split, root + "/a/seed_" + std::to_string(100 + s));
    TrainConfig b = cfg;
    b.seed = 100 + s;
    b.model.fusion = FusionVariant::sum;
    train(b, synth.dataset, split, root + "/b/seed_" + std::to_string(100 + s));
  }
  auto rows = compare_runs(root + "/a", root + "/b");
  REQUIRE(rows.size() == 4);  // mae, acc7, acc2, f1
  for (const StatsRow& r : rows) {
    CHECK(r.p_holm >= r.test.p);
    CHECK(r.p_holm <= 1.0);
    CHECK(r.test.df == 2.0);
  }
  std::filesystem::remove_all(root);
}

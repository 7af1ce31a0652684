// SPDX-License-Identifier: Apache-2.0
// Command-line front end: dataset synthesis, training, evaluation, ablation
// grids, lambda sweeps, significance statistics, and embedding export.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tsd/ablation.hpp"
#include "tsd/probe.hpp"
#include "tsd/trainer.hpp"

namespace {

using namespace tsd;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed_override = -1;
};

TrainConfig load_config(const CommonArgs& args) {
  if (args.config_path.empty()) throw config_error("--config is required");
  ConfigMap cm = ConfigMap::parse_file(args.config_path);
  TrainConfig cfg = load_train_config(cm);
  if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
  return cfg;
}

struct LoadedData {
  Dataset dataset;
  Split split;
  // generated data keeps its latents for probing
  std::optional<SyntheticData> synth;
};

LoadedData obtain_data(const TrainConfig& cfg, const std::string& dataset_path) {
  LoadedData out;
  if (!dataset_path.empty()) {
    out.dataset = read_dataset(dataset_path);
  } else {
    SyntheticData synth = generate(cfg.data);
    out.dataset = synth.dataset;
    out.synth = std::move(synth);
  }
  out.split = make_splits(out.dataset.n_samples, cfg.split_ratios, cfg.data.seed);
  return out;
}

const std::vector<std::size_t>& pick_split(const Split& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.validation;
  if (name == "test") return split.test;
  throw config_error("--split must be train, val, or test");
}

void print_metrics(const std::string& tag, const MetricsResult& m) {
  std::cout << tag << ": mae=" << format_double(m.mae) << " mse=" << format_double(m.mse)
            << " acc7=" << format_double(m.acc7) << " acc2=" << format_double(m.acc2)
            << " f1=" << format_double(m.f1);
  if (!m.acc2_defined) std::cout << " (acc2/f1 undefined: no nonzero labels)";
  std::cout << "\n";
}

int cmd_synth(const std::string& spec_path, const std::string& out_path) {
  ConfigMap cm = ConfigMap::parse_file(spec_path);
  SyntheticSpec spec = load_synthetic_spec(cm);
  SyntheticData synth = generate(spec);
  write_dataset(out_path, synth.dataset);
  std::cout << "wrote " << synth.dataset.n_samples << " samples to " << out_path << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args, const std::string& dataset_path) {
  TrainConfig cfg = load_config(args);
  LoadedData data = obtain_data(cfg, dataset_path);
  TrainResult res = train(cfg, data.dataset, data.split, args.out_dir);
  std::cout << "trained " << res.epochs_run << " epochs; best epoch " << res.best_epoch
            << " (validation " << format_double(res.best_value) << ")\n";
  print_metrics("test", res.final_test.metrics);
  std::cout << "artifacts in " << args.out_dir << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& dataset_path,
             const std::string& checkpoint_path, const std::string& split_name, bool probe) {
  TrainConfig cfg = load_config(args);
  LoadedData data = obtain_data(cfg, dataset_path);
  TsdModel model(resolve_model_config(cfg, data.dataset), cfg.seed);
  restore_params(model.parameters(), read_checkpoint(checkpoint_path));

  const auto& indices = pick_split(data.split, split_name);
  EvalOutcome ev = evaluate(model, data.dataset, indices, cfg);
  print_metrics(split_name, ev.metrics);

  std::filesystem::create_directories(args.out_dir);
  {
    std::ofstream f(args.out_dir + "/eval_metrics.csv", std::ios::trunc);
    const std::size_t slots = psi_slots(model.config());
    f << metrics_csv_header(slots) << "\n";
    MetricsRow row{0, split_name, ev.metrics, ev.losses, ev.mean_psi};
    f << metrics_csv_row(row, slots) << "\n";
  }
  if (!ev.psi_stats.empty()) {
    std::ofstream f(args.out_dir + "/psi_summary.csv", std::ios::trunc);
    f << "subspace,mean_weight,std_weight,contribution\n";
    for (const PsiStat& s : ev.psi_stats) {
      f << s.key << "," << format_double(s.mean) << "," << format_double(s.stddev) << ","
        << format_double(s.contribution) << "\n";
    }
  }
  if (probe) {
    if (!data.synth) {
      throw config_error("--probe needs generated synthetic data (omit --dataset)");
    }
    auto rows = probe_disentanglement(model, *data.synth, indices);
    std::ofstream f(args.out_dir + "/probe.csv", std::ios::trunc);
    f << "latent,embedding,r2\n";
    for (const ProbeRow& r : rows) {
      f << r.latent_group << "," << r.embedding << "," << format_double(r.r2) << "\n";
    }
    std::cout << "probe report: " << args.out_dir << "/probe.csv\n";
  }
  return 0;
}

int cmd_ablate(const CommonArgs& args, const std::string& axes_arg, std::size_t n_seeds) {
  TrainConfig cfg = load_config(args);
  std::vector<std::string> axes;
  std::stringstream ss(axes_arg);
  std::string a;
  while (std::getline(ss, a, ',')) axes.push_back(a);
  auto results = run_ablation(cfg, axes, n_seeds, args.out_dir);
  std::cout << "ran " << results.size() << " cell runs; report: " << args.out_dir
            << "/report.csv\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::string& grid_arg, std::size_t n_seeds) {
  TrainConfig cfg = load_config(args);
  std::vector<double> grid;
  std::stringstream ss(grid_arg);
  std::string v;
  while (std::getline(ss, v, ',')) grid.push_back(std::stod(v));
  auto rows = sweep_lambda(cfg, grid, n_seeds, args.out_dir);
  std::cout << rows.size() << " sweep rows; table: " << args.out_dir << "/sweep.csv\n";
  return 0;
}

int cmd_stats(const std::string& dir_a, const std::string& dir_b, const std::string& out_dir) {
  auto rows = compare_runs(dir_a, dir_b);
  std::filesystem::create_directories(out_dir);
  std::ofstream f(out_dir + "/stats.csv", std::ios::trunc);
  f << "metric,mean_a,mean_b,t,df,p_raw,p_holm,degenerate_variance\n";
  for (const StatsRow& r : rows) {
    f << r.metric << "," << format_double(r.mean_a) << "," << format_double(r.mean_b) << ","
      << format_double(r.test.t) << "," << format_double(r.test.df) << ","
      << format_double(r.test.p) << "," << format_double(r.p_holm) << ","
      << (r.test.degenerate_variance ? "1" : "0") << "\n";
    std::cout << r.metric << ": mean_a=" << format_double(r.mean_a)
              << " mean_b=" << format_double(r.mean_b) << " t=" << format_double(r.test.t)
              << " p_holm=" << format_double(r.p_holm) << "\n";
  }
  std::cout << "stats table: " << out_dir << "/stats.csv\n";
  return 0;
}

int cmd_export(const CommonArgs& args, const std::string& dataset_path,
               const std::string& checkpoint_path, const std::string& split_name,
               const std::string& out_path) {
  TrainConfig cfg = load_config(args);
  LoadedData data = obtain_data(cfg, dataset_path);
  TsdModel model(resolve_model_config(cfg, data.dataset), cfg.seed);
  restore_params(model.parameters(), read_checkpoint(checkpoint_path));
  const auto& indices = pick_split(data.split, split_name);
  export_embeddings(model, data.dataset, indices, out_path);
  std::cout << "wrote embeddings for " << indices.size() << " samples to " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tri-subspace multimodal representation toolkit"};
  app.require_subcommand(1);

  CommonArgs common;
  app.add_option("--config", common.config_path, "config file (key=value sections)");
  app.add_option("--seed", common.seed_override, "override the training seed");
  app.add_option("--out-dir", common.out_dir, "output directory");

  std::string dataset_path, checkpoint_path, split_name = "test";
  std::string spec_path, synth_out = "dataset.tsd1";
  std::string axes = "all", grid = "0.01,0.05,0.1,0.5,1.0";
  std::string dir_a, dir_b, export_out = "embeddings.tsd1";
  std::size_t n_seeds = 5;
  bool probe = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset file");
  synth->add_option("--spec", spec_path, "config file with a [data] section")->required();
  synth->add_option("--out", synth_out, "output dataset path")->required();

  CLI::App* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--dataset", dataset_path, "dataset file (default: generate from config)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--dataset", dataset_path, "dataset file (default: generate from config)");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  eval_cmd->add_option("--split", split_name, "train|val|test (default test)");
  eval_cmd->add_flag("--probe", probe, "emit the disentanglement probe report");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the ablation matrix");
  ablate_cmd->add_option("--axes", axes,
                         "comma list of modality,representations,fusion,regularization or all");
  ablate_cmd->add_option("--seeds", n_seeds, "seeds per cell (default 5)");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "lambda sensitivity sweep");
  sweep_cmd->add_option("--grid", grid, "comma list of lambda values");
  sweep_cmd->add_option("--seeds", n_seeds, "seeds per grid point (default 5)");

  CLI::App* stats_cmd = app.add_subcommand("stats", "paired t-tests between two run trees");
  stats_cmd->add_option("--run-a", dir_a, "first run directory (seed_* subdirs)")->required();
  stats_cmd->add_option("--run-b", dir_b, "second run directory")->required();

  CLI::App* export_cmd = app.add_subcommand("export-embeddings",
                                            "write pooled embeddings + gates + labels");
  export_cmd->add_option("--dataset", dataset_path, "dataset file (default: generate)");
  export_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint path")->required();
  export_cmd->add_option("--split", split_name, "train|val|test (default test)");
  export_cmd->add_option("--out", export_out, "output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec_path, synth_out);
    if (train_cmd->parsed()) return cmd_train(common, dataset_path);
    if (eval_cmd->parsed()) return cmd_eval(common, dataset_path, checkpoint_path, split_name, probe);
    if (ablate_cmd->parsed()) return cmd_ablate(common, axes, n_seeds);
    if (sweep_cmd->parsed()) return cmd_sweep(common, grid, n_seeds);
    if (stats_cmd->parsed()) return cmd_stats(dir_a, dir_b, common.out_dir);
    if (export_cmd->parsed()) return cmd_export(common, dataset_path, checkpoint_path,
                                                split_name, export_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>

#include "tsd/datagen.hpp"
#include "tsd/model.hpp"

namespace tsd {

/// Sectioned key=value config file. Parsing is fail-closed: consumers mark
/// keys as they read them and unknown leftovers are an error.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& section, const std::string& key,
                       std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  /// Throws config_error naming every key that was never consumed.
  void ensure_all_consumed() const;

 private:
  std::string origin_;
  std::map<std::string, std::map<std::string, std::string>> sections_;
  mutable std::set<std::string> consumed_;
};

enum class Acc2Mode : int { exclude_zero = 0, neg_vs_nonneg = 1 };

/// Which loss term an ablation removes.
enum class LossDrop : int { none = 0, com, pair, pri, ort, sup };

struct TrainConfig {
  // [train]
  std::size_t batch_size = 16;
  double weight_decay = 1e-5;
  double learning_rate = 1e-3;
  std::size_t max_epochs = 50;
  std::size_t patience = 8;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  Acc2Mode acc2_mode = Acc2Mode::exclude_zero;

  // [model]
  ModelConfig model;

  // [loss]
  LossWeights weights;

  // [data]
  SyntheticSpec data;
  std::array<double, 3> split_ratios = {0.6, 0.1, 0.3};

  // [ablation]
  LossDrop drop_loss = LossDrop::none;
  bool task_only = false;
  bool adversarial_supervisor = false;

  void validate() const;
  LossComputeOptions loss_options() const;
};

/// Reads every section; unknown keys raise config_error.
TrainConfig load_train_config(const ConfigMap& cfg);

/// Reads only [data]; used by the synth subcommand.
SyntheticSpec load_synthetic_spec(const ConfigMap& cfg);

}  // namespace tsd

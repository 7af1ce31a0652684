// SPDX-License-Identifier: Apache-2.0
#include "tsd/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace tsd {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw config_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_string(ss.str(), path);
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw config_error(origin + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw config_error(origin + ":" + std::to_string(lineno) + ": empty section name");
      }
      cfg.sections_[section];
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": key outside any section");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (cfg.sections_[section].count(key)) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.sections_[section][key] = value;
  }
  return cfg;
}

bool ConfigMap::has(const std::string& section, const std::string& key) const {
  auto s = sections_.find(section);
  return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigMap::get_str(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  consumed_.insert(section + "." + key);
  auto s = sections_.find(section);
  if (s == sections_.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

double ConfigMap::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  const std::string v = get_str(section, key, "");
  if (v.empty()) return fallback;
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw config_error("config " + section + "." + key + ": '" + v + "' is not a number");
  }
  if (used != v.size()) {
    throw config_error("config " + section + "." + key + ": trailing junk in '" + v + "'");
  }
  return out;
}

std::size_t ConfigMap::get_size(const std::string& section, const std::string& key,
                                std::size_t fallback) const {
  const double v = get_double(section, key, static_cast<double>(fallback));
  if (v < 0 || v != std::floor(v)) {
    throw config_error("config " + section + "." + key + ": expected a nonnegative integer");
  }
  return static_cast<std::size_t>(v);
}

std::uint64_t ConfigMap::get_u64(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) const {
  const std::string v = get_str(section, key, "");
  if (v.empty()) return fallback;
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw config_error("config " + section + "." + key + ": '" + v + "' is not an integer");
  }
}

bool ConfigMap::get_bool(const std::string& section, const std::string& key,
                         bool fallback) const {
  std::string v = get_str(section, key, "");
  if (v.empty()) return fallback;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error("config " + section + "." + key + ": '" + v + "' is not a boolean");
}

void ConfigMap::ensure_all_consumed() const {
  std::string unknown;
  for (const auto& [section, kv] : sections_) {
    for (const auto& [key, value] : kv) {
      if (!consumed_.count(section + "." + key)) {
        if (!unknown.empty()) unknown += ", ";
        unknown += section + "." + key;
      }
    }
  }
  if (!unknown.empty()) {
    throw config_error(origin_ + ": unknown config keys: " + unknown);
  }
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw config_error("train.batch_size must be >= 2");
  if (patience < 1) throw config_error("train.patience must be >= 1");
  if (learning_rate <= 0 || weight_decay < 0 || adam_eps <= 0) {
    throw config_error("train rates must be positive (weight_decay may be 0)");
  }
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw config_error("adam moment coefficients must lie in [0, 1)");
  }
  if (max_epochs < 1) throw config_error("train.max_epochs must be >= 1");
  model.validate();
  weights.validate();
  data.validate();
  double sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw config_error("split ratios must sum to 1");
}

LossComputeOptions TrainConfig::loss_options() const {
  LossComputeOptions o;
  o.weights = weights;
  o.drop_com = drop_loss == LossDrop::com;
  o.drop_pair = drop_loss == LossDrop::pair;
  o.drop_pri = drop_loss == LossDrop::pri;
  o.drop_ort = drop_loss == LossDrop::ort;
  o.drop_sup = drop_loss == LossDrop::sup;
  o.task_only = task_only;
  o.adversarial_supervisor = adversarial_supervisor;
  return o;
}

namespace {

TaskMode parse_mode(const std::string& s) {
  if (s == "regression") return TaskMode::regression;
  if (s == "classification") return TaskMode::classification;
  throw config_error("model.mode must be regression or classification, got '" + s + "'");
}

LabelKind parse_label_kind(const std::string& s) {
  if (s == "regression") return LabelKind::regression;
  if (s == "class7") return LabelKind::class7;
  if (s == "intent") return LabelKind::intent;
  throw config_error("data.label_kind must be regression, class7, or intent, got '" + s + "'");
}

Acc2Mode parse_acc2(const std::string& s) {
  if (s == "exclude_zero") return Acc2Mode::exclude_zero;
  if (s == "neg_vs_nonneg") return Acc2Mode::neg_vs_nonneg;
  throw config_error("train.acc2_mode must be exclude_zero or neg_vs_nonneg, got '" + s + "'");
}

LossDrop parse_loss_drop(const std::string& s) {
  if (s == "none") return LossDrop::none;
  if (s == "com") return LossDrop::com;
  if (s == "pair") return LossDrop::pair;
  if (s == "pri") return LossDrop::pri;
  if (s == "ort") return LossDrop::ort;
  if (s == "sup") return LossDrop::sup;
  throw config_error("ablation.drop_loss must be none|com|pair|pri|ort|sup, got '" + s + "'");
}

}  // namespace

SyntheticSpec load_synthetic_spec(const ConfigMap& cfg) {
  SyntheticSpec d;
  d.n_samples = cfg.get_size("data", "n_samples", d.n_samples);
  d.t[0] = cfg.get_size("data", "t_l", d.t[0]);
  d.t[1] = cfg.get_size("data", "t_v", d.t[1]);
  d.t[2] = cfg.get_size("data", "t_a", d.t[2]);
  d.d_raw[0] = cfg.get_size("data", "d_l", d.d_raw[0]);
  d.d_raw[1] = cfg.get_size("data", "d_v", d.d_raw[1]);
  d.d_raw[2] = cfg.get_size("data", "d_a", d.d_raw[2]);
  d.dim_g = cfg.get_size("data", "dim_g", d.dim_g);
  d.dim_u[0] = cfg.get_size("data", "dim_u_lv", d.dim_u[0]);
  d.dim_u[1] = cfg.get_size("data", "dim_u_la", d.dim_u[1]);
  d.dim_u[2] = cfg.get_size("data", "dim_u_va", d.dim_u[2]);
  d.dim_r[0] = cfg.get_size("data", "dim_r_l", d.dim_r[0]);
  d.dim_r[1] = cfg.get_size("data", "dim_r_v", d.dim_r[1]);
  d.dim_r[2] = cfg.get_size("data", "dim_r_a", d.dim_r[2]);
  d.noise_sigma = cfg.get_double("data", "noise_sigma", d.noise_sigma);
  d.label_noise = cfg.get_double("data", "label_noise", d.label_noise);
  d.w_g = cfg.get_double("data", "w_g", d.w_g);
  d.w_u[0] = cfg.get_double("data", "w_u_lv", d.w_u[0]);
  d.w_u[1] = cfg.get_double("data", "w_u_la", d.w_u[1]);
  d.w_u[2] = cfg.get_double("data", "w_u_va", d.w_u[2]);
  d.w_r[0] = cfg.get_double("data", "w_r_l", d.w_r[0]);
  d.w_r[1] = cfg.get_double("data", "w_r_v", d.w_r[1]);
  d.w_r[2] = cfg.get_double("data", "w_r_a", d.w_r[2]);
  d.label_kind = parse_label_kind(cfg.get_str("data", "label_kind", "regression"));
  d.n_classes = cfg.get_size("data", "n_classes", d.n_classes);
  d.seed = cfg.get_u64("data", "seed", d.seed);
  d.validate();
  return d;
}

TrainConfig load_train_config(const ConfigMap& cfg) {
  TrainConfig c;
  c.batch_size = cfg.get_size("train", "batch_size", c.batch_size);
  c.weight_decay = cfg.get_double("train", "weight_decay", c.weight_decay);
  c.learning_rate = cfg.get_double("train", "learning_rate", c.learning_rate);
  c.max_epochs = cfg.get_size("train", "max_epochs", c.max_epochs);
  c.patience = cfg.get_size("train", "patience", c.patience);
  c.beta1 = cfg.get_double("train", "beta1", c.beta1);
  c.beta2 = cfg.get_double("train", "beta2", c.beta2);
  c.adam_eps = cfg.get_double("train", "adam_eps", c.adam_eps);
  c.seed = cfg.get_u64("train", "seed", c.seed);
  c.acc2_mode = parse_acc2(cfg.get_str("train", "acc2_mode", "exclude_zero"));

  c.data = load_synthetic_spec(cfg);
  c.split_ratios[0] = cfg.get_double("data", "split_train", c.split_ratios[0]);
  c.split_ratios[1] = cfg.get_double("data", "split_val", c.split_ratios[1]);
  c.split_ratios[2] = cfg.get_double("data", "split_test", c.split_ratios[2]);

  ModelConfig& m = c.model;
  m.d_raw = c.data.d_raw;
  m.d_m = cfg.get_size("model", "d_m", m.d_m);
  m.d_z = cfg.get_size("model", "d_z", m.d_z);
  m.d_c = cfg.get_size("model", "d_c", m.d_z);  // d_c defaults to d_z
  m.d_h = cfg.get_size("model", "d_h", m.d_c);
  m.head_hidden = cfg.get_size("model", "head_hidden", m.d_c);
  m.heads = cfg.get_size("model", "heads", m.heads);
  m.conv_k = cfg.get_size("model", "conv_k", m.conv_k);
  m.mode = parse_mode(cfg.get_str("model", "mode", "regression"));
  m.fusion = fusion_variant_from_name(cfg.get_str("model", "fusion", "saca"));
  if (m.mode == TaskMode::classification) {
    // class widths come from the data spec
    m.n_classes = c.data.label_kind == LabelKind::class7 ? 7 : c.data.n_classes;
  }

  const std::string drop_mod = cfg.get_str("ablation", "drop_modality", "none");
  if (drop_mod != "none") {
    m.drop_modality[static_cast<int>(modality_from_name(drop_mod))] = true;
  }
  const std::string drop_kind = cfg.get_str("ablation", "drop_kind", "none");
  if (drop_kind == "common") {
    m.drop_kind[static_cast<int>(SubspaceKind::common)] = true;
  } else if (drop_kind == "subshared") {
    m.drop_kind[static_cast<int>(SubspaceKind::subshared)] = true;
  } else if (drop_kind == "private") {
    m.drop_kind[static_cast<int>(SubspaceKind::priv)] = true;
  } else if (drop_kind != "none") {
    throw config_error("ablation.drop_kind must be none|common|subshared|private");
  }
  m.non_disentangled = cfg.get_bool("ablation", "non_disentangled", false);

  c.weights.lambda1 = cfg.get_double("loss", "lambda1", c.weights.lambda1);
  c.weights.lambda2 = cfg.get_double("loss", "lambda2", c.weights.lambda2);
  c.weights.lambda3 = cfg.get_double("loss", "lambda3", c.weights.lambda3);
  c.weights.lambda4 = cfg.get_double("loss", "lambda4", c.weights.lambda4);

  c.drop_loss = parse_loss_drop(cfg.get_str("ablation", "drop_loss", "none"));
  c.task_only = cfg.get_bool("ablation", "task_only", false);
  c.adversarial_supervisor = cfg.get_bool("ablation", "adversarial_supervisor", false);

  cfg.ensure_all_consumed();
  c.validate();
  return c;
}

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#include "tsd/model.hpp"

#include <cmath>

namespace tsd {

const char* fusion_variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::saca: return "saca";
    case FusionVariant::sum: return "sum";
    case FusionVariant::concat: return "concat";
  }
  throw contract_error("fusion_variant_name: invalid variant");
}

FusionVariant fusion_variant_from_name(const std::string& name) {
  if (name == "saca") return FusionVariant::saca;
  if (name == "sum") return FusionVariant::sum;
  if (name == "concat") return FusionVariant::concat;
  throw config_error("unknown fusion variant '" + name + "' (expected saca, sum, or concat)");
}

void ModelConfig::validate() const {
  if (d_m == 0 || d_z == 0 || d_c == 0 || d_h == 0 || head_hidden == 0) {
    throw config_error("model dimensions must be positive");
  }
  for (std::size_t d : d_raw)
    if (d == 0) throw config_error("raw modality widths must be positive");
  if (heads == 0 || d_c % heads != 0) {
    throw config_error("model dimension d_c=" + std::to_string(d_c) +
                       " must be divisible by heads=" + std::to_string(heads));
  }
  if (conv_k % 2 == 0 || conv_k == 0) {
    throw config_error("conv kernel width must be odd and positive");
  }
  if (mode == TaskMode::classification && n_classes < 2) {
    throw config_error("classification needs n_classes >= 2");
  }
  if (non_disentangled && d_z != d_c) {
    throw config_error("non-disentangled mode feeds pooled Z directly to fusion; requires d_z == d_c");
  }
  int dropped = 0;
  for (bool d : drop_modality) dropped += d ? 1 : 0;
  if (dropped == 3) throw config_error("cannot drop all three modalities");
  int kinds_dropped = 0;
  for (bool d : drop_kind) kinds_dropped += d ? 1 : 0;
  if (kinds_dropped == 3) throw config_error("cannot drop all three subspace kinds");
}

TsdModel::TsdModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = Rng(seed).derive(hash_name("model-init"));
  for (int m = 0; m < kNumModalities; ++m) {
    enc[m] = nn::TemporalConvEncoder::init(cfg_.conv_k, cfg_.d_raw[m], cfg_.d_m, rng);
  }
  for (int m = 0; m < kNumModalities; ++m) {
    proj[m] = nn::LinearLayer::init(cfg_.d_m, cfg_.d_z, rng);
  }
  common_enc = CommonEncoder::init(cfg_.d_z, cfg_.d_c, rng);
  for (int p = 0; p < kNumPairs; ++p) pair_enc[p] = PairEncoder::init(cfg_.d_z, cfg_.d_c, rng);
  for (int m = 0; m < kNumModalities; ++m)
    priv_enc[m] = PrivateEncoder::init(cfg_.d_z, cfg_.d_c, rng);
  supervisor = SupervisorNet::init(cfg_.d_c, cfg_.d_h, rng);
  saca = SacaParams::init(cfg_.d_c, cfg_.heads, rng);
  const std::size_t out_width = cfg_.mode == TaskMode::regression ? 1 : cfg_.n_classes;
  head = PredictionHead::init(cfg_.d_c, cfg_.head_hidden, out_width, cfg_.mode, rng);
  concat_proj9 = nn::LinearLayer::init(9 * cfg_.d_c, cfg_.d_c, rng);
  concat_proj3 = nn::LinearLayer::init(3 * cfg_.d_z, cfg_.d_c, rng);
}

Tensor TsdModel::encode_modality(const ModalityBatch& batch, Modality m) const {
  const Tensor& x = batch.x[static_cast<int>(m)];
  if (!x.defined()) {
    throw contract_error(std::string("encode_modality: modality ") + modality_name(m) +
                         " missing from batch");
  }
  return nn::temporal_conv(enc[static_cast<int>(m)], x);
}

Tensor TsdModel::project_unified(const Tensor& h, Modality m) const {
  return nn::linear_forward(proj[static_cast<int>(m)], h);
}

UnifiedFeatures TsdModel::unify(const ModalityBatch& batch) const {
  UnifiedFeatures out;
  for (int m = 0; m < kNumModalities; ++m) {
    const Tensor& x = batch.x[m];
    if (!x.defined()) {
      throw contract_error(std::string("unify: modality ") + modality_name(static_cast<Modality>(m)) +
                           " missing from batch");
    }
    if (cfg_.drop_modality[m]) {
      // Modality-drop ablation: Z_m replaced by zeros, shapes kept valid.
      out.z[m] = Tensor::zeros({x.extent(0), x.extent(1), cfg_.d_z});
    } else {
      out.z[m] = project_unified(encode_modality(batch, static_cast<Modality>(m)),
                                 static_cast<Modality>(m));
    }
  }
  return out;
}

SubspaceBundle TsdModel::disentangle(const UnifiedFeatures& unified) const {
  SubspaceBundle b;
  for (int m = 0; m < kNumModalities; ++m) {
    b.common[m] = encode_common(common_enc, unified.z[m]);
    b.priv[m] = encode_private(priv_enc[m], unified.z[m]);
  }
  for (int p = 0; p < kNumPairs; ++p) {
    const auto& pr = modality_pairs()[p];
    SubsharedOut s = encode_subshared(pair_enc[p], unified.z[static_cast<int>(pr.first)],
                                      unified.z[static_cast<int>(pr.second)], pr.first, pr.second);
    b.pair_first[p] = s.from_first;
    b.pair_second[p] = s.from_second;
    b.pair_concat[p] = s.concat;
  }
  return b;
}

PooledBundle TsdModel::pool_bundle(const SubspaceBundle& bundle) const {
  PooledBundle p;
  for (int m = 0; m < kNumModalities; ++m) {
    p.common[m] = pool(bundle.common[m]);
    p.priv[m] = pool(bundle.priv[m]);
  }
  for (int pi = 0; pi < kNumPairs; ++pi) {
    p.pair_first[pi] = pool(bundle.pair_first[pi]);
    p.pair_second[pi] = pool(bundle.pair_second[pi]);
  }
  return p;
}

namespace {

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.shape()); }

}  // namespace

TsdModel::ForwardOut TsdModel::forward(const ModalityBatch& batch) const {
  ForwardOut out;
  out.unified = unify(batch);

  if (cfg_.non_disentangled) {
    // Bypass the tri-subspace encoders: pooled Z_m go straight to fusion.
    std::vector<Tensor> members(out.unified.z.begin(), out.unified.z.end());
    switch (cfg_.fusion) {
      case FusionVariant::saca: {
        GatedFusion g = gated_fuse(saca.gate_scorer, members);
        out.psi = g.psi;
        out.y_final = g.y_final;
        break;
      }
      case FusionVariant::sum: {
        Tensor acc;
        for (const Tensor& z : members) {
          Tensor pooled = pool(z);
          acc = acc.defined() ? add(acc, pooled) : pooled;
        }
        out.y_final = acc;
        break;
      }
      case FusionVariant::concat: {
        std::vector<Tensor> pooled;
        pooled.reserve(members.size());
        for (const Tensor& z : members) pooled.push_back(pool(z));
        out.y_final = nn::linear_forward(concat_proj3, concat(pooled, 1));
        break;
      }
    }
    out.prediction = predict(head, out.y_final, cfg_.mode);
    return out;
  }

  out.bundle = disentangle(out.unified);
  out.pooled = pool_bundle(out.bundle);
  out.has_bundle = true;

  const auto& keys = fusion_keys();
  auto kind_dropped = [&](SubspaceKey k) { return cfg_.drop_kind[static_cast<int>(k.kind)]; };

  auto bundle_member = [&](SubspaceKey k) -> const Tensor& {
    switch (k.kind) {
      case SubspaceKind::common: return out.bundle.common[k.index];
      case SubspaceKind::subshared: return out.bundle.pair_concat[k.index];
      case SubspaceKind::priv: return out.bundle.priv[k.index];
    }
    throw contract_error("forward: invalid subspace key");
  };

  switch (cfg_.fusion) {
    case FusionVariant::saca: {
      RefinedBundle refined = refine(saca, out.bundle);
      std::vector<Tensor> enhanced;
      enhanced.reserve(keys.size());
      for (const SubspaceKey& k : keys) {
        const Tensor& target = refined.member(k);
        Tensor ctx = build_context(refined, k);
        Tensor star = cross_subspace_attend(saca.cross[static_cast<int>(k.kind)], target, ctx);
        enhanced.push_back(kind_dropped(k) ? zeros_like(star) : star);
      }
      GatedFusion g = gated_fuse(saca.gate_scorer, enhanced);
      out.psi = g.psi;
      out.y_final = g.y_final;
      break;
    }
    case FusionVariant::sum: {
      Tensor acc;
      for (const SubspaceKey& k : keys) {
        Tensor pooled = pool(bundle_member(k));
        if (kind_dropped(k)) pooled = zeros_like(pooled);
        acc = acc.defined() ? add(acc, pooled) : pooled;
      }
      out.y_final = acc;
      break;
    }
    case FusionVariant::concat: {
      std::vector<Tensor> pooled;
      pooled.reserve(keys.size());
      for (const SubspaceKey& k : keys) {
        Tensor p = pool(bundle_member(k));
        pooled.push_back(kind_dropped(k) ? zeros_like(p) : p);
      }
      out.y_final = nn::linear_forward(concat_proj9, concat(pooled, 1));
      break;
    }
  }
  out.prediction = predict(head, out.y_final, cfg_.mode);
  return out;
}

namespace {

void push_linear(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                 const nn::LinearLayer& l) {
  out.emplace_back(prefix + ".weight", l.weight);
  out.emplace_back(prefix + ".bias", l.bias);
}

void push_ln(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
             const nn::LayerNormLayer& l) {
  out.emplace_back(prefix + ".gain", l.gain);
  out.emplace_back(prefix + ".offset", l.offset);
}

void push_mha(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
              const nn::MultiHeadAttention& a) {
  push_linear(out, prefix + ".wq", a.wq);
  push_linear(out, prefix + ".wk", a.wk);
  push_linear(out, prefix + ".wv", a.wv);
  push_linear(out, prefix + ".wo", a.wo);
}

const char* kind_name(int k) {
  switch (static_cast<SubspaceKind>(k)) {
    case SubspaceKind::common: return "common";
    case SubspaceKind::subshared: return "subshared";
    case SubspaceKind::priv: return "private";
  }
  return "?";
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> TsdModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int m = 0; m < kNumModalities; ++m) {
    const std::string mn = modality_name(static_cast<Modality>(m));
    out.emplace_back("enc." + mn + ".kernel", enc[m].kernel);
    out.emplace_back("enc." + mn + ".bias", enc[m].bias);
  }
  for (int m = 0; m < kNumModalities; ++m) {
    push_linear(out, "proj." + std::string(modality_name(static_cast<Modality>(m))), proj[m]);
  }
  push_linear(out, "common.fc1", common_enc.fc1);
  push_linear(out, "common.fc2", common_enc.fc2);
  push_ln(out, "common.ln", common_enc.ln);
  for (int p = 0; p < kNumPairs; ++p) push_linear(out, "pair." + pair_name(p) + ".fc", pair_enc[p].fc);
  for (int m = 0; m < kNumModalities; ++m) {
    push_linear(out, "private." + std::string(modality_name(static_cast<Modality>(m))) + ".fc",
                priv_enc[m].fc);
  }
  push_linear(out, "supervisor.fc1", supervisor.fc1);
  push_linear(out, "supervisor.fc2", supervisor.fc2);
  for (int k = 0; k < 3; ++k) {
    const std::string prefix = std::string("saca.refine.") + kind_name(k);
    push_ln(out, prefix + ".ln", saca.refine[k].ln);
    push_mha(out, prefix + ".att", saca.refine[k].att);
  }
  for (int k = 0; k < 3; ++k) {
    const std::string prefix = std::string("saca.cross.") + kind_name(k);
    push_mha(out, prefix + ".att", saca.cross[k].att);
    push_ln(out, prefix + ".ln_out", saca.cross[k].ln_out);
  }
  push_linear(out, "saca.gate", saca.gate_scorer);
  push_linear(out, "head.fc1", head.fc1);
  push_linear(out, "head.fc2", head.fc2);
  push_linear(out, "concat9", concat_proj9);
  push_linear(out, "concat3", concat_proj3);
  return out;
}

std::vector<std::pair<std::string, Tensor>> TsdModel::parameters_without_supervisor() const {
  std::vector<std::pair<std::string, Tensor>> all = parameters();
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(all.size());
  for (auto& kv : all) {
    if (kv.first.rfind("supervisor.", 0) != 0) out.push_back(std::move(kv));
  }
  return out;
}

LossResult compute_losses(const TsdModel& model, const TsdModel::ForwardOut& fwd,
                          const Tensor& labels, const LossComputeOptions& opts, Rng* mix_rng) {
  opts.weights.validate();
  LossResult res;
  res.breakdown.weights = opts.weights;

  Tensor l_task = task_loss(fwd.prediction, labels, model.config().mode);

  if (!fwd.has_bundle) {
    // Non-disentangled ablation: no subspaces, so no tri-subspace terms.
    Tensor zero = Tensor::scalar(0.0);
    res.breakdown.com_weight = 0.0;
    res.breakdown.l_task = l_task.item();
    res.l_all = total_loss(l_task, zero);
    res.breakdown.l_all = res.l_all.item();
    return res;
  }

  LossWeights eff = opts.weights;
  const bool task_only = opts.task_only;
  const double com_weight = (opts.drop_com || task_only) ? 0.0 : 1.0;
  if (opts.drop_pair || task_only) eff.lambda1 = 0.0;
  if (opts.drop_pri || task_only) eff.lambda2 = 0.0;
  if (opts.drop_ort || task_only) eff.lambda3 = 0.0;
  if (opts.drop_sup || task_only) eff.lambda4 = 0.0;

  Tensor l_com = common_consistency(fwd.pooled);
  Tensor l_pair = pairwise_collab(fwd.pooled);
  Tensor l_pri = private_disparity(fwd.pooled);
  Tensor l_ort = orthogonality(fwd.bundle);

  Tensor l_sup;
  if (opts.supervisor_active()) {
    SupervisorLossOptions sup_opts;
    sup_opts.adversarial = opts.adversarial_supervisor;
    if (mix_rng) {
      const std::size_t rows = 12 * labels.extent(0);
      std::vector<std::size_t> perm(rows);
      for (std::size_t i = 0; i < rows; ++i) perm[i] = i;
      mix_rng->shuffle(perm);
      sup_opts.mix_perm = std::move(perm);
    }
    l_sup = supervisor_loss(fwd.pooled, model.supervisor, sup_opts);
  } else {
    l_sup = Tensor::scalar(0.0);
  }

  Tensor l_ts = tri_subspace_loss(l_com, l_pair, l_pri, l_ort, l_sup, eff, com_weight);
  res.l_all = total_loss(l_task, l_ts);

  res.breakdown.l_com = l_com.item();
  res.breakdown.l_pair = l_pair.item();
  res.breakdown.l_pri = l_pri.item();
  res.breakdown.l_ort = l_ort.item();
  res.breakdown.l_sup = l_sup.item();
  res.breakdown.l_ts = l_ts.item();
  res.breakdown.l_task = l_task.item();
  res.breakdown.l_all = res.l_all.item();
  res.breakdown.com_weight = com_weight;
  res.breakdown.weights = eff;
  return res;
}

}  // namespace tsd

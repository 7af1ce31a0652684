// SPDX-License-Identifier: Apache-2.0
#include "tsd/saca.hpp"

namespace tsd {

std::string SubspaceKey::name() const {
  switch (kind) {
    case SubspaceKind::common: return std::string("c_") + modality_name(static_cast<Modality>(index));
    case SubspaceKind::subshared: return "s_" + pair_name(index);
    case SubspaceKind::priv: return std::string("p_") + modality_name(static_cast<Modality>(index));
  }
  throw contract_error("SubspaceKey::name: invalid kind");
}

const std::array<SubspaceKey, 9>& fusion_keys() {
  static const std::array<SubspaceKey, 9> keys = {{
      {SubspaceKind::common, 0},
      {SubspaceKind::common, 1},
      {SubspaceKind::common, 2},
      {SubspaceKind::subshared, 0},
      {SubspaceKind::subshared, 1},
      {SubspaceKind::subshared, 2},
      {SubspaceKind::priv, 0},
      {SubspaceKind::priv, 1},
      {SubspaceKind::priv, 2},
  }};
  return keys;
}

RefineBlock RefineBlock::init(std::size_t d_c, std::size_t heads, Rng& rng) {
  RefineBlock b;
  b.ln = nn::LayerNormLayer::init(d_c);
  b.att = nn::MultiHeadAttention::init(d_c, heads, rng);
  return b;
}

CrossBlock CrossBlock::init(std::size_t d_c, std::size_t heads, Rng& rng) {
  CrossBlock b;
  b.att = nn::MultiHeadAttention::init(d_c, heads, rng);
  b.ln_out = nn::LayerNormLayer::init(d_c);
  return b;
}

SacaParams SacaParams::init(std::size_t d_c, std::size_t heads, Rng& rng) {
  SacaParams p;
  for (int k = 0; k < 3; ++k) p.refine[k] = RefineBlock::init(d_c, heads, rng);
  for (int k = 0; k < 3; ++k) p.cross[k] = CrossBlock::init(d_c, heads, rng);
  p.gate_scorer = nn::LinearLayer::init(d_c, 1, rng);
  return p;
}

const Tensor& RefinedBundle::member(SubspaceKey key) const {
  switch (key.kind) {
    case SubspaceKind::common: return common.at(key.index);
    case SubspaceKind::subshared: return pair_concat.at(key.index);
    case SubspaceKind::priv: return priv.at(key.index);
  }
  throw contract_error("RefinedBundle::member: invalid kind");
}

namespace {

Tensor refine_one(const RefineBlock& block, const Tensor& seq) {
  Tensor normed = nn::layer_norm(block.ln, seq);
  return nn::mha_forward(block.att, normed, normed);
}

}  // namespace

RefinedBundle refine(const SacaParams& params, const SubspaceBundle& bundle) {
  RefinedBundle out;
  for (int m = 0; m < kNumModalities; ++m) {
    out.common[m] = refine_one(params.refine[static_cast<int>(SubspaceKind::common)],
                               bundle.common[m]);
    out.priv[m] = refine_one(params.refine[static_cast<int>(SubspaceKind::priv)],
                             bundle.priv[m]);
  }
  for (int p = 0; p < kNumPairs; ++p) {
    out.pair_concat[p] = refine_one(params.refine[static_cast<int>(SubspaceKind::subshared)],
                                    bundle.pair_concat[p]);
  }
  return out;
}

Tensor build_context(const RefinedBundle& refined, SubspaceKey target) {
  const std::size_t time_axis = refined.common[0].rank() == 3 ? 1 : 0;
  std::vector<Tensor> blocks;
  switch (target.kind) {
    case SubspaceKind::subshared: {
      const auto& pr = modality_pairs().at(target.index);
      blocks = {refined.pair_concat[target.index],
                refined.common[static_cast<int>(pr.first)],
                refined.common[static_cast<int>(pr.second)],
                refined.priv[static_cast<int>(pr.first)],
                refined.priv[static_cast<int>(pr.second)]};
      break;
    }
    case SubspaceKind::common: {
      const Modality m = static_cast<Modality>(target.index);
      blocks.push_back(refined.common[target.index]);
      for (int p = 0; p < kNumPairs; ++p)
        if (pair_contains(p, m)) blocks.push_back(refined.pair_concat[p]);
      blocks.push_back(refined.priv[target.index]);
      break;
    }
    case SubspaceKind::priv: {
      const Modality m = static_cast<Modality>(target.index);
      blocks.push_back(refined.priv[target.index]);
      for (int p = 0; p < kNumPairs; ++p)
        if (pair_contains(p, m)) blocks.push_back(refined.pair_concat[p]);
      blocks.push_back(refined.common[target.index]);
      break;
    }
    default:
      throw contract_error("build_context: unknown subspace key");
  }
  return concat(blocks, time_axis);
}

Tensor cross_subspace_attend(const CrossBlock& block, const Tensor& target_seq,
                             const Tensor& ctx) {
  const std::size_t time_axis = target_seq.rank() == 3 ? 1 : 0;
  if (ctx.extent(time_axis) == 0) {
    throw contract_error("cross_subspace_attend: empty context");
  }
  Tensor attended = nn::mha_forward(block.att, target_seq, ctx);
  return nn::layer_norm(block.ln_out, add(target_seq, attended));
}

GatedFusion gated_fuse(const nn::LinearLayer& scorer, const std::vector<Tensor>& enhanced) {
  if (enhanced.empty()) throw contract_error("gated_fuse: needs at least one subspace");
  GatedFusion out;
  out.pooled.reserve(enhanced.size());
  std::vector<Tensor> scores;
  scores.reserve(enhanced.size());
  for (const Tensor& seq : enhanced) {
    Tensor pooled = pool(seq);  // [B x d_c]
    out.pooled.push_back(pooled);
    scores.push_back(nn::linear_forward(scorer, pooled));  // [B x 1]
  }
  Tensor score_mat = scores.size() == 1 ? scores.front() : concat(scores, 1);  // [B x K]
  out.psi = nn::softmax(score_mat, 1);

  const std::size_t b = out.pooled.front().extent(0);
  Tensor acc;
  for (std::size_t k = 0; k < out.pooled.size(); ++k) {
    Tensor w_k = reshape(slice(out.psi, 1, k, 1), {b});
    Tensor contrib = scale_rows(out.pooled[k], w_k);
    acc = acc.defined() ? add(acc, contrib) : contrib;
  }
  out.y_final = acc;
  return out;
}

PredictionHead PredictionHead::init(std::size_t d_c, std::size_t d_hidden,
                                    std::size_t out_width, TaskMode mode, Rng& rng) {
  if (mode == TaskMode::classification && out_width < 2) {
    throw contract_error("PredictionHead: classification needs at least 2 classes");
  }
  if (mode == TaskMode::regression) out_width = 1;
  PredictionHead h;
  h.fc1 = nn::LinearLayer::init(d_c, d_hidden, rng);
  h.fc2 = nn::LinearLayer::init(d_hidden, out_width, rng);
  return h;
}

Tensor predict(const PredictionHead& head, const Tensor& y_final, TaskMode mode) {
  Tensor h = nn::linear_forward(head.fc2, nn::gelu(nn::linear_forward(head.fc1, y_final)));
  if (mode == TaskMode::regression) {
    return reshape(h, {h.extent(0)});
  }
  return h;
}

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "tsd/losses.hpp"
#include "tsd/nn.hpp"
#include "tsd/subspace.hpp"

namespace tsd {

enum class SubspaceKind : int { common = 0, subshared = 1, priv = 2 };

/// Key of one of the 9 fused subspaces: (kind, modality index or pair index).
struct SubspaceKey {
  SubspaceKind kind;
  int index;

  std::string name() const;
  bool operator==(const SubspaceKey&) const = default;
};

/// Canonical enumeration of the 9 subspaces: C_l, C_v, C_a, S_lv, S_la,
/// S_va, P_l, P_v, P_a.
const std::array<SubspaceKey, 9>& fusion_keys();

/// LN + self-attention, one parameter set per subspace kind.
struct RefineBlock {
  nn::LayerNormLayer ln;
  nn::MultiHeadAttention att;

  static RefineBlock init(std::size_t d_c, std::size_t heads, Rng& rng);
};

/// Cross-subspace attention block: multi-head attention over the context
/// followed by the residual LayerNorm.
struct CrossBlock {
  nn::MultiHeadAttention att;
  nn::LayerNormLayer ln_out;

  static CrossBlock init(std::size_t d_c, std::size_t heads, Rng& rng);
};

struct SacaParams {
  std::array<RefineBlock, 3> refine;  // indexed by SubspaceKind
  std::array<CrossBlock, 3> cross;
  nn::LinearLayer gate_scorer;  // d_c -> 1, shared across subspaces

  static SacaParams init(std::size_t d_c, std::size_t heads, Rng& rng);
};

/// Subspace sequences after LN + self-attention; shapes match their
/// SubspaceBundle sources (pair members over the concatenated time axis).
struct RefinedBundle {
  std::array<Tensor, 3> common;
  std::array<Tensor, 3> pair_concat;
  std::array<Tensor, 3> priv;

  const Tensor& member(SubspaceKey key) const;
};

RefinedBundle refine(const SacaParams& params, const SubspaceBundle& bundle);

/// Token-axis concatenation of the context members for `target`:
///   S~_ij -> [S~_ij; C~_i; C~_j; P~_i; P~_j]
///   C~_m  -> [C~_m; S~_mj (j != m); P~_m]
///   P~_m  -> [P~_m; S~_mj (j != m); C~_m]
/// The target is always the first block of its own context.
Tensor build_context(const RefinedBundle& refined, SubspaceKey target);

/// X* = LN(X~ + MultiHeadAttn(X~, ctx, ctx)); target length is preserved.
Tensor cross_subspace_attend(const CrossBlock& block, const Tensor& target_seq,
                             const Tensor& ctx);

struct GatedFusion {
  Tensor psi;      // [B x K], rows on the simplex
  Tensor y_final;  // [B x d_c]
  std::vector<Tensor> pooled;  // pooled members, [B x d_c] each
};

/// Mean-pools each enhanced sequence, scores each pooled member with the
/// shared linear scorer, softmax-normalizes the scores per sample, and
/// returns the weighted sum.
GatedFusion gated_fuse(const nn::LinearLayer& scorer, const std::vector<Tensor>& enhanced);

/// Two fully connected layers with GELU between; trailing width 1
/// (regression, squeezed to [B]) or C >= 2 (class logits).
struct PredictionHead {
  nn::LinearLayer fc1;
  nn::LinearLayer fc2;

  static PredictionHead init(std::size_t d_c, std::size_t d_hidden, std::size_t out_width,
                             TaskMode mode, Rng& rng);
};

Tensor predict(const PredictionHead& head, const Tensor& y_final, TaskMode mode);

}  // namespace tsd

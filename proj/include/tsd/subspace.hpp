// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "tsd/nn.hpp"
#include "tsd/tensor.hpp"

namespace tsd {

/// The three input channels. Canonical order l < v < a fixes pair keys,
/// concatenation order, and every serialized enumeration.
enum class Modality : int { l = 0, v = 1, a = 2 };

constexpr int kNumModalities = 3;
constexpr int kNumPairs = 3;

const char* modality_name(Modality m);
Modality modality_from_name(const std::string& name);

/// Unordered modality pairs in canonical order: (l,v), (l,a), (v,a).
struct ModalityPair {
  Modality first;
  Modality second;
};

const std::array<ModalityPair, kNumPairs>& modality_pairs();
/// Index of the unordered pair containing both modalities.
int pair_index(Modality a, Modality b);
/// Pair key like "lv".
std::string pair_name(int pair_idx);
bool pair_contains(int pair_idx, Modality m);

/// One ingestion unit: raw per-modality sequences plus labels.
/// Labels are continuous scores for regression or class indices (stored as
/// doubles) for classification.
struct ModalityBatch {
  std::array<Tensor, 3> x;  // x[m]: [B x T_m x d_m_raw]
  Tensor labels;            // [B]

  std::size_t batch_size() const { return labels.extent(0); }
};

/// Unified per-modality features Z_m, all with trailing width d_z.
struct UnifiedFeatures {
  std::array<Tensor, 3> z;  // z[m]: [B x T_m x d_z]
};

/// The nine subspace sequences produced by disentanglement: 3 common,
/// 3 pairs x 2 directions, 3 private, plus the per-pair time-axis
/// concatenation of the two directions.
struct SubspaceBundle {
  std::array<Tensor, 3> common;       // C_m: [B x T_m x d_c]
  std::array<Tensor, 3> pair_first;   // S_ij from modality i: [B x T_i x d_c]
  std::array<Tensor, 3> pair_second;  // S_ij from modality j: [B x T_j x d_c]
  std::array<Tensor, 3> pair_concat;  // [B x (T_i+T_j) x d_c]
  std::array<Tensor, 3> priv;         // P_m: [B x T_m x d_c]

  /// Directional representation of pair `p` derived from modality m.
  const Tensor& directional(int p, Modality m) const;
};

/// Time-mean of every bundle member.
struct PooledBundle {
  std::array<Tensor, 3> common;
  std::array<Tensor, 3> pair_first;
  std::array<Tensor, 3> pair_second;
  std::array<Tensor, 3> priv;

  const Tensor& directional(int p, Modality m) const;
};

/// Common encoder, one parameter set shared by all modalities: two fully
/// connected layers with GELU between, then LayerNorm.
struct CommonEncoder {
  nn::LinearLayer fc1;
  nn::LinearLayer fc2;
  nn::LayerNormLayer ln;

  static CommonEncoder init(std::size_t d_z, std::size_t d_c, Rng& rng);
};

/// Pair encoder: one fully connected layer + sigmoid, the same parameters
/// applied to both members of the pair.
struct PairEncoder {
  nn::LinearLayer fc;

  static PairEncoder init(std::size_t d_z, std::size_t d_c, Rng& rng);
};

/// Private encoder: per-modality fully connected layer + sigmoid.
struct PrivateEncoder {
  nn::LinearLayer fc;

  static PrivateEncoder init(std::size_t d_z, std::size_t d_c, Rng& rng);
};

/// Decoupling supervisor: a two-layer perceptron with GELU that scores every
/// pooled embedding against the three source kinds (common / sub-shared /
/// private); softmax over the three logits.
struct SupervisorNet {
  nn::LinearLayer fc1;  // d_c -> d_h
  nn::LinearLayer fc2;  // d_h -> 3

  static SupervisorNet init(std::size_t d_c, std::size_t d_h, Rng& rng);
};

/// Kind labels in supervisor output order.
enum class SourceKind : int { common = 0, subshared = 1, priv = 2 };

Tensor encode_common(const CommonEncoder& enc, const Tensor& z);

struct SubsharedOut {
  Tensor from_first;   // S_ij^(i)
  Tensor from_second;  // S_ij^(j)
  Tensor concat;       // [S_ij^(i); S_ij^(j)] along time
};

/// Applies one pair encoder to both members (identical parameters) and
/// concatenates the directions along the time axis. Rejects degenerate
/// pairs of identical modalities.
SubsharedOut encode_subshared(const PairEncoder& enc, const Tensor& z_first,
                              const Tensor& z_second, Modality first, Modality second);

Tensor encode_private(const PrivateEncoder& enc, const Tensor& z);

/// Mean over the time axis: [B x T x d] -> [B x d]. T = 0 is a contract
/// error.
Tensor pool(const Tensor& seq);

/// 3-way source probabilities per row: [B x d_c] -> [B x 3].
Tensor supervisor_forward(const SupervisorNet& net, const Tensor& x);

}  // namespace tsd

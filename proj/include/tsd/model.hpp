// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsd/losses.hpp"
#include "tsd/saca.hpp"
#include "tsd/subspace.hpp"

namespace tsd {

enum class FusionVariant : int { saca = 0, sum = 1, concat = 2 };

const char* fusion_variant_name(FusionVariant v);
FusionVariant fusion_variant_from_name(const std::string& name);

struct ModelConfig {
  std::array<std::size_t, 3> d_raw = {16, 16, 16};  // per-modality input widths
  std::size_t d_m = 16;       // temporal-conv output width
  std::size_t d_z = 16;       // unified feature width
  std::size_t d_c = 16;       // subspace width (defaults to d_z)
  std::size_t d_h = 16;       // supervisor hidden width (defaults to d_c)
  std::size_t head_hidden = 16;
  std::size_t heads = 4;
  std::size_t conv_k = 3;
  TaskMode mode = TaskMode::regression;
  std::size_t n_classes = 1;  // classification only
  FusionVariant fusion = FusionVariant::saca;

  // Ablation switches (Table-3 axes).
  std::array<bool, 3> drop_modality = {false, false, false};  // indexed by Modality
  std::array<bool, 3> drop_kind = {false, false, false};      // indexed by SubspaceKind
  bool non_disentangled = false;

  void validate() const;
};

/// The full tri-subspace network: modality encoders, unified projections,
/// the three subspace encoder families, the decoupling supervisor, SACA
/// fusion, and the prediction head. All layers are created unconditionally
/// in a fixed order so a seed fully determines every parameter independent
/// of the ablation switches.
class TsdModel {
 public:
  TsdModel(const ModelConfig& cfg, std::uint64_t seed);

  struct ForwardOut {
    UnifiedFeatures unified;
    SubspaceBundle bundle;   // members undefined when non_disentangled
    PooledBundle pooled;     // likewise
    bool has_bundle = false;
    Tensor psi;              // gate weights; undefined for sum/concat fusion
    Tensor y_final;          // [B x d_c]
    Tensor prediction;       // [B] or [B x C]
  };

  /// H_m from the modality's temporal-conv encoder; T_m preserved.
  Tensor encode_modality(const ModalityBatch& batch, Modality m) const;
  /// Modality-specific projection into the unified width d_z.
  Tensor project_unified(const Tensor& h, Modality m) const;
  /// Both steps for all modalities; dropped modalities yield zero tensors.
  UnifiedFeatures unify(const ModalityBatch& batch) const;
  SubspaceBundle disentangle(const UnifiedFeatures& unified) const;
  PooledBundle pool_bundle(const SubspaceBundle& bundle) const;

  ForwardOut forward(const ModalityBatch& batch) const;

  /// Named parameter registry in a fixed, stable order.
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  /// Same registry without the supervisor branch (detached configurations).
  std::vector<std::pair<std::string, Tensor>> parameters_without_supervisor() const;

  const ModelConfig& config() const { return cfg_; }

  std::array<nn::TemporalConvEncoder, 3> enc;
  std::array<nn::LinearLayer, 3> proj;
  CommonEncoder common_enc;
  std::array<PairEncoder, 3> pair_enc;
  std::array<PrivateEncoder, 3> priv_enc;
  SupervisorNet supervisor;
  SacaParams saca;
  PredictionHead head;
  nn::LinearLayer concat_proj9;  // 9*d_c -> d_c (concat fusion)
  nn::LinearLayer concat_proj3;  // 3*d_z -> d_c (concat fusion, non-disentangled)

 private:
  ModelConfig cfg_;
};

struct LossComputeOptions {
  LossWeights weights;
  bool drop_com = false;
  bool drop_pair = false;
  bool drop_pri = false;
  bool drop_ort = false;
  bool drop_sup = false;
  bool task_only = false;  // all regularizers off, supervisor detached
  bool adversarial_supervisor = false;

  bool supervisor_active() const { return !(drop_sup || task_only); }
};

struct LossResult {
  Tensor l_all;  // scalar, differentiable
  LossBreakdown breakdown;
};

/// Computes every loss term on one forward pass and assembles L_TS / L_all.
/// `mix_rng`, when given, supplies the mini-batch mixing permutation for the
/// supervisor pass (the loss value is permutation-invariant up to summation
/// order).
LossResult compute_losses(const TsdModel& model, const TsdModel::ForwardOut& fwd,
                          const Tensor& labels, const LossComputeOptions& opts,
                          Rng* mix_rng = nullptr);

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "tsd/subspace.hpp"
#include "tsd/tensor.hpp"

namespace tsd {

enum class TaskMode : int { regression = 0, classification = 1 };

/// Coefficients of the tri-subspace objective; zero disables a term's
/// contribution exactly.
struct LossWeights {
  double lambda1 = 0.1;  // pairwise collaboration
  double lambda2 = 0.1;  // private disparity (HSIC)
  double lambda3 = 0.1;  // orthogonality
  double lambda4 = 0.1;  // decoupling supervisor

  void validate() const;
};

/// Every named loss term plus the weighted totals, as plain values for
/// reporting. com_weight is 1 unless the common-consistency term was
/// dropped by an ablation, keeping the l_ts identity reconstructible.
struct LossBreakdown {
  double l_com = 0.0;
  double l_pair = 0.0;
  double l_pri = 0.0;
  double l_ort = 0.0;
  double l_sup = 0.0;
  double l_ts = 0.0;
  double l_task = 0.0;
  double l_all = 0.0;
  double com_weight = 1.0;
  LossWeights weights;
};

/// Mean over the 3 unordered pairs of the squared distance between pooled
/// common embeddings, batch-averaged.
Tensor common_consistency(const PooledBundle& pooled);

/// Mean over pairs of the squared distance between the two pooled
/// directional sub-shared embeddings, batch-averaged.
Tensor pairwise_collab(const PooledBundle& pooled);

/// Hilbert-Schmidt independence criterion with linear kernels:
/// (n-1)^-2 Tr(U K1 U K2), U = I - (1/n) e e^T. Requires n >= 2 rows.
Tensor hsic(const Tensor& p1, const Tensor& p2);

/// Mean HSIC over the 3 private pairs.
Tensor private_disparity(const PooledBundle& pooled);

/// Per modality: |C^T P|_F^2 + sum over pairs containing m of
/// (|S^(m)T P|_F^2 + |S^(m)T C|_F^2), batch-averaged, then averaged over
/// modalities. Time-axis products are un-normalized X^T Y.
Tensor orthogonality(const SubspaceBundle& bundle);

struct SupervisorLossOptions {
  /// Mixing permutation over the 12*B stacked rows; identity when absent.
  std::optional<std::vector<std::size_t>> mix_perm;
  /// Insert a gradient-reversal between embeddings and supervisor.
  bool adversarial = false;
};

/// Negative log-likelihood of the true source kind over all 12 pooled
/// embeddings per sample, averaged per mini-batch and modality count;
/// probabilities are clamped to [1e-12, 1] before the log.
Tensor supervisor_loss(const PooledBundle& pooled, const SupervisorNet& net,
                       const SupervisorLossOptions& opts = {});

/// Mean squared error (regression) or mean cross-entropy over softmaxed
/// logits (classification; labels hold class indices).
Tensor task_loss(const Tensor& pred, const Tensor& labels, TaskMode mode);

/// L_TS = com_weight*L_com + l1*L_pair + l2*L_pri + l3*L_ort + l4*L_sup,
/// built left-to-right so the reported identity is bit-exact.
Tensor tri_subspace_loss(const Tensor& l_com, const Tensor& l_pair, const Tensor& l_pri,
                         const Tensor& l_ort, const Tensor& l_sup, const LossWeights& w,
                         double com_weight = 1.0);

/// L_all = L_task + L_TS.
Tensor total_loss(const Tensor& l_task, const Tensor& l_ts);

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#include "tsd/losses.hpp"

#include <cmath>

namespace tsd {

void LossWeights::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0) {
    throw config_error("loss weights must be nonnegative");
  }
}

namespace {

double batch_of(const PooledBundle& pooled) {
  return static_cast<double>(pooled.common[0].extent(0));
}

}  // namespace

Tensor common_consistency(const PooledBundle& pooled) {
  const double b = batch_of(pooled);
  Tensor acc;
  for (const auto& pr : modality_pairs()) {
    Tensor d = sub(pooled.common[static_cast<int>(pr.first)],
                   pooled.common[static_cast<int>(pr.second)]);
    Tensor term = sum(square(d));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return divide(acc, 3.0 * b);
}

Tensor pairwise_collab(const PooledBundle& pooled) {
  const double b = batch_of(pooled);
  Tensor acc;
  for (int p = 0; p < kNumPairs; ++p) {
    Tensor d = sub(pooled.pair_first[p], pooled.pair_second[p]);
    Tensor term = sum(square(d));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return divide(acc, 3.0 * b);
}

Tensor hsic(const Tensor& p1, const Tensor& p2) {
  if (p1.rank() != 2 || p2.rank() != 2) {
    throw shape_error("hsic: expected rank-2 feature matrices, got " + shape_str(p1.shape()) +
                      " and " + shape_str(p2.shape()));
  }
  const std::size_t n = p1.extent(0);
  if (p2.extent(0) != n) {
    throw shape_error("hsic: row counts differ: " + shape_str(p1.shape()) + " vs " +
                      shape_str(p2.shape()));
  }
  if (n < 2) throw contract_error("hsic: requires a batch of at least 2 samples");

  // Centering matrix U = I - (1/n) e e^T as a constant.
  std::vector<double> u(n * n, -1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) u[i * n + i] += 1.0;
  Tensor U = Tensor::from_data({n, n}, std::move(u));

  Tensor k1 = matmul(p1, transpose(p1));
  Tensor k2 = matmul(p2, transpose(p2));
  Tensor uk1u = matmul(matmul(U, k1), U);
  // Tr(A·K2) = sum(A ⊙ K2^T)
  Tensor tr = sum(mul(uk1u, transpose(k2)));
  const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  return divide(tr, denom);
}

Tensor private_disparity(const PooledBundle& pooled) {
  Tensor acc;
  for (const auto& pr : modality_pairs()) {
    Tensor h = hsic(pooled.priv[static_cast<int>(pr.first)],
                    pooled.priv[static_cast<int>(pr.second)]);
    acc = acc.defined() ? add(acc, h) : h;
  }
  return divide(acc, 3.0);
}

Tensor orthogonality(const SubspaceBundle& bundle) {
  const double b = static_cast<double>(bundle.common[0].extent(0));
  Tensor acc;
  for (int mi = 0; mi < kNumModalities; ++mi) {
    const Modality m = static_cast<Modality>(mi);
    const Tensor& c = bundle.common[mi];
    const Tensor& p = bundle.priv[mi];
    Tensor t_m = sum(square(bmm(transpose(c), p)));
    for (int pi = 0; pi < kNumPairs; ++pi) {
      if (!pair_contains(pi, m)) continue;
      const Tensor& s = bundle.directional(pi, m);
      t_m = add(t_m, sum(square(bmm(transpose(s), p))));
      t_m = add(t_m, sum(square(bmm(transpose(s), c))));
    }
    acc = acc.defined() ? add(acc, t_m) : t_m;
  }
  return divide(acc, 3.0 * b);
}

Tensor supervisor_loss(const PooledBundle& pooled, const SupervisorNet& net,
                       const SupervisorLossOptions& opts) {
  const std::size_t b = pooled.common[0].extent(0);

  // Stack the 12 pooled embeddings (per Eq.-bracket order: common, the two
  // directional sub-shared, private, per modality) with their source kinds.
  std::vector<Tensor> rows;
  std::vector<std::size_t> kinds;
  rows.reserve(12);
  kinds.reserve(12 * b);
  for (int mi = 0; mi < kNumModalities; ++mi) {
    const Modality m = static_cast<Modality>(mi);
    rows.push_back(pooled.common[mi]);
    for (std::size_t i = 0; i < b; ++i) kinds.push_back(static_cast<std::size_t>(SourceKind::common));
    for (int pi = 0; pi < kNumPairs; ++pi) {
      if (!pair_contains(pi, m)) continue;
      rows.push_back(pooled.directional(pi, m));
      for (std::size_t i = 0; i < b; ++i)
        kinds.push_back(static_cast<std::size_t>(SourceKind::subshared));
    }
    rows.push_back(pooled.priv[mi]);
    for (std::size_t i = 0; i < b; ++i) kinds.push_back(static_cast<std::size_t>(SourceKind::priv));
  }
  Tensor stacked = concat(rows, 0);  // [12B x d_c]

  if (opts.mix_perm) {
    const auto& perm = *opts.mix_perm;
    if (perm.size() != kinds.size()) {
      throw contract_error("supervisor_loss: mixing permutation length must be 12*B");
    }
    stacked = permute_rows(stacked, perm);
    std::vector<std::size_t> mixed(kinds.size());
    for (std::size_t i = 0; i < perm.size(); ++i) mixed[i] = kinds[perm[i]];
    kinds = std::move(mixed);
  }
  if (opts.adversarial) stacked = grad_reverse(stacked);

  Tensor probs = supervisor_forward(net, stacked);         // [12B x 3]
  Tensor p_true = select_columns(probs, kinds);            // [12B]
  Tensor logp = log(clamp(p_true, 1e-12, 1.0));
  // -(1/M) * sum over modality brackets of batch means = -(1/(M*B)) * sum
  return divide(neg(sum(logp)), 3.0 * static_cast<double>(b));
}

Tensor task_loss(const Tensor& pred, const Tensor& labels, TaskMode mode) {
  if (mode == TaskMode::regression) {
    if (pred.shape() != labels.shape()) {
      throw shape_error("task_loss: prediction " + shape_str(pred.shape()) +
                        " vs labels " + shape_str(labels.shape()));
    }
    return mean(square(sub(pred, labels)));
  }
  if (pred.rank() != 2 || labels.rank() != 1 || pred.extent(0) != labels.extent(0)) {
    throw shape_error("task_loss: expected [B x C] logits and [B] labels");
  }
  std::vector<std::size_t> idx(labels.extent(0));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double v = labels.values()[i];
    if (v < 0 || v != std::floor(v)) {
      throw contract_error("task_loss: classification labels must be nonnegative integers");
    }
    idx[i] = static_cast<std::size_t>(v);
  }
  Tensor probs = nn::softmax(pred, 1);
  Tensor p_true = select_columns(probs, idx);
  return neg(mean(log(clamp(p_true, 1e-12, 1.0))));
}

Tensor tri_subspace_loss(const Tensor& l_com, const Tensor& l_pair, const Tensor& l_pri,
                         const Tensor& l_ort, const Tensor& l_sup, const LossWeights& w,
                         double com_weight) {
  w.validate();
  Tensor ts = mul(l_com, com_weight);
  ts = add(ts, mul(l_pair, w.lambda1));
  ts = add(ts, mul(l_pri, w.lambda2));
  ts = add(ts, mul(l_ort, w.lambda3));
  ts = add(ts, mul(l_sup, w.lambda4));
  return ts;
}

Tensor total_loss(const Tensor& l_task, const Tensor& l_ts) { return add(l_task, l_ts); }

}  // namespace tsd

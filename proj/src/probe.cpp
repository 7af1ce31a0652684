// SPDX-License-Identifier: Apache-2.0
#include "tsd/probe.hpp"

#include <cmath>

#include "tsd/dataset_io.hpp"
#include "tsd/saca.hpp"

namespace tsd {

namespace {

// Cholesky solve of the SPD system A X = B with A [p x p], B [p x q].
std::vector<double> cholesky_solve(std::vector<double> a, std::size_t p,
                                   std::vector<double> b, std::size_t q) {
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * p + k] * a[j * p + k];
      if (i == j) {
        if (s <= 0.0) throw numeric_error("ridge probe: system not positive definite");
        a[i * p + j] = std::sqrt(s);
      } else {
        a[i * p + j] = s / a[j * p + j];
      }
    }
  }
  // forward then backward substitution per column
  for (std::size_t col = 0; col < q; ++col) {
    for (std::size_t i = 0; i < p; ++i) {
      double s = b[i * q + col];
      for (std::size_t k = 0; k < i; ++k) s -= a[i * p + k] * b[k * q + col];
      b[i * q + col] = s / a[i * p + i];
    }
    for (std::size_t i = p; i-- > 0;) {
      double s = b[i * q + col];
      for (std::size_t k = i + 1; k < p; ++k) s -= a[k * p + i] * b[k * q + col];
      b[i * q + col] = s / a[i * p + i];
    }
  }
  return b;
}

}  // namespace

double ridge_r2(const std::vector<double>& x, std::size_t n, std::size_t p,
                const std::vector<double>& y, std::size_t q, double alpha) {
  if (x.size() != n * p || y.size() != n * q) throw contract_error("ridge_r2: size mismatch");
  if (n < 2) throw contract_error("ridge_r2: needs at least 2 samples");

  std::vector<double> xc(x), yc(y);
  for (std::size_t j = 0; j < p; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xc[i * p + j];
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) xc[i * p + j] -= mu;
  }
  double sst = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += yc[i * q + j];
    mu /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      yc[i * q + j] -= mu;
      sst += yc[i * q + j] * yc[i * q + j];
    }
  }
  if (sst == 0.0) return 0.0;

  std::vector<double> xtx(p * p, 0.0), xty(p * q, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const double xij = xc[i * p + j];
      if (xij == 0.0) continue;
      for (std::size_t k = 0; k < p; ++k) xtx[j * p + k] += xij * xc[i * p + k];
      for (std::size_t k = 0; k < q; ++k) xty[j * q + k] += xij * yc[i * q + k];
    }
  }
  for (std::size_t j = 0; j < p; ++j) xtx[j * p + j] += alpha;

  std::vector<double> w = cholesky_solve(std::move(xtx), p, std::move(xty), q);

  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      double pred = 0.0;
      for (std::size_t j = 0; j < p; ++j) pred += xc[i * p + j] * w[j * q + k];
      const double diff = yc[i * q + k] - pred;
      sse += diff * diff;
    }
  }
  return 1.0 - sse / sst;
}

std::vector<ProbeRow> probe_disentanglement(const TsdModel& model, const SyntheticData& synth,
                                            const std::vector<std::size_t>& indices,
                                            std::size_t batch_size) {
  if (indices.empty()) throw contract_error("probe_disentanglement: empty index list");
  if (model.config().non_disentangled) {
    throw contract_error("probe_disentanglement: non-disentangled models have no subspaces");
  }
  NoGradGuard no_grad;
  const std::size_t n = indices.size();
  const std::size_t d_c = model.config().d_c;

  // gather all 15 embedding matrices: 12 pooled + 3 pooled pair concats
  struct Emb {
    std::string name;
    std::vector<double> data;
  };
  std::vector<Emb> embs;
  for (int m = 0; m < 3; ++m) embs.push_back({std::string("c_") + modality_name(static_cast<Modality>(m)), {}});
  for (int p = 0; p < 3; ++p) {
    const auto& pr = modality_pairs()[p];
    embs.push_back({"s_" + pair_name(p) + "_from_" + modality_name(pr.first), {}});
    embs.push_back({"s_" + pair_name(p) + "_from_" + modality_name(pr.second), {}});
  }
  for (int m = 0; m < 3; ++m) embs.push_back({std::string("p_") + modality_name(static_cast<Modality>(m)), {}});
  for (int p = 0; p < 3; ++p) embs.push_back({"s_" + pair_name(p), {}});
  for (auto& e : embs) e.data.reserve(n * d_c);

  for (const auto& batch_idx : eval_batches(indices, batch_size)) {
    ModalityBatch batch = assemble_batch(synth.dataset, batch_idx);
    UnifiedFeatures unified = model.unify(batch);
    SubspaceBundle bundle = model.disentangle(unified);
    PooledBundle pooled = model.pool_bundle(bundle);
    std::array<Tensor, 3> pooled_concat;
    for (int p = 0; p < 3; ++p) pooled_concat[p] = pool(bundle.pair_concat[p]);

    const std::size_t b = batch_idx.size();
    for (std::size_t i = 0; i < b; ++i) {
      std::size_t e = 0;
      for (int m = 0; m < 3; ++m, ++e)
        for (std::size_t j = 0; j < d_c; ++j) embs[e].data.push_back(pooled.common[m].at({i, j}));
      for (int p = 0; p < 3; ++p) {
        for (std::size_t j = 0; j < d_c; ++j)
          embs[e].data.push_back(pooled.pair_first[p].at({i, j}));
        ++e;
        for (std::size_t j = 0; j < d_c; ++j)
          embs[e].data.push_back(pooled.pair_second[p].at({i, j}));
        ++e;
      }
      for (int m = 0; m < 3; ++m, ++e)
        for (std::size_t j = 0; j < d_c; ++j) embs[e].data.push_back(pooled.priv[m].at({i, j}));
      for (int p = 0; p < 3; ++p, ++e)
        for (std::size_t j = 0; j < d_c; ++j) embs[e].data.push_back(pooled_concat[p].at({i, j}));
    }
  }

  // latent group targets
  struct Group {
    std::string name;
    std::size_t off, dim;
  };
  const LatentLayout& lay = synth.layout;
  std::vector<Group> groups = {{"g", lay.g_off, lay.g_dim}};
  for (int p = 0; p < 3; ++p) groups.push_back({"u_" + pair_name(p), lay.u_off[p], lay.u_dim[p]});
  for (int m = 0; m < 3; ++m)
    groups.push_back({std::string("r_") + modality_name(static_cast<Modality>(m)),
                      lay.r_off[m], lay.r_dim[m]});

  std::vector<ProbeRow> rows;
  rows.reserve(groups.size() * embs.size());
  for (const Group& g : groups) {
    std::vector<double> target(n * g.dim);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < g.dim; ++j)
        target[i * g.dim + j] = synth.latents[indices[i] * lay.total + g.off + j];
    for (const Emb& e : embs) {
      rows.push_back({g.name, e.name, ridge_r2(e.data, n, d_c, target, g.dim)});
    }
  }
  return rows;
}

double probe_r2(const std::vector<ProbeRow>& rows, const std::string& latent,
                const std::string& embedding) {
  for (const ProbeRow& r : rows) {
    if (r.latent_group == latent && r.embedding == embedding) return r.r2;
  }
  throw contract_error("probe_r2: no row for (" + latent + ", " + embedding + ")");
}

}  // namespace tsd

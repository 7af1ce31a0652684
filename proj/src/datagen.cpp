// SPDX-License-Identifier: Apache-2.0
#include "tsd/datagen.hpp"

#include <algorithm>
#include <cmath>

namespace tsd {

void SyntheticSpec::validate() const {
  if (n_samples == 0) throw config_error("synthetic spec: n_samples must be >= 1");
  for (std::size_t v : t)
    if (v == 0) throw config_error("synthetic spec: sequence lengths must be >= 1");
  for (std::size_t v : d_raw)
    if (v == 0) throw config_error("synthetic spec: raw dims must be >= 1");
  if (dim_g == 0) throw config_error("synthetic spec: dim_g must be >= 1");
  for (std::size_t v : dim_u)
    if (v == 0) throw config_error("synthetic spec: pair latent dims must be >= 1");
  for (std::size_t v : dim_r)
    if (v == 0) throw config_error("synthetic spec: private latent dims must be >= 1");
  if (noise_sigma < 0 || label_noise < 0) {
    throw config_error("synthetic spec: noise levels must be nonnegative");
  }
  if (label_kind == LabelKind::intent && n_classes < 2) {
    throw config_error("synthetic spec: intent labels need n_classes >= 2");
  }
}

std::size_t SyntheticSpec::total_latent_dim() const {
  return dim_g + dim_u[0] + dim_u[1] + dim_u[2] + dim_r[0] + dim_r[1] + dim_r[2];
}

LatentLayout latent_layout(const SyntheticSpec& spec) {
  LatentLayout lay{};
  std::size_t off = 0;
  lay.g_off = off;
  lay.g_dim = spec.dim_g;
  off += spec.dim_g;
  for (int p = 0; p < 3; ++p) {
    lay.u_off[p] = off;
    lay.u_dim[p] = spec.dim_u[p];
    off += spec.dim_u[p];
  }
  for (int m = 0; m < 3; ++m) {
    lay.r_off[m] = off;
    lay.r_dim[m] = spec.dim_r[m];
    off += spec.dim_r[m];
  }
  lay.total = off;
  return lay;
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  const LatentLayout lay = latent_layout(spec);

  // Which latent coordinates feed modality m: g, u of pairs containing m,
  // r_m, in layout order.
  std::array<std::vector<std::size_t>, 3> feed;
  for (int m = 0; m < 3; ++m) {
    for (std::size_t i = 0; i < lay.g_dim; ++i) feed[m].push_back(lay.g_off + i);
    for (int p = 0; p < kNumPairs; ++p) {
      if (!pair_contains(p, static_cast<Modality>(m))) continue;
      for (std::size_t i = 0; i < lay.u_dim[p]; ++i) feed[m].push_back(lay.u_off[p] + i);
    }
    for (std::size_t i = 0; i < lay.r_dim[m]; ++i) feed[m].push_back(lay.r_off[m] + i);
  }

  Rng rng = Rng(spec.seed).derive(hash_name("datagen"));

  // Fixed mixing matrices A_m: d_raw[m] x |feed[m]|, entries N(0, 1/|feed|).
  std::array<std::vector<double>, 3> mix;
  for (int m = 0; m < 3; ++m) {
    const std::size_t cols = feed[m].size();
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    mix[m].resize(spec.d_raw[m] * cols);
    for (double& v : mix[m]) v = rng.normal() * scale;
  }

  // Intent-label projection, drawn even when unused to keep the stream layout
  // independent of the label kind.
  std::vector<double> intent_w(spec.n_classes * lay.total);
  for (double& v : intent_w) v = rng.normal();

  // Expanded per-coordinate label weights.
  std::vector<double> w(lay.total, 0.0);
  for (std::size_t i = 0; i < lay.g_dim; ++i) w[lay.g_off + i] = spec.w_g;
  for (int p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < lay.u_dim[p]; ++i) w[lay.u_off[p] + i] = spec.w_u[p];
  for (int m = 0; m < 3; ++m)
    for (std::size_t i = 0; i < lay.r_dim[m]; ++i) w[lay.r_off[m] + i] = spec.w_r[m];

  SyntheticData out;
  out.layout = lay;
  out.latents.resize(spec.n_samples * lay.total);

  Dataset& ds = out.dataset;
  ds.label_mode = spec.label_kind == LabelKind::regression ? TaskMode::regression
                                                           : TaskMode::classification;
  ds.n_classes = spec.label_kind == LabelKind::class7 ? 7
                 : spec.label_kind == LabelKind::intent ? static_cast<std::uint32_t>(spec.n_classes)
                                                        : 0;
  ds.n_samples = spec.n_samples;
  for (int m = 0; m < 3; ++m) {
    ds.t[m] = static_cast<std::uint32_t>(spec.t[m]);
    ds.d[m] = static_cast<std::uint32_t>(spec.d_raw[m]);
    ds.payload[m].resize(spec.n_samples * spec.t[m] * spec.d_raw[m]);
  }

  std::vector<double> z(lay.total);
  for (std::size_t s = 0; s < spec.n_samples; ++s) {
    for (double& v : z) v = rng.normal();
    std::copy(z.begin(), z.end(), out.latents.begin() + static_cast<std::ptrdiff_t>(s * lay.total));

    for (int m = 0; m < 3; ++m) {
      const std::size_t cols = feed[m].size();
      const std::size_t dm = spec.d_raw[m];
      // base signal A_m · z_m, constant over time
      std::vector<double> base(dm, 0.0);
      for (std::size_t r = 0; r < dm; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += mix[m][r * cols + c] * z[feed[m][c]];
        base[r] = acc;
      }
      double* dst = ds.payload[m].data() + s * spec.t[m] * dm;
      for (std::size_t tt = 0; tt < spec.t[m]; ++tt) {
        for (std::size_t r = 0; r < dm; ++r) {
          const double eps = spec.noise_sigma > 0 ? rng.normal() * spec.noise_sigma : 0.0;
          dst[tt * dm + r] = base[r] + eps;
        }
      }
    }

    double y = 0.0;
    for (std::size_t i = 0; i < lay.total; ++i) y += w[i] * z[i];
    if (spec.label_noise > 0) y += rng.normal() * spec.label_noise;
    y = std::clamp(y, -3.0, 3.0);

    switch (spec.label_kind) {
      case LabelKind::regression:
        ds.labels_reg.push_back(y);
        break;
      case LabelKind::class7: {
        const long bucket = std::lround(std::clamp(y, -3.0, 3.0));
        ds.labels_cls.push_back(static_cast<std::uint32_t>(bucket + 3));
        break;
      }
      case LabelKind::intent: {
        std::size_t best = 0;
        double best_v = -HUGE_VAL;
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
          double acc = 0.0;
          for (std::size_t i = 0; i < lay.total; ++i) acc += intent_w[c * lay.total + i] * z[i];
          if (acc > best_v) {
            best_v = acc;
            best = c;
          }
        }
        ds.labels_cls.push_back(static_cast<std::uint32_t>(best));
        break;
      }
    }
  }
  return out;
}

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "tsd/dataset_io.hpp"

namespace tsd {

enum class LabelKind : int { regression = 0, class7 = 1, intent = 2 };

/// Synthetic multimodal data with planted latent structure: one global
/// group g seen by every modality, one group per modality pair seen only by
/// that pair, and one private group per modality. Latents are constant over
/// a sample's time axis; temporal variation comes only from noise, so mean
/// pooling is the sufficient statistic.
struct SyntheticSpec {
  std::size_t n_samples = 2000;
  std::array<std::size_t, 3> t = {12, 12, 12};
  std::array<std::size_t, 3> d_raw = {16, 16, 16};
  std::size_t dim_g = 4;
  std::array<std::size_t, 3> dim_u = {4, 4, 4};  // u_lv, u_la, u_va
  std::array<std::size_t, 3> dim_r = {4, 4, 4};  // r_l, r_v, r_a
  double noise_sigma = 0.1;
  double label_noise = 0.0;
  // Per-group label weights; the label is the weighted sum of all latent
  // coordinates, w_group applied to every coordinate of its group.
  double w_g = 1.0;
  std::array<double, 3> w_u = {1.0, 1.0, 1.0};
  std::array<double, 3> w_r = {1.0, 1.0, 1.0};
  LabelKind label_kind = LabelKind::regression;
  std::size_t n_classes = 20;  // intent labels
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t total_latent_dim() const;
};

/// Offsets of each latent group inside the concatenated latent vector
/// [g; u_lv; u_la; u_va; r_l; r_v; r_a].
struct LatentLayout {
  std::size_t g_off, g_dim;
  std::array<std::size_t, 3> u_off, u_dim;
  std::array<std::size_t, 3> r_off, r_dim;
  std::size_t total;
};

LatentLayout latent_layout(const SyntheticSpec& spec);

struct SyntheticData {
  Dataset dataset;
  std::vector<double> latents;  // [n_samples x total_latent_dim], row-major
  LatentLayout layout;
};

/// Deterministic generation: same seed, same bits.
SyntheticData generate(const SyntheticSpec& spec);

}  // namespace tsd

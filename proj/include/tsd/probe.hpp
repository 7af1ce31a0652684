// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tsd/config.hpp"
#include "tsd/datagen.hpp"
#include "tsd/model.hpp"

namespace tsd {

/// Pooled R^2 of a ridge probe predicting targets [n x q] from features
/// [n x p]; both sides are centered, the ridge floor guarantees solvability.
/// Constant targets give 0 by convention.
double ridge_r2(const std::vector<double>& x, std::size_t n, std::size_t p,
                const std::vector<double>& y, std::size_t q, double alpha = 1e-6);

struct ProbeRow {
  std::string latent_group;  // g, u_lv, u_la, u_va, r_l, r_v, r_a
  std::string embedding;     // c_m, p_m, s_<pair>_from_<m>, s_<pair> (pooled concat)
  double r2 = 0.0;
};

/// Fits one ridge probe per (planted latent group, pooled embedding) pair on
/// the given samples and reports R^2; off-diagonal pairings quantify
/// leakage.
std::vector<ProbeRow> probe_disentanglement(const TsdModel& model, const SyntheticData& synth,
                                            const std::vector<std::size_t>& indices,
                                            std::size_t batch_size = 64);

/// Lookup helper for the probe report.
double probe_r2(const std::vector<ProbeRow>& rows, const std::string& latent,
                const std::string& embedding);

}  // namespace tsd

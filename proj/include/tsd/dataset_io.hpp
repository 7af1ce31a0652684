// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tsd/losses.hpp"
#include "tsd/subspace.hpp"

namespace tsd {

/// In-memory multimodal dataset. Serialized layout ("TSD1" container, all
/// integers little-endian u32, payload little-endian f64):
///   magic "TSD1" | version | n_samples | label_mode | n_classes |
///   (T, d) x3 | per sample: l payload, v payload, a payload, label
/// where a payload is the row-major [T x d] block and the label is one f64
/// (regression) or one u32 (classification).
struct Dataset {
  static constexpr std::uint32_t kVersion = 1;

  TaskMode label_mode = TaskMode::regression;
  std::uint32_t n_classes = 0;  // classification only
  std::array<std::uint32_t, 3> t = {0, 0, 0};
  std::array<std::uint32_t, 3> d = {0, 0, 0};
  std::size_t n_samples = 0;
  // Per-modality payload, n_samples * T_m * d_m values.
  std::array<std::vector<double>, 3> payload;
  std::vector<double> labels_reg;          // regression labels
  std::vector<std::uint32_t> labels_cls;   // class indices

  bool operator==(const Dataset&) const = default;
};

void write_dataset(const std::string& path, const Dataset& data);
Dataset read_dataset(const std::string& path);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Deterministic shuffled partition; ratios must be positive and sum to 1
/// within 1e-9.
Split make_splits(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);

/// Index batches for one epoch: a deterministic reshuffle derived from
/// (shuffle_seed, epoch), cut into batch_size chunks; a final chunk smaller
/// than 2 is dropped (HSIC needs n >= 2). batch_size >= 2 is a contract.
std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& indices,
                                                    std::size_t batch_size,
                                                    std::uint64_t shuffle_seed,
                                                    std::uint64_t epoch);

/// Fixed-order batches for evaluation (no shuffle; a trailing batch of any
/// size >= 1 is kept so every sample is scored).
std::vector<std::vector<std::size_t>> eval_batches(const std::vector<std::size_t>& indices,
                                                   std::size_t batch_size);

/// Gathers the given samples into [B x T_m x d_m] tensors plus labels
/// (class indices are stored as doubles).
ModalityBatch assemble_batch(const Dataset& data, const std::vector<std::size_t>& idx);

}  // namespace tsd

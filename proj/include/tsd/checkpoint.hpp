// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsd/tensor.hpp"

namespace tsd {

/// Named parameter snapshot. Serialized ("TSDC" container, little-endian):
///   magic "TSDC" | version u32 | n_params u32 |
///   per param: name_len u32 | name | rank u32 | dims u32... | f64 payload
struct ParamSnapshot {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

std::vector<ParamSnapshot> snapshot_params(
    const std::vector<std::pair<std::string, Tensor>>& params);

void write_checkpoint(const std::string& path, const std::vector<ParamSnapshot>& params);
std::vector<ParamSnapshot> read_checkpoint(const std::string& path);

/// Loads a snapshot into live parameters by name; every parameter must be
/// present with a matching shape.
void restore_params(const std::vector<std::pair<std::string, Tensor>>& params,
                    const std::vector<ParamSnapshot>& snapshot);

}  // namespace tsd

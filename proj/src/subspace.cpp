// SPDX-License-Identifier: Apache-2.0
#include "tsd/subspace.hpp"

namespace tsd {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::l: return "l";
    case Modality::v: return "v";
    case Modality::a: return "a";
  }
  throw contract_error("modality_name: invalid modality");
}

Modality modality_from_name(const std::string& name) {
  if (name == "l") return Modality::l;
  if (name == "v") return Modality::v;
  if (name == "a") return Modality::a;
  throw config_error("unknown modality '" + name + "' (expected l, v, or a)");
}

const std::array<ModalityPair, kNumPairs>& modality_pairs() {
  static const std::array<ModalityPair, kNumPairs> pairs = {{
      {Modality::l, Modality::v},
      {Modality::l, Modality::a},
      {Modality::v, Modality::a},
  }};
  return pairs;
}

int pair_index(Modality a, Modality b) {
  if (a == b) throw contract_error("pair_index: a modality cannot pair with itself");
  const auto& ps = modality_pairs();
  for (int i = 0; i < kNumPairs; ++i) {
    if ((ps[i].first == a && ps[i].second == b) || (ps[i].first == b && ps[i].second == a))
      return i;
  }
  throw contract_error("pair_index: invalid modalities");
}

std::string pair_name(int pair_idx) {
  const auto& p = modality_pairs().at(pair_idx);
  return std::string(modality_name(p.first)) + modality_name(p.second);
}

bool pair_contains(int pair_idx, Modality m) {
  const auto& p = modality_pairs().at(pair_idx);
  return p.first == m || p.second == m;
}

const Tensor& SubspaceBundle::directional(int p, Modality m) const {
  const auto& pr = modality_pairs().at(p);
  if (pr.first == m) return pair_first[p];
  if (pr.second == m) return pair_second[p];
  throw contract_error("SubspaceBundle::directional: modality " +
                       std::string(modality_name(m)) + " not in pair " + pair_name(p));
}

const Tensor& PooledBundle::directional(int p, Modality m) const {
  const auto& pr = modality_pairs().at(p);
  if (pr.first == m) return pair_first[p];
  if (pr.second == m) return pair_second[p];
  throw contract_error("PooledBundle::directional: modality " +
                       std::string(modality_name(m)) + " not in pair " + pair_name(p));
}

CommonEncoder CommonEncoder::init(std::size_t d_z, std::size_t d_c, Rng& rng) {
  CommonEncoder e;
  e.fc1 = nn::LinearLayer::init(d_z, d_c, rng);
  e.fc2 = nn::LinearLayer::init(d_c, d_c, rng);
  e.ln = nn::LayerNormLayer::init(d_c);
  return e;
}

PairEncoder PairEncoder::init(std::size_t d_z, std::size_t d_c, Rng& rng) {
  return PairEncoder{nn::LinearLayer::init(d_z, d_c, rng)};
}

PrivateEncoder PrivateEncoder::init(std::size_t d_z, std::size_t d_c, Rng& rng) {
  return PrivateEncoder{nn::LinearLayer::init(d_z, d_c, rng)};
}

SupervisorNet SupervisorNet::init(std::size_t d_c, std::size_t d_h, Rng& rng) {
  SupervisorNet s;
  s.fc1 = nn::LinearLayer::init(d_c, d_h, rng);
  s.fc2 = nn::LinearLayer::init(d_h, 3, rng);
  return s;
}

Tensor encode_common(const CommonEncoder& enc, const Tensor& z) {
  return nn::layer_norm(enc.ln, nn::linear_forward(enc.fc2, nn::gelu(nn::linear_forward(enc.fc1, z))));
}

SubsharedOut encode_subshared(const PairEncoder& enc, const Tensor& z_first,
                              const Tensor& z_second, Modality first, Modality second) {
  if (first == second) {
    throw contract_error("encode_subshared: pair members must be distinct modalities");
  }
  SubsharedOut out;
  out.from_first = nn::sigmoid(nn::linear_forward(enc.fc, z_first));
  out.from_second = nn::sigmoid(nn::linear_forward(enc.fc, z_second));
  const std::size_t time_axis = out.from_first.rank() == 3 ? 1 : 0;
  out.concat = concat({out.from_first, out.from_second}, time_axis);
  return out;
}

Tensor encode_private(const PrivateEncoder& enc, const Tensor& z) {
  return nn::sigmoid(nn::linear_forward(enc.fc, z));
}

Tensor pool(const Tensor& seq) {
  if (seq.rank() != 3) {
    throw shape_error("pool: expected [B x T x d], got " + shape_str(seq.shape()));
  }
  if (seq.extent(1) == 0) throw contract_error("pool: empty time axis");
  return mean(seq, 1);
}

Tensor supervisor_forward(const SupervisorNet& net, const Tensor& x) {
  Tensor logits = nn::linear_forward(net.fc2, nn::gelu(nn::linear_forward(net.fc1, x)));
  return nn::softmax(logits, logits.rank() - 1);
}

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "tsd/tensor.hpp"

namespace tsd::nn {

/// Fully connected layer; weights initialized uniform(-sqrt(1/d_in),
/// +sqrt(1/d_in)), biases zero.
struct LinearLayer {
  Tensor weight;  // [d_in x d_out]
  Tensor bias;    // [d_out]

  static LinearLayer init(std::size_t d_in, std::size_t d_out, Rng& rng);
  std::size_t d_in() const { return weight.extent(0); }
  std::size_t d_out() const { return weight.extent(1); }
};

/// x·W + b applied to the trailing axis; accepts rank 2 or 3 inputs.
Tensor linear_forward(const LinearLayer& layer, const Tensor& x);

/// Exact Gaussian-CDF GELU, x·Φ(x) with Φ from erf (no tanh approximation).
Tensor gelu(const Tensor& x);

/// Numerically stable logistic 1/(1+exp(-x)).
Tensor sigmoid(const Tensor& x);

/// Max-subtracted softmax along `axis`; slices along the axis sum to 1.
Tensor softmax(const Tensor& x, std::size_t axis);

struct LayerNormLayer {
  Tensor gain;    // [d]
  Tensor offset;  // [d]
  double epsilon = 1e-5;

  static LayerNormLayer init(std::size_t d);
};

/// Per-row standardization over the trailing axis, then affine.
Tensor layer_norm(const LayerNormLayer& layer, const Tensor& x);

/// Same-length 1-D convolution over time with symmetric zero padding of
/// (k-1)/2 on each side; k must be odd.
struct TemporalConvEncoder {
  Tensor kernel;  // [k x d_in x d_out]
  Tensor bias;    // [d_out]

  static TemporalConvEncoder init(std::size_t k, std::size_t d_in, std::size_t d_out, Rng& rng);
  std::size_t kernel_width() const { return kernel.extent(0); }
  std::size_t d_in() const { return kernel.extent(1); }
  std::size_t d_out() const { return kernel.extent(2); }
};

/// Accepts [T x d_in] or [B x T x d_in]; output length equals input length.
Tensor temporal_conv(const TemporalConvEncoder& enc, const Tensor& x);

/// Standard multi-head attention: per-head scaled dot-product, heads
/// concatenated, output-projected.
struct MultiHeadAttention {
  std::size_t heads = 0;
  std::size_t d_k = 0;
  LinearLayer wq, wk, wv, wo;

  static MultiHeadAttention init(std::size_t d_model, std::size_t heads, Rng& rng);
  std::size_t d_model() const { return wq.d_in(); }
};

/// query [B x T_q x d] (or [T_q x d]) attends over context [B x T_c x d];
/// T_q is preserved. A zero-length context is a contract error.
Tensor mha_forward(const MultiHeadAttention& att, const Tensor& query_seq,
                   const Tensor& context_seq);

}  // namespace tsd::nn

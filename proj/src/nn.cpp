// SPDX-License-Identifier: Apache-2.0
#include "tsd/nn.hpp"

#include <cmath>

namespace tsd::nn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

LinearLayer LinearLayer::init(std::size_t d_in, std::size_t d_out, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(d_in));
  LinearLayer l;
  l.weight = Tensor::uniform({d_in, d_out}, rng, -bound, bound, true);
  l.bias = Tensor::zeros({d_out}, true);
  return l;
}

Tensor linear_forward(const LinearLayer& layer, const Tensor& x) {
  if (x.rank() < 2 || x.shape().back() != layer.d_in()) {
    throw shape_error("linear_forward: input " + shape_str(x.shape()) +
                      " does not match weight " + shape_str(layer.weight.shape()));
  }
  if (x.rank() == 2) {
    return add_bias(matmul(x, layer.weight), layer.bias);
  }
  const Shape s = x.shape();
  std::size_t rows = x.size() / s.back();
  Tensor flat = reshape(x, {rows, s.back()});
  Tensor y = add_bias(matmul(flat, layer.weight), layer.bias);
  Shape out_shape = s;
  out_shape.back() = layer.d_out();
  return reshape(y, out_shape);
}

Tensor gelu(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double phi = 0.5 * (1.0 + std::erf(xv[i] * kInvSqrt2));
    out[i] = xv[i] * phi;
  }
  auto ix = x.impl_ptr();
  return make_op(x.shape(), std::move(out), {x},
                 [ix](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double v = ix->data[i];
                     const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                     const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
                     (*pg[0])[i] += g[i] * (cdf + v * pdf);
                   }
                 });
}

Tensor sigmoid(const Tensor& x) {
  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  std::vector<double> saved = out;
  return make_op(x.shape(), std::move(out), {x},
                 [saved](const std::vector<double>& g,
                         const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i)
                     (*pg[0])[i] += g[i] * saved[i] * (1.0 - saved[i]);
                 });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) throw shape_error("softmax: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.shape()[i];
  const std::size_t extent = x.shape()[axis];
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
  if (extent == 0) throw shape_error("softmax: empty axis");

  const auto& xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double mx = -HUGE_VAL;
      for (std::size_t e = 0; e < extent; ++e)
        mx = std::max(mx, xv[(o * extent + e) * inner + in]);
      double z = 0.0;
      for (std::size_t e = 0; e < extent; ++e) {
        const std::size_t idx = (o * extent + e) * inner + in;
        out[idx] = std::exp(xv[idx] - mx);
        z += out[idx];
      }
      for (std::size_t e = 0; e < extent; ++e) out[(o * extent + e) * inner + in] /= z;
    }
  }
  std::vector<double> saved = out;
  return make_op(x.shape(), std::move(out), {x},
                 [saved, outer, extent, inner](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   // dx = (g - <g, y>) * y per slice
                   for (std::size_t o = 0; o < outer; ++o) {
                     for (std::size_t in = 0; in < inner; ++in) {
                       double dot = 0.0;
                       for (std::size_t e = 0; e < extent; ++e) {
                         const std::size_t idx = (o * extent + e) * inner + in;
                         dot += g[idx] * saved[idx];
                       }
                       for (std::size_t e = 0; e < extent; ++e) {
                         const std::size_t idx = (o * extent + e) * inner + in;
                         (*pg[0])[idx] += (g[idx] - dot) * saved[idx];
                       }
                     }
                   }
                 });
}

LayerNormLayer LayerNormLayer::init(std::size_t d) {
  LayerNormLayer l;
  l.gain = Tensor::full({d}, 1.0, true);
  l.offset = Tensor::zeros({d}, true);
  return l;
}

Tensor layer_norm(const LayerNormLayer& layer, const Tensor& x) {
  const std::size_t d = layer.gain.extent(0);
  if (x.rank() < 1 || x.shape().back() != d) {
    throw shape_error("layer_norm: trailing extent of " + shape_str(x.shape()) +
                      " does not match normalized width " + std::to_string(d));
  }
  const std::size_t rows = x.size() / d;
  const double eps = layer.epsilon;
  const auto& xv = x.values();
  const auto& gv = layer.gain.values();
  const auto& bv = layer.offset.values();

  std::vector<double> out(x.size());
  std::vector<double> norm(x.size());     // (x - mu) / s, saved for backward
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double nj = (row[j] - mu) * is;
      norm[r * d + j] = nj;
      out[r * d + j] = nj * gv[j] + bv[j];
    }
  }

  auto ig = layer.gain.impl_ptr();
  return make_op(
      x.shape(), std::move(out), {x, layer.gain, layer.offset},
      [ig, norm, inv_std, rows, d](const std::vector<double>& g,
                                   const std::vector<std::vector<double>*>& pg) {
        const auto& gain = ig->data;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g.data() + r * d;
          const double* nr = norm.data() + r * d;
          if (pg[0]) {
            // dL/dnorm_j = g_j * gain_j; then the standard LN input gradient
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dn = gr[j] * gain[j];
              mean_dn += dn;
              mean_dn_n += dn * nr[j];
            }
            mean_dn /= static_cast<double>(d);
            mean_dn_n /= static_cast<double>(d);
            double* dx = pg[0]->data() + r * d;
            for (std::size_t j = 0; j < d; ++j) {
              const double dn = gr[j] * gain[j];
              dx[j] += inv_std[r] * (dn - mean_dn - nr[j] * mean_dn_n);
            }
          }
          if (pg[1]) {
            for (std::size_t j = 0; j < d; ++j) (*pg[1])[j] += gr[j] * nr[j];
          }
          if (pg[2]) {
            for (std::size_t j = 0; j < d; ++j) (*pg[2])[j] += gr[j];
          }
        }
      });
}

TemporalConvEncoder TemporalConvEncoder::init(std::size_t k, std::size_t d_in, std::size_t d_out,
                                              Rng& rng) {
  if (k % 2 == 0 || k == 0) {
    throw contract_error("TemporalConvEncoder: kernel width must be odd and positive");
  }
  const double bound = std::sqrt(1.0 / static_cast<double>(k * d_in));
  TemporalConvEncoder e;
  e.kernel = Tensor::uniform({k, d_in, d_out}, rng, -bound, bound, true);
  e.bias = Tensor::zeros({d_out}, true);
  return e;
}

Tensor temporal_conv(const TemporalConvEncoder& enc, const Tensor& x) {
  const bool batched = x.rank() == 3;
  if (!batched && x.rank() != 2) {
    throw shape_error("temporal_conv: expected rank-2 or rank-3 input, got " +
                      shape_str(x.shape()));
  }
  const std::size_t B = batched ? x.extent(0) : 1;
  const std::size_t T = batched ? x.extent(1) : x.extent(0);
  const std::size_t din = batched ? x.extent(2) : x.extent(1);
  if (din != enc.d_in()) {
    throw shape_error("temporal_conv: input width " + std::to_string(din) +
                      " does not match kernel " + shape_str(enc.kernel.shape()));
  }
  if (T < 1) throw contract_error("temporal_conv: sequence length must be >= 1");
  const std::size_t k = enc.kernel_width();
  const std::size_t dout = enc.d_out();
  const std::size_t pad = (k - 1) / 2;

  const auto& xv = x.values();
  const auto& kv = enc.kernel.values();
  const auto& biasv = enc.bias.values();
  std::vector<double> out(B * T * dout);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      double* orow = out.data() + (b * T + t) * dout;
      for (std::size_t o = 0; o < dout; ++o) orow[o] = biasv[o];
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                   static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* xrow = xv.data() + (b * T + static_cast<std::size_t>(src)) * din;
        const double* krow = kv.data() + j * din * dout;
        for (std::size_t i = 0; i < din; ++i) {
          const double xi = xrow[i];
          if (xi == 0.0) continue;
          const double* kcol = krow + i * dout;
          for (std::size_t o = 0; o < dout; ++o) orow[o] += xi * kcol[o];
        }
      }
    }
  }

  Shape out_shape = batched ? Shape{B, T, dout} : Shape{T, dout};
  auto ix = x.impl_ptr();
  auto ik = enc.kernel.impl_ptr();
  return make_op(
      out_shape, std::move(out), {x, enc.kernel, enc.bias},
      [ix, ik, B, T, din, dout, k, pad](const std::vector<double>& g,
                                        const std::vector<std::vector<double>*>& pg) {
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t t = 0; t < T; ++t) {
            const double* grow = g.data() + (b * T + t) * dout;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) -
                                         static_cast<std::ptrdiff_t>(pad);
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
              const std::size_t srow = (b * T + static_cast<std::size_t>(src)) * din;
              if (pg[0]) {
                double* dx = pg[0]->data() + srow;
                const double* krow = ik->data.data() + j * din * dout;
                for (std::size_t i = 0; i < din; ++i) {
                  double acc = 0.0;
                  const double* kcol = krow + i * dout;
                  for (std::size_t o = 0; o < dout; ++o) acc += grow[o] * kcol[o];
                  dx[i] += acc;
                }
              }
              if (pg[1]) {
                double* dk = pg[1]->data() + j * din * dout;
                const double* xrow = ix->data.data() + srow;
                for (std::size_t i = 0; i < din; ++i) {
                  const double xi = xrow[i];
                  if (xi == 0.0) continue;
                  double* dkcol = dk + i * dout;
                  for (std::size_t o = 0; o < dout; ++o) dkcol[o] += xi * grow[o];
                }
              }
            }
            if (pg[2]) {
              for (std::size_t o = 0; o < dout; ++o) (*pg[2])[o] += grow[o];
            }
          }
        }
      });
}

MultiHeadAttention MultiHeadAttention::init(std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw contract_error("MultiHeadAttention: model dimension " + std::to_string(d_model) +
                         " must be divisible by head count " + std::to_string(heads));
  }
  MultiHeadAttention m;
  m.heads = heads;
  m.d_k = d_model / heads;
  m.wq = LinearLayer::init(d_model, d_model, rng);
  m.wk = LinearLayer::init(d_model, d_model, rng);
  m.wv = LinearLayer::init(d_model, d_model, rng);
  m.wo = LinearLayer::init(d_model, d_model, rng);
  return m;
}

Tensor mha_forward(const MultiHeadAttention& att, const Tensor& query_seq,
                   const Tensor& context_seq) {
  const bool batched = query_seq.rank() == 3;
  if (query_seq.rank() != context_seq.rank() || (query_seq.rank() != 2 && !batched)) {
    throw shape_error("mha_forward: query and context must both be rank 2 or rank 3");
  }
  const std::size_t d = query_seq.shape().back();
  if (d != att.d_model() || context_seq.shape().back() != d) {
    throw shape_error("mha_forward: model dimension mismatch: query " +
                      shape_str(query_seq.shape()) + ", context " +
                      shape_str(context_seq.shape()));
  }
  const std::size_t t_c = batched ? context_seq.extent(1) : context_seq.extent(0);
  if (t_c == 0) throw contract_error("mha_forward: zero-length context");
  if (batched && query_seq.extent(0) != context_seq.extent(0)) {
    throw shape_error("mha_forward: batch extents differ");
  }

  Tensor q3 = batched ? query_seq : reshape(query_seq, {1, query_seq.extent(0), d});
  Tensor c3 = batched ? context_seq : reshape(context_seq, {1, t_c, d});

  Tensor q = linear_forward(att.wq, q3);
  Tensor kk = linear_forward(att.wk, c3);
  Tensor v = linear_forward(att.wv, c3);

  const double scale = 1.0 / std::sqrt(static_cast<double>(att.d_k));
  std::vector<Tensor> head_outs;
  head_outs.reserve(att.heads);
  for (std::size_t h = 0; h < att.heads; ++h) {
    Tensor qh = slice(q, 2, h * att.d_k, att.d_k);
    Tensor kh = slice(kk, 2, h * att.d_k, att.d_k);
    Tensor vh = slice(v, 2, h * att.d_k, att.d_k);
    Tensor scores = mul(bmm(qh, transpose(kh)), scale);  // [B x T_q x T_c]
    Tensor weights = softmax(scores, 2);
    head_outs.push_back(bmm(weights, vh));  // [B x T_q x d_k]
  }
  Tensor merged = att.heads == 1 ? head_outs.front() : concat(head_outs, 2);
  Tensor out = linear_forward(att.wo, merged);
  if (!batched) out = reshape(out, {out.extent(1), d});
  return out;
}

}  // namespace tsd::nn

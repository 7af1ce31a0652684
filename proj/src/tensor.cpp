// SPDX-License-Identifier: Apache-2.0
#include "tsd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace tsd {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local int g_no_grad_depth = 0;

std::uint64_t next_id() { return g_next_id.fetch_add(1, std::memory_order_relaxed); }

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw numeric_error(std::string(op) + ": non-finite result");
  }
}

void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& extent,
                std::size_t& inner) {
  outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  extent = s[axis];
  inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Tensor make_leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw shape_error("tensor: shape " + shape_str(shape) + " does not match data length " +
                      std::to_string(data.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->id = next_id();
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               detail::BackwardFn backward_fn) {
  bool rg = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
  }
  Tensor t = make_leaf(std::move(shape), std::move(data), rg);
  if (rg) {
    auto* impl = t.impl();
    impl->parents.reserve(parents.size());
    for (const Tensor& p : parents) impl->parents.push_back(p.impl_ptr());
    impl->backward_fn = std::move(backward_fn);
  }
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = numel(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = numel(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return make_leaf(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return make_leaf({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::size_t n = numel(shape);
  std::vector<double> d(n);
  for (double& x : d) x = rng.uniform(lo, hi);
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, bool requires_grad) {
  std::size_t n = numel(shape);
  std::vector<double> d(n);
  for (double& x : d) x = rng.normal();
  return make_leaf(std::move(shape), std::move(d), requires_grad);
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != rank()) throw shape_error("at: index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : idx) {
    if (i >= impl_->shape[axis]) throw shape_error("at: index out of range");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

double Tensor::item() const {
  if (size() != 1) {
    throw contract_error("item: tensor has " + std::to_string(size()) + " elements, expected 1");
  }
  return impl_->data[0];
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::update_data(const std::vector<double>& new_data) {
  if (impl_->backward_fn) {
    throw contract_error("update_data: only leaf tensors may be mutated");
  }
  if (new_data.size() != impl_->data.size()) {
    throw shape_error("update_data: size mismatch");
  }
  impl_->data = new_data;
}

Tensor Tensor::detached_copy(bool requires_grad) const {
  return make_leaf(impl_->shape, impl_->data, requires_grad);
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw shape_error("matmul: expected rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2) {
    throw shape_error("matmul: inner extents differ: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      const double* brow = pb + kk * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto ia = a.impl_ptr();
  auto ib = b.impl_ptr();
  return make_op(
      {m, n}, std::move(out), {a, b},
      [ia, ib, m, k, n](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& pg) {
        if (pg[0]) {  // dA += G · B^T
          std::vector<double>& da = *pg[0];
          const double* bv = ib->data.data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gv = g[i * n + j];
              for (std::size_t kk = 0; kk < k; ++kk) da[i * k + kk] += gv * bv[kk * n + j];
            }
        }
        if (pg[1]) {  // dB += A^T · G
          std::vector<double>& db = *pg[1];
          const double* av = ia->data.data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double avv = av[i * k + kk];
              for (std::size_t j = 0; j < n; ++j) db[kk * n + j] += avv * g[i * n + j];
            }
        }
      });
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3) {
    throw shape_error("bmm: expected rank-3 tensors, got " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const std::size_t B = a.extent(0), m = a.extent(1), k = a.extent(2);
  if (b.extent(0) != B || b.extent(1) != k) {
    throw shape_error("bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const std::size_t n = b.extent(2);
  std::vector<double> out(B * m * n, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t bb = 0; bb < B; ++bb) {
    const double* ab = pa + bb * m * k;
    const double* bbp = pb + bb * k * n;
    double* ob = out.data() + bb * m * n;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = ab[i * k + kk];
        for (std::size_t j = 0; j < n; ++j) ob[i * n + j] += av * bbp[kk * n + j];
      }
  }
  auto ia = a.impl_ptr();
  auto ib = b.impl_ptr();
  return make_op(
      {B, m, n}, std::move(out), {a, b},
      [ia, ib, B, m, k, n](const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& pg) {
        for (std::size_t bb = 0; bb < B; ++bb) {
          const double* gb = g.data() + bb * m * n;
          if (pg[0]) {
            double* da = pg[0]->data() + bb * m * k;
            const double* bv = ib->data.data() + bb * k * n;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < n; ++j) {
                const double gv = gb[i * n + j];
                for (std::size_t kk = 0; kk < k; ++kk) da[i * k + kk] += gv * bv[kk * n + j];
              }
          }
          if (pg[1]) {
            double* db = pg[1]->data() + bb * k * n;
            const double* av = ia->data.data() + bb * m * k;
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double avv = av[i * k + kk];
                for (std::size_t j = 0; j < n; ++j) db[kk * n + j] += avv * gb[i * n + j];
              }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() == 2) {
    const std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<double> out(m * n);
    const double* pa = a.values().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j * m + i] = pa[i * n + j];
    return make_op({n, m}, std::move(out), {a},
                   [m, n](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                     if (!pg[0]) return;
                     std::vector<double>& da = *pg[0];
                     for (std::size_t i = 0; i < m; ++i)
                       for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
                   });
  }
  if (a.rank() == 3) {
    const std::size_t B = a.extent(0), m = a.extent(1), n = a.extent(2);
    std::vector<double> out(B * m * n);
    const double* pa = a.values().data();
    for (std::size_t bb = 0; bb < B; ++bb)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[bb * m * n + j * m + i] = pa[bb * m * n + i * n + j];
    return make_op({B, n, m}, std::move(out), {a},
                   [B, m, n](const std::vector<double>& g,
                             const std::vector<std::vector<double>*>& pg) {
                     if (!pg[0]) return;
                     std::vector<double>& da = *pg[0];
                     for (std::size_t bb = 0; bb < B; ++bb)
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           da[bb * m * n + i * n + j] += g[bb * m * n + j * m + i];
                   });
  }
  throw shape_error("transpose: expected rank 2 or 3, got " + shape_str(a.shape()));
}

// ---- elementwise ----------------------------------------------------------

namespace {

// Binary ops accept equal shapes or a single-element tensor on either side
// (the scalar-with-tensor broadcast).
struct BinaryPlan {
  Shape shape;
  std::size_t n;
  bool a_scalar;
  bool b_scalar;
};

BinaryPlan binary_plan(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return {a.shape(), a.size(), false, false};
  const bool as = a.size() == 1, bs = b.size() == 1;
  if (!as && !bs) {
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  }
  // scalar-with-tensor broadcast: the result takes the non-scalar shape;
  // with two single-element operands, the higher-rank one wins.
  const Shape& s = (as && bs) ? (a.rank() >= b.rank() ? a.shape() : b.shape())
                              : (as ? b.shape() : a.shape());
  return {s, numel(s), as && a.shape() != s, bs && b.shape() != s};
}

void add_scaled(std::vector<double>& dst, const std::vector<double>& src, bool scalar_dst) {
  if (scalar_dst) {
    double acc = 0.0;
    for (double v : src) acc += v;
    dst[0] += acc;
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  BinaryPlan p = binary_plan(a, b, "add");
  std::vector<double> out(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = av[p.a_scalar ? 0 : i] + bv[p.b_scalar ? 0 : i];
  const bool as = p.a_scalar, bs = p.b_scalar;
  return make_op(p.shape, std::move(out), {a, b},
                 [as, bs](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                   if (pg[0]) add_scaled(*pg[0], g, as);
                   if (pg[1]) add_scaled(*pg[1], g, bs);
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  BinaryPlan p = binary_plan(a, b, "sub");
  std::vector<double> out(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = av[p.a_scalar ? 0 : i] - bv[p.b_scalar ? 0 : i];
  const bool as = p.a_scalar, bs = p.b_scalar;
  return make_op(p.shape, std::move(out), {a, b},
                 [as, bs](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                   if (pg[0]) add_scaled(*pg[0], g, as);
                   if (pg[1]) {
                     if (bs) {
                       double acc = 0.0;
                       for (double v : g) acc += v;
                       (*pg[1])[0] -= acc;
                     } else {
                       for (std::size_t i = 0; i < g.size(); ++i) (*pg[1])[i] -= g[i];
                     }
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  BinaryPlan p = binary_plan(a, b, "mul");
  std::vector<double> out(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = av[p.a_scalar ? 0 : i] * bv[p.b_scalar ? 0 : i];
  const bool as = p.a_scalar, bs = p.b_scalar;
  auto ia = a.impl_ptr();
  auto ib = b.impl_ptr();
  return make_op(p.shape, std::move(out), {a, b},
                 [ia, ib, as, bs](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& pg) {
                   const auto& av = ia->data;
                   const auto& bv = ib->data;
                   if (pg[0]) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                       (*pg[0])[as ? 0 : i] += g[i] * bv[bs ? 0 : i];
                   }
                   if (pg[1]) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                       (*pg[1])[bs ? 0 : i] += g[i] * av[as ? 0 : i];
                   }
                 });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  BinaryPlan p = binary_plan(a, b, "divide");
  for (double v : b.values()) {
    if (v == 0.0) throw numeric_error("divide: divisor contains zero");
  }
  std::vector<double> out(p.n);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < p.n; ++i) out[i] = av[p.a_scalar ? 0 : i] / bv[p.b_scalar ? 0 : i];
  const bool as = p.a_scalar, bs = p.b_scalar;
  auto ia = a.impl_ptr();
  auto ib = b.impl_ptr();
  return make_op(p.shape, std::move(out), {a, b},
                 [ia, ib, as, bs](const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& pg) {
                   const auto& av = ia->data;
                   const auto& bv = ib->data;
                   if (pg[0]) {
                     for (std::size_t i = 0; i < g.size(); ++i)
                       (*pg[0])[as ? 0 : i] += g[i] / bv[bs ? 0 : i];
                   }
                   if (pg[1]) {
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double bb = bv[bs ? 0 : i];
                       (*pg[1])[bs ? 0 : i] -= g[i] * av[as ? 0 : i] / (bb * bb);
                     }
                   }
                 });
}

Tensor add(const Tensor& a, double s) { return add(a, Tensor::scalar(s)); }
Tensor sub(const Tensor& a, double s) { return sub(a, Tensor::scalar(s)); }
Tensor sub(double s, const Tensor& a) { return sub(Tensor::scalar(s), a); }
Tensor mul(const Tensor& a, double s) { return mul(a, Tensor::scalar(s)); }
Tensor divide(const Tensor& a, double s) { return divide(a, Tensor::scalar(s)); }

Tensor neg(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -a.values()[i];
  return make_op(a.shape(), std::move(out), {a},
                 [](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] -= g[i];
                 });
}

Tensor square(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * a.values()[i];
  auto ia = a.impl_ptr();
  return make_op(a.shape(), std::move(out), {a},
                 [ia](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i)
                     (*pg[0])[i] += 2.0 * ia->data[i] * g[i];
                 });
}

Tensor sqrt(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.values()[i];
    if (v < 0.0) throw numeric_error("sqrt: negative input");
    out[i] = std::sqrt(v);
  }
  std::vector<double> saved = out;
  return make_op(a.shape(), std::move(out), {a},
                 [saved](const std::vector<double>& g,
                         const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i)
                     (*pg[0])[i] += g[i] / (2.0 * saved[i]);
                 });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  check_finite(out, "exp");
  std::vector<double> saved = out;
  return make_op(a.shape(), std::move(out), {a},
                 [saved](const std::vector<double>& g,
                         const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] * saved[i];
                 });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.values()[i];
    if (v <= 0.0) throw numeric_error("log: nonpositive input");
    out[i] = std::log(v);
  }
  auto ia = a.impl_ptr();
  return make_op(a.shape(), std::move(out), {a},
                 [ia](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i] / ia->data[i];
                 });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw contract_error("clamp: lo > hi");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, a.values()[i]));
  auto ia = a.impl_ptr();
  return make_op(a.shape(), std::move(out), {a},
                 [ia, lo, hi](const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double v = ia->data[i];
                     if (v >= lo && v <= hi) (*pg[0])[i] += g[i];
                   }
                 });
}

// ---- reductions & reshaping -----------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const std::size_t n = a.size();
  return make_op({1}, {acc}, {a},
                 [n](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < n; ++i) (*pg[0])[i] += g[0];
                 });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw numeric_error("mean: reduction over empty tensor");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const std::size_t n = a.size();
  const double inv = 1.0 / static_cast<double>(n);
  return make_op({1}, {acc * inv}, {a},
                 [n, inv](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < n; ++i) (*pg[0])[i] += g[0] * inv;
                 });
}

namespace {

Tensor reduce_axis(const Tensor& a, std::size_t axis, bool take_mean, const char* name) {
  if (axis >= a.rank()) {
    throw shape_error(std::string(name) + ": axis " + std::to_string(axis) +
                      " out of range for rank " + std::to_string(a.rank()));
  }
  std::size_t outer, extent, inner;
  axis_split(a.shape(), axis, outer, extent, inner);
  if (take_mean && extent == 0) throw numeric_error("mean: reduction over empty axis extent");
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape()[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(outer * inner, 0.0);
  const double* pa = a.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t e = 0; e < extent; ++e)
      for (std::size_t in = 0; in < inner; ++in)
        out[o * inner + in] += pa[(o * extent + e) * inner + in];
  const double scale = take_mean ? 1.0 / static_cast<double>(extent) : 1.0;
  if (take_mean)
    for (double& v : out) v *= scale;
  return make_op(out_shape, std::move(out), {a},
                 [outer, extent, inner, scale](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   std::vector<double>& da = *pg[0];
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t e = 0; e < extent; ++e)
                       for (std::size_t in = 0; in < inner; ++in)
                         da[(o * extent + e) * inner + in] += g[o * inner + in] * scale;
                 });
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, false, "sum"); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce_axis(a, axis, true, "mean"); }

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (numel(new_shape) != a.size()) {
    throw shape_error("reshape: cannot reshape " + shape_str(a.shape()) + " to " +
                      shape_str(new_shape));
  }
  return make_op(std::move(new_shape), a.values(), {a},
                 [](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw contract_error("concat: no tensors given");
  const Tensor& first = parts.front();
  if (axis >= first.rank()) throw shape_error("concat: axis out of range");
  Shape out_shape = first.shape();
  std::size_t total_extent = first.extent(axis);
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const Tensor& t = parts[i];
    if (t.rank() != first.rank()) throw shape_error("concat: rank mismatch");
    for (std::size_t ax = 0; ax < first.rank(); ++ax) {
      if (ax != axis && t.extent(ax) != first.extent(ax)) {
        throw shape_error("concat: incompatible extents " + shape_str(first.shape()) + " vs " +
                          shape_str(t.shape()));
      }
    }
    total_extent += t.extent(axis);
  }
  out_shape[axis] = total_extent;

  std::size_t outer, extent_unused, inner;
  axis_split(out_shape, axis, outer, extent_unused, inner);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> extents(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) extents[p] = parts[p].extent(axis);

  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].values().data();
    const std::size_t e = extents[p];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < e * inner; ++k)
        out[(o * total_extent + offset) * inner + k] = src[o * e * inner + k];
    offset += e;
  }

  return make_op(out_shape, std::move(out), parts,
                 [outer, inner, total_extent, extents](
                     const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   std::size_t off = 0;
                   for (std::size_t p = 0; p < extents.size(); ++p) {
                     const std::size_t e = extents[p];
                     if (pg[p]) {
                       std::vector<double>& dp = *pg[p];
                       for (std::size_t o = 0; o < outer; ++o)
                         for (std::size_t k = 0; k < e * inner; ++k)
                           dp[o * e * inner + k] += g[(o * total_extent + off) * inner + k];
                     }
                     off += e;
                   }
                 });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
  if (axis >= a.rank()) throw shape_error("slice: axis out of range");
  if (start + len > a.extent(axis)) {
    throw shape_error("slice: range [" + std::to_string(start) + ", " +
                      std::to_string(start + len) + ") exceeds extent " +
                      std::to_string(a.extent(axis)));
  }
  std::size_t outer, extent, inner;
  axis_split(a.shape(), axis, outer, extent, inner);
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  std::vector<double> out(outer * len * inner);
  const double* pa = a.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len * inner; ++k)
      out[o * len * inner + k] = pa[(o * extent + start) * inner + k];
  return make_op(out_shape, std::move(out), {a},
                 [outer, extent, inner, start, len](const std::vector<double>& g,
                                                    const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   std::vector<double>& da = *pg[0];
                   for (std::size_t o = 0; o < outer; ++o)
                     for (std::size_t k = 0; k < len * inner; ++k)
                       da[(o * extent + start) * inner + k] += g[o * len * inner + k];
                 });
}

Tensor permute_rows(const Tensor& a, const std::vector<std::size_t>& perm) {
  if (a.rank() < 1 || perm.size() != a.extent(0)) {
    throw shape_error("permute_rows: permutation length must equal leading extent");
  }
  const std::size_t rows = a.extent(0);
  const std::size_t stride = a.size() / std::max<std::size_t>(rows, 1);
  std::vector<double> out(a.size());
  const double* pa = a.values().data();
  for (std::size_t i = 0; i < rows; ++i) {
    if (perm[i] >= rows) throw contract_error("permute_rows: index out of range");
    std::copy(pa + perm[i] * stride, pa + (perm[i] + 1) * stride, out.begin() + i * stride);
  }
  return make_op(a.shape(), std::move(out), {a},
                 [perm, rows, stride](const std::vector<double>& g,
                                      const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   std::vector<double>& da = *pg[0];
                   for (std::size_t i = 0; i < rows; ++i)
                     for (std::size_t k = 0; k < stride; ++k)
                       da[perm[i] * stride + k] += g[i * stride + k];
                 });
}

Tensor select_columns(const Tensor& a, const std::vector<std::size_t>& idx) {
  if (a.rank() != 2) throw shape_error("select_columns: expected rank-2 tensor");
  const std::size_t n = a.extent(0), c = a.extent(1);
  if (idx.size() != n) throw shape_error("select_columns: index length mismatch");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= c) {
      throw contract_error("select_columns: class index " + std::to_string(idx[i]) +
                           " out of range for " + std::to_string(c) + " columns");
    }
    out[i] = a.values()[i * c + idx[i]];
  }
  return make_op({n}, std::move(out), {a},
                 [idx, c](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i * c + idx[i]] += g[i];
                 });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  if (a.rank() != 2 || s.rank() != 1 || s.extent(0) != a.extent(0)) {
    throw shape_error("scale_rows: expected [N x d] and [N], got " + shape_str(a.shape()) +
                      " and " + shape_str(s.shape()));
  }
  const std::size_t n = a.extent(0), d = a.extent(1);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a.values()[i * d + j] * s.values()[i];
  auto ia = a.impl_ptr();
  auto is = s.impl_ptr();
  return make_op(a.shape(), std::move(out), {a, s},
                 [ia, is, n, d](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& pg) {
                   if (pg[0]) {
                     for (std::size_t i = 0; i < n; ++i)
                       for (std::size_t j = 0; j < d; ++j)
                         (*pg[0])[i * d + j] += g[i * d + j] * is->data[i];
                   }
                   if (pg[1]) {
                     for (std::size_t i = 0; i < n; ++i) {
                       double acc = 0.0;
                       for (std::size_t j = 0; j < d; ++j)
                         acc += g[i * d + j] * ia->data[i * d + j];
                       (*pg[1])[i] += acc;
                     }
                   }
                 });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.rank() != 1 || a.rank() < 1 || a.shape().back() != bias.extent(0)) {
    throw shape_error("add_bias: expected trailing extent " + shape_str(bias.shape()) +
                      ", got " + shape_str(a.shape()));
  }
  const std::size_t d = bias.extent(0);
  const std::size_t rows = a.size() / d;
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = a.values()[r * d + j] + bias.values()[j];
  return make_op(a.shape(), std::move(out), {a, bias},
                 [rows, d](const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& pg) {
                   if (pg[0]) {
                     for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                   }
                   if (pg[1]) {
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) (*pg[1])[j] += g[r * d + j];
                   }
                 });
}

Tensor grad_reverse(const Tensor& a) {
  return make_op(a.shape(), a.values(), {a},
                 [](const std::vector<double>& g, const std::vector<std::vector<double>*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] -= g[i];
                 });
}

// ---- autodiff -------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw contract_error("backward: loss must be a scalar, got shape " +
                         shape_str(loss.shape()));
  }
  using detail::TensorImpl;
  TensorImpl* root = loss.impl();

  // Reachable subgraph, then creation order descending = reverse topological.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    TensorImpl* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& p : node->parents) {
      if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorImpl* a, const TensorImpl* b) { return a->id > b->id; });

  std::unordered_map<TensorImpl*, std::vector<double>> flow;
  flow[root] = {1.0};

  std::vector<std::vector<double>*> parent_grads;
  for (TensorImpl* node : order) {
    auto it = flow.find(node);
    if (it == flow.end()) continue;
    // Rehashing on insert below invalidates iterators but not element
    // references, so hold the flow buffer by reference.
    std::vector<double>& self_flow = it->second;
    if (node->backward_fn) {
      parent_grads.clear();
      parent_grads.reserve(node->parents.size());
      for (const auto& p : node->parents) {
        if (p->requires_grad) {
          auto& buf = flow[p.get()];
          if (buf.empty()) buf.assign(p->data.size(), 0.0);
          parent_grads.push_back(&buf);
        } else {
          parent_grads.push_back(nullptr);
        }
      }
      node->backward_fn(self_flow, parent_grads);
    } else if (node->requires_grad) {
      if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
      for (std::size_t i = 0; i < self_flow.size(); ++i) node->grad[i] += self_flow[i];
    }
  }
}

FdReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol) {
  if (h <= 0.0) throw contract_error("finite_diff_check: h must be positive");
  Tensor leaf = x.detached_copy(true);
  Tensor loss = f(leaf);
  if (loss.size() != 1) throw contract_error("finite_diff_check: f must return a scalar");
  backward(loss);
  const std::vector<double>& g = leaf.grad();

  FdReport rep;
  rep.pass = true;
  NoGradGuard no_grad;
  std::vector<double> probe = x.values();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(Tensor::from_data(x.shape(), probe)).item();
    probe[i] = orig - h;
    const double fm = f(Tensor::from_data(x.shape(), probe)).item();
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = g.empty() ? 0.0 : g[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_index = i;
      rep.analytic_at_worst = analytic;
      rep.numeric_at_worst = numeric;
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace tsd

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "tsd/common.hpp"

namespace tsd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

class Tensor;

namespace detail {

/// Receives the gradient flowing into an op's output and accumulates into
/// the flow buffers of its parents. parent_grads[i] is null when parent i
/// does not need gradient.
using BackwardFn = std::function<void(const std::vector<double>& out_grad,
                                      const std::vector<std::vector<double>*>& parent_grads)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // persistent leaf accumulator; empty until first backward
  bool requires_grad = false;
  std::uint64_t id = 0;  // creation order; doubles as a topological order
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward_fn;  // empty for leaves
};

}  // namespace detail

/// Dense row-major f64 tensor with reverse-mode automatic differentiation.
///
/// Tensors are cheap handles onto shared storage. The autodiff graph is
/// define-by-run: every op allocates a fresh node whose creation id gives
/// the topological order used by backward(). Values are immutable after
/// creation except through the explicit mutation helpers used by the
/// optimizer, which must only touch leaves.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Entries drawn i.i.d. uniform in [lo, hi).
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad = false);
  /// Entries drawn i.i.d. standard normal.
  static Tensor randn(Shape shape, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t extent(std::size_t axis) const { return impl_->shape.at(axis); }
  bool requires_grad() const { return impl_->requires_grad; }

  const std::vector<double>& values() const { return impl_->data; }
  double at(std::initializer_list<std::size_t> idx) const;
  /// Value of a single-element tensor.
  double item() const;

  /// Gradient buffer; empty before the first backward that reaches this leaf.
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad();

  /// In-place update of a leaf's values (optimizer step). Calling this on a
  /// tensor with recorded parents would corrupt saved activations, so it is
  /// rejected.
  void update_data(const std::vector<double>& new_data);

  /// Leaf copy of this tensor's values (fresh storage, no graph edge).
  Tensor detached_copy(bool requires_grad = false) const;

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& impl_ptr() const { return impl_; }

 private:
  friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>, detail::BackwardFn);
  friend Tensor make_leaf(Shape, std::vector<double>, bool);
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// True while gradient recording is enabled on this thread.
bool grad_enabled();

/// Disables graph construction for the lifetime of the guard; forward-only
/// evaluations (finite differences, validation) run without autodiff cost.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Builds an op node: output tensor with the given value, inputs recorded as
/// parents, and a backward function. When gradients are disabled or no parent
/// requires grad, the node degenerates to a constant leaf.
Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               detail::BackwardFn backward_fn);

// ---- linear algebra -------------------------------------------------------

/// Matrix product of rank-2 tensors [m×k]·[k×n] -> [m×n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched matrix product of rank-3 tensors [B×m×k]·[B×k×n] -> [B×m×n].
Tensor bmm(const Tensor& a, const Tensor& b);
/// Swaps the last two axes (rank 2 or 3); materializes, no views.
Tensor transpose(const Tensor& a);

// ---- elementwise ----------------------------------------------------------

// Binary ops require equal shapes; the only broadcast is scalar-with-tensor,
// provided through the double overloads and the single-element-tensor forms.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor sub(const Tensor& a, double s);
Tensor sub(double s, const Tensor& a);
Tensor mul(const Tensor& a, double s);
Tensor divide(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
/// Clamp to [lo, hi]; gradient passes where the input lies inside the range.
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- reductions & reshaping -----------------------------------------------

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor reshape(const Tensor& a, Shape new_shape);
/// Concatenates along `axis`; every other extent must match.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Copies `len` slices starting at `start` along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
/// Reorders rows (axis 0) by `perm`; gradient routes through the inverse.
Tensor permute_rows(const Tensor& a, const std::vector<std::size_t>& perm);
/// out[i] = a[i, idx[i]] for a rank-2 tensor; used by cross-entropy losses.
Tensor select_columns(const Tensor& a, const std::vector<std::size_t>& idx);
/// Scales row i of a [N×d] tensor by s[i].
Tensor scale_rows(const Tensor& a, const Tensor& s);
/// Adds a [d] vector to every row of a [...×d] tensor.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// Identity forward, negated gradient; the adversarial-supervisor hook.
Tensor grad_reverse(const Tensor& a);

// ---- autodiff -------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate
/// additively across calls; interior flow is scratch and not retained.
void backward(const Tensor& loss);

struct FdReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  bool pass = false;
};

/// Central-difference gradient check of f at x. Relative error per
/// coordinate uses denominator max(|analytic|, |numeric|, 1e-6).
FdReport finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol);

}  // namespace tsd

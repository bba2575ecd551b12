// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal N-d tensor with reverse-mode differentiation.
//
// Values are 64-bit floats in row-major order. Image-like tensors use the
// H x W x C layout; token sequences are N x D. An op records a node (its
// inputs plus a backward closure) only when gradients are enabled and at
// least one input requires a gradient, so the recorded nodes form a DAG that
// `backward` walks once in reverse topological order.
//
// Broadcasting is deliberately narrow: scalar-tensor ops and a trailing-axis
// vector (bias-style). Anything else needs an explicit reshape/expand.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xprompt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view of a leaf's buffer. Used by initializers, checkpoint
  /// loading and the optimizer; never valid on a recorded op output.
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  /// Independent leaf holding a copy of the values.
  Tensor detach() const;
  const char* op_name() const;

  /// Identity of the underlying storage; handles copied from one another
  /// share it.
  const void* id() const { return node_.get(); }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient. `loss` must hold exactly one element.
void backward(const Tensor& loss);

namespace ops {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
/// x[..., in] * weight[out, in]^T + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor transpose(const Tensor& a);  // rank 2
Tensor reshape(const Tensor& a, Shape shape);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
/// a[..., n] + v[n]
Tensor add_trailing(const Tensor& a, const Tensor& v);
/// a[..., n] * v[n]
Tensor mul_trailing(const Tensor& a, const Tensor& v);
/// a[..., 1] -> [..., n] by repetition.
Tensor expand_last(const Tensor& a, std::size_t n);

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// Last-axis normalizations
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums the last axis away; a rank-1 input yields shape {1}.
Tensor sum_last(const Tensor& a);
/// Flat-index selection, output shape {indices.size()}.
Tensor gather(const Tensor& a, std::span<const std::size_t> indices);

// Spatial ops over H x W x C
struct Conv2dAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
};
/// weight[kh, kw, cin, cout], bias[cout] (may be undefined).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dAttrs attrs = {});
Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride);
Tensor global_avg_pool(const Tensor& x);  // -> [C]
Tensor global_max_pool(const Tensor& x);  // -> [C]
Tensor channel_avg_pool(const Tensor& x);  // -> [H, W, 1]
Tensor channel_max_pool(const Tensor& x);  // -> [H, W, 1]
Tensor upsample_nearest(const Tensor& x, std::size_t factor);
/// Half-pixel (align_corners = false) bilinear resize by an integer factor.
Tensor upsample_bilinear(const Tensor& x, std::size_t factor);

// Structural
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

/// Scaled dot-product attention over `heads` column groups of q/k/v
/// ([n_q, d], [n_k, d], [n_k, d]); returns [n_q, d] with heads concatenated.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

}  // namespace ops

/// Maximum over input coordinates of |analytic - central| / max(1, |central|)
/// for a scalar-valued function (non-scalar outputs are summed). The input is
/// copied; the caller's tensor is untouched.
double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& input,
                  double eps = 1e-6);

}  // namespace xprompt

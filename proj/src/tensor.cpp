// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "xprompt/errors.hpp"

namespace xprompt {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw ContractError(std::string(op) + ": shape mismatch: " + detail);
}

void check_finite(const char* op, const std::vector<double>& values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
}

// Creates the output node. When recording is active and any input needs a
// gradient, the node keeps its inputs and backward closure.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<NodePtr> inputs, std::function<void(Node&)> backward_fn) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

const NodePtr& node_of(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor input");
  return t.node();
}

bool wants(const NodePtr& n) { return n && n->requires_grad; }

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = xprompt::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ContractError("tensor: zero extent in shape " + shape_str(shape));
  }
  if (xprompt::numel(shape) != values.size()) {
    throw ContractError("tensor: shape " + shape_str(shape) + " does not match " +
                        std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return node_of(*this, "shape")->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ContractError("dim: axis out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return node_of(*this, "numel")->value.size(); }

std::span<const double> Tensor::values() const { return node_of(*this, "values")->value; }

std::span<double> Tensor::mutable_values() {
  const auto& n = node_of(*this, "mutable_values");
  if (n->backward) throw ContractError("mutable_values: tensor is a recorded op output");
  return n->value;
}

double Tensor::item() const {
  const auto& n = node_of(*this, "item");
  if (n->value.size() != 1) throw ContractError("item: tensor is not a scalar: " + shape_str(n->shape));
  return n->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  const auto& n = node_of(*this, "set_requires_grad");
  if (n->backward) throw ContractError("set_requires_grad: only valid on leaves");
  n->requires_grad = flag;
  if (!flag) n->grad.clear();
}

bool Tensor::is_leaf() const { return !node_of(*this, "is_leaf")->backward; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_of(*this, "grad")->grad; }

void Tensor::zero_grad() {
  auto& g = node_of(*this, "zero_grad")->grad;
  std::fill(g.begin(), g.end(), 0.0);
}

Tensor Tensor::detach() const {
  const auto& n = node_of(*this, "detach");
  return from(n->shape, n->value);
}

const char* Tensor::op_name() const { return node_of(*this, "op_name")->op; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
  const auto& root = node_of(loss, "backward");
  if (root->value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_str(root->shape));
  }
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order; each node once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) {
      n->backward(*n);
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

namespace ops {

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a, "matmul");
  const auto& nb = node_of(b, "matmul");
  if (na->shape.size() != 2 || nb->shape.size() != 2 || na->shape[1] != nb->shape[0]) {
    shape_error("matmul", shape_str(na->shape) + " x " + shape_str(nb->shape));
  }
  const std::size_t m = na->shape[0], k = na->shape[1], n = nb->shape[1];
  std::vector<double> out(m * n, 0.0);
  const double* A = na->value.data();
  const double* B = nb->value.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return make_result("matmul", {m, n}, std::move(out), {na, nb}, [m, k, n](Node& self) {
    const auto& ia = self.inputs[0];
    const auto& ib = self.inputs[1];
    const double* G = self.grad.data();
    if (wants(ia)) {
      auto& ga = ia->grad_buffer();
      const double* B = ib->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (wants(ib)) {
      auto& gb = ib->grad_buffer();
      const double* A = ia->value.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

namespace {

// out[rows, n] = x[rows, k] * w[n, k]^T (+ bias[n])
// Outputs are computed in 2 x 4 register tiles; each entry still sums over
// p in order, so results match the plain triple loop bit for bit.
std::vector<double> rows_times_wt(const double* X, const double* W, const double* bias, std::size_t rows,
                                  std::size_t k, std::size_t n) {
  std::vector<double> out(rows * n);
  auto single = [&](std::size_t i, std::size_t j) {
    const double* x = X + i * k;
    const double* w = W + j * k;
    double acc = bias ? bias[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += x[p] * w[p];
    out[i * n + j] = acc;
  };
  std::size_t i = 0;
  for (; i + 2 <= rows; i += 2) {
    const double* x0 = X + i * k;
    const double* x1 = x0 + k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* w0 = W + j * k;
      const double* w1 = w0 + k;
      const double* w2 = w1 + k;
      const double* w3 = w2 + k;
      double a00 = bias ? bias[j] : 0.0, a01 = bias ? bias[j + 1] : 0.0;
      double a02 = bias ? bias[j + 2] : 0.0, a03 = bias ? bias[j + 3] : 0.0;
      double a10 = a00, a11 = a01, a12 = a02, a13 = a03;
      for (std::size_t p = 0; p < k; ++p) {
        const double u = x0[p], v = x1[p];
        a00 += u * w0[p];
        a01 += u * w1[p];
        a02 += u * w2[p];
        a03 += u * w3[p];
        a10 += v * w0[p];
        a11 += v * w1[p];
        a12 += v * w2[p];
        a13 += v * w3[p];
      }
      double* o0 = out.data() + i * n + j;
      double* o1 = o0 + n;
      o0[0] = a00, o0[1] = a01, o0[2] = a02, o0[3] = a03;
      o1[0] = a10, o1[1] = a11, o1[2] = a12, o1[3] = a13;
    }
    for (; j < n; ++j) {
      single(i, j);
      single(i + 1, j);
    }
  }
  for (; i < rows; ++i)
    for (std::size_t j = 0; j < n; ++j) single(i, j);
  return out;
}

// Shared backward for x * w^T (+ b). Four rows of the reduction are folded
// into each pass over a destination row.
void rows_times_wt_backward(Node& self, std::size_t rows, std::size_t k, std::size_t n) {
  const auto& ix = self.inputs[0];
  const auto& iw = self.inputs[1];
  const double* G = self.grad.data();
  if (wants(ix)) {
    auto& gx = ix->grad_buffer();
    const double* W = iw->value.data();
    for (std::size_t i = 0; i < rows; ++i) {
      double* gxr = gx.data() + i * k;
      const double* g = G + i * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const double g0 = g[j], g1 = g[j + 1], g2 = g[j + 2], g3 = g[j + 3];
        const double* w0 = W + j * k;
        const double* w1 = w0 + k;
        const double* w2 = w1 + k;
        const double* w3 = w2 + k;
        for (std::size_t p = 0; p < k; ++p) gxr[p] += g0 * w0[p] + g1 * w1[p] + g2 * w2[p] + g3 * w3[p];
      }
      for (; j < n; ++j) {
        const double gj = g[j];
        const double* w = W + j * k;
        for (std::size_t p = 0; p < k; ++p) gxr[p] += gj * w[p];
      }
    }
  }
  if (wants(iw)) {
    auto& gw = iw->grad_buffer();
    const double* X = ix->value.data();
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4) {
      const double* x0 = X + i * k;
      const double* x1 = x0 + k;
      const double* x2 = x1 + k;
      const double* x3 = x2 + k;
      for (std::size_t j = 0; j < n; ++j) {
        const double g0 = G[i * n + j], g1 = G[(i + 1) * n + j];
        const double g2 = G[(i + 2) * n + j], g3 = G[(i + 3) * n + j];
        double* gwr = gw.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) gwr[p] += g0 * x0[p] + g1 * x1[p] + g2 * x2[p] + g3 * x3[p];
      }
    }
    for (; i < rows; ++i) {
      const double* x = X + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double g = G[i * n + j];
        double* gwr = gw.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) gwr[p] += g * x[p];
      }
    }
  }
  if (self.inputs.size() > 2 && wants(self.inputs[2])) {
    auto& gb = self.inputs[2]->grad_buffer();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) gb[j] += G[i * n + j];
  }
}

}  // namespace

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto& na = node_of(a, "matmul_nt");
  const auto& nb = node_of(b, "matmul_nt");
  if (na->shape.size() != 2 || nb->shape.size() != 2 || na->shape[1] != nb->shape[1]) {
    shape_error("matmul_nt", shape_str(na->shape) + " x " + shape_str(nb->shape) + "^T");
  }
  const std::size_t m = na->shape[0], k = na->shape[1], n = nb->shape[0];
  auto out = rows_times_wt(na->value.data(), nb->value.data(), nullptr, m, k, n);
  return make_result("matmul_nt", {m, n}, std::move(out), {na, nb},
                     [m, k, n](Node& self) { rows_times_wt_backward(self, m, k, n); });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const auto& nx = node_of(x, "linear");
  const auto& nw = node_of(weight, "linear");
  if (nw->shape.size() != 2 || nx->shape.empty() || nx->shape.back() != nw->shape[1]) {
    shape_error("linear", "input " + shape_str(nx->shape) + " vs weight " + shape_str(nw->shape));
  }
  const std::size_t k = nw->shape[1], n = nw->shape[0];
  const std::size_t rows = nx->value.size() / k;
  NodePtr nb;
  if (bias.defined()) {
    nb = bias.node();
    if (nb->shape.size() != 1 || nb->shape[0] != n) {
      shape_error("linear", "bias " + shape_str(nb->shape) + " vs " + std::to_string(n) + " outputs");
    }
  }
  auto out = rows_times_wt(nx->value.data(), nw->value.data(), nb ? nb->value.data() : nullptr, rows, k, n);
  Shape shape = nx->shape;
  shape.back() = n;
  std::vector<NodePtr> inputs{nx, nw};
  if (nb) inputs.push_back(nb);
  return make_result("linear", std::move(shape), std::move(out), std::move(inputs),
                     [rows, k, n](Node& self) { rows_times_wt_backward(self, rows, k, n); });
}

Tensor transpose(const Tensor& a) {
  const auto& na = node_of(a, "transpose");
  if (na->shape.size() != 2) shape_error("transpose", "rank-2 input required, got " + shape_str(na->shape));
  const std::size_t m = na->shape[0], n = na->shape[1];
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = na->value[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {na}, [m, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  const auto& na = node_of(a, "reshape");
  if (numel(shape) != na->value.size()) {
    shape_error("reshape", shape_str(na->shape) + " -> " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), na->value, {na}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

void require_same(const char* op, const NodePtr& a, const NodePtr& b) {
  if (a->shape != b->shape) shape_error(op, shape_str(a->shape) + " vs " + shape_str(b->shape));
}

template <typename Fwd, typename Da, typename Db>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  const auto& na = node_of(a, op);
  const auto& nb = node_of(b, op);
  require_same(op, na, nb);
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(na->value[i], nb->value[i]);
  return make_result(op, na->shape, std::move(out), {na, nb}, [da, db](Node& self) {
    const auto& ia = self.inputs[0];
    const auto& ib = self.inputs[1];
    if (wants(ia)) {
      auto& g = ia->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da(ia->value[i], ib->value[i]);
    }
    if (wants(ib)) {
      auto& g = ib->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db(ia->value[i], ib->value[i]);
    }
  });
}

// Unary op whose derivative is expressed through input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& na = node_of(a, op);
  std::vector<double> out(na->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(na->value[i]);
  return make_result(op, na->shape, std::move(out), {na}, [deriv](Node& self) {
    const auto& ia = self.inputs[0];
    auto& g = ia->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(ia->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      "scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_trailing(const Tensor& a, const Tensor& v) {
  const auto& na = node_of(a, "add_trailing");
  const auto& nv = node_of(v, "add_trailing");
  const std::size_t n = last_dim(na->shape);
  if (nv->shape.size() != 1 || nv->shape[0] != n) {
    shape_error("add_trailing", shape_str(na->shape) + " + " + shape_str(nv->shape));
  }
  std::vector<double> out(na->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += nv->value[i % n];
  return make_result("add_trailing", na->shape, std::move(out), {na, nv}, [n](Node& self) {
    if (wants(self.inputs[0])) {
      auto& g = self.inputs[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self.inputs[1])) {
      auto& g = self.inputs[1]->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

Tensor mul_trailing(const Tensor& a, const Tensor& v) {
  const auto& na = node_of(a, "mul_trailing");
  const auto& nv = node_of(v, "mul_trailing");
  const std::size_t n = last_dim(na->shape);
  if (nv->shape.size() != 1 || nv->shape[0] != n) {
    shape_error("mul_trailing", shape_str(na->shape) + " * " + shape_str(nv->shape));
  }
  std::vector<double> out(na->value);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= nv->value[i % n];
  return make_result("mul_trailing", na->shape, std::move(out), {na, nv}, [n](Node& self) {
    const auto& ia = self.inputs[0];
    const auto& iv = self.inputs[1];
    if (wants(ia)) {
      auto& g = ia->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * iv->value[i % n];
    }
    if (wants(iv)) {
      auto& g = iv->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i] * ia->value[i];
    }
  });
}

Tensor expand_last(const Tensor& a, std::size_t n) {
  const auto& na = node_of(a, "expand_last");
  if (na->shape.empty() || na->shape.back() != 1 || n == 0) {
    shape_error("expand_last", shape_str(na->shape) + " -> last axis " + std::to_string(n));
  }
  Shape shape = na->shape;
  shape.back() = n;
  std::vector<double> out(na->value.size() * n);
  for (std::size_t i = 0; i < na->value.size(); ++i)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(i * n), n, na->value[i]);
  return make_result("expand_last", std::move(shape), std::move(out), {na}, [n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += self.grad[i * n + j];
      g[i] += acc;
    }
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + x * pdf;
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// ---------------------------------------------------------------------------
// Last-axis normalizations

Tensor softmax(const Tensor& a) {
  const auto& na = node_of(a, "softmax");
  const std::size_t n = last_dim(na->shape);
  const std::size_t rows = na->value.size() / n;
  std::vector<double> out(na->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = na->value.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  return make_result("softmax", na->shape, std::move(out), {na}, [rows, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& a) {
  const auto& na = node_of(a, "log_softmax");
  const std::size_t n = last_dim(na->shape);
  const std::size_t rows = na->value.size() / n;
  std::vector<double> out(na->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = na->value.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = x[j] - lse;
  }
  return make_result("log_softmax", na->shape, std::move(out), {na}, [rows, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += dy[j];
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += dy[j] - std::exp(y[j]) * total;
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto& nx = node_of(x, "layer_norm");
  const auto& ng = node_of(gamma, "layer_norm");
  const auto& nb = node_of(beta, "layer_norm");
  const std::size_t n = last_dim(nx->shape);
  if (ng->shape != Shape{n} || nb->shape != Shape{n}) {
    shape_error("layer_norm", "input " + shape_str(nx->shape) + " gamma " + shape_str(ng->shape) + " beta " +
                                  shape_str(nb->shape));
  }
  const std::size_t rows = nx->value.size() / n;
  std::vector<double> out(nx->value.size());
  auto xhat = std::make_shared<std::vector<double>>(nx->value.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = nx->value.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += v[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (v[j] - mu) * (v[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (v[j] - mu) * is;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * ng->value[j] + nb->value[j];
    }
  }
  return make_result("layer_norm", nx->shape, std::move(out), {nx, ng, nb}, [rows, n, xhat, inv_std](Node& self) {
    const auto& ix = self.inputs[0];
    const auto& ig = self.inputs[1];
    const auto& ib = self.inputs[2];
    const double* dy = self.grad.data();
    if (wants(ig)) {
      auto& g = ig->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += dy[i] * (*xhat)[i];
    }
    if (wants(ib)) {
      auto& g = ib->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += dy[i];
    }
    if (wants(ix)) {
      auto& g = ix->grad_buffer();
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_d = 0.0, mean_dh = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = dy[r * n + j] * ig->value[j];
          mean_d += d;
          mean_dh += d * (*xhat)[r * n + j];
        }
        mean_d *= inv_n;
        mean_dh *= inv_n;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = dy[r * n + j] * ig->value[j];
          g[r * n + j] += (*inv_std)[r] * (d - mean_d - (*xhat)[r * n + j] * mean_dh);
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
  const auto& na = node_of(a, "sum");
  double total = 0.0;
  for (double v : na->value) total += v;
  return make_result("sum", {1}, {total}, {na}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(node_of(a, "mean")->value.size())); }

Tensor sum_last(const Tensor& a) {
  const auto& na = node_of(a, "sum_last");
  const std::size_t n = last_dim(na->shape);
  const std::size_t rows = na->value.size() / n;
  Shape shape(na->shape.begin(), na->shape.end() - 1);
  if (shape.empty()) shape = {1};
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < n; ++j) out[r] += na->value[r * n + j];
  return make_result("sum_last", std::move(shape), std::move(out), {na}, [rows, n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r];
  });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> indices) {
  const auto& na = node_of(a, "gather");
  if (indices.empty()) throw ContractError("gather: empty index list");
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= na->value.size()) throw ContractError("gather: index out of range");
    out[i] = na->value[indices[i]];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const std::size_t n = idx.size();
  return make_result("gather", {n}, std::move(out), {na}, [idx = std::move(idx)](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Spatial

namespace {

struct Hwc {
  std::size_t h, w, c;
};

Hwc require_hwc(const char* op, const NodePtr& n) {
  if (n->shape.size() != 3) shape_error(op, "expected H x W x C, got " + shape_str(n->shape));
  return {n->shape[0], n->shape[1], n->shape[2]};
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dAttrs attrs) {
  const auto& nx = node_of(x, "conv2d");
  const auto& nw = node_of(weight, "conv2d");
  const auto in = require_hwc("conv2d", nx);
  if (nw->shape.size() != 4 || nw->shape[2] != in.c) {
    shape_error("conv2d", "input " + shape_str(nx->shape) + " vs weight " + shape_str(nw->shape));
  }
  const std::size_t kh = nw->shape[0], kw = nw->shape[1], cout = nw->shape[3];
  const std::size_t stride = attrs.stride, pad = attrs.padding;
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  if (in.h + 2 * pad < kh || in.w + 2 * pad < kw) {
    shape_error("conv2d", "kernel " + shape_str(nw->shape) + " exceeds padded input " + shape_str(nx->shape));
  }
  NodePtr nb;
  if (bias.defined()) {
    nb = bias.node();
    if (nb->shape != Shape{cout}) shape_error("conv2d", "bias " + shape_str(nb->shape));
  }
  const std::size_t oh = (in.h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (in.w + 2 * pad - kw) / stride + 1;
  const std::size_t cin = in.c;
  std::vector<double> out(oh * ow * cout, 0.0);
  const double* X = nx->value.data();
  const double* W = nw->value.data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* o = out.data() + (oy * ow + ox) * cout;
      if (nb) std::copy(nb->value.begin(), nb->value.end(), o);
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix =
              static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
          const double* xp = X + (static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)) * cin;
          const double* wp = W + (ky * kw + kx) * cin * cout;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            const double xv = xp[ci];
            if (xv == 0.0) continue;
            const double* wr = wp + ci * cout;
            for (std::size_t co = 0; co < cout; ++co) o[co] += xv * wr[co];
          }
        }
      }
    }
  }
  std::vector<NodePtr> inputs{nx, nw};
  if (nb) inputs.push_back(nb);
  return make_result(
      "conv2d", {oh, ow, cout}, std::move(out), std::move(inputs),
      [in, kh, kw, cout, stride, pad, oh, ow](Node& self) {
        const auto& ix_node = self.inputs[0];
        const auto& iw_node = self.inputs[1];
        const bool gx_on = wants(ix_node), gw_on = wants(iw_node);
        double* GX = gx_on ? ix_node->grad_buffer().data() : nullptr;
        double* GW = gw_on ? iw_node->grad_buffer().data() : nullptr;
        const double* X = ix_node->value.data();
        const double* W = iw_node->value.data();
        const std::size_t cin = in.c;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* g = self.grad.data() + (oy * ow + ox) * cout;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const std::ptrdiff_t iy =
                  static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.h)) continue;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::ptrdiff_t ix =
                    static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.w)) continue;
                const std::size_t xoff = (static_cast<std::size_t>(iy) * in.w + static_cast<std::size_t>(ix)) * cin;
                const std::size_t woff = (ky * kw + kx) * cin * cout;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  const double* wr = W + woff + ci * cout;
                  if (GX) {
                    double acc = 0.0;
                    for (std::size_t co = 0; co < cout; ++co) acc += g[co] * wr[co];
                    GX[xoff + ci] += acc;
                  }
                  if (GW) {
                    const double xv = X[xoff + ci];
                    if (xv == 0.0) continue;
                    double* gwr = GW + woff + ci * cout;
                    for (std::size_t co = 0; co < cout; ++co) gwr[co] += xv * g[co];
                  }
                }
              }
            }
          }
        }
        if (self.inputs.size() > 2 && wants(self.inputs[2])) {
          auto& gb = self.inputs[2]->grad_buffer();
          for (std::size_t p = 0; p < oh * ow; ++p)
            for (std::size_t co = 0; co < cout; ++co) gb[co] += self.grad[p * cout + co];
        }
      });
}

namespace {

Tensor window_pool(const char* op, const Tensor& x, std::size_t kernel, std::size_t stride, bool use_max) {
  const auto& nx = node_of(x, op);
  const auto in = require_hwc(op, nx);
  if (kernel == 0 || stride == 0 || kernel > in.h || kernel > in.w) {
    shape_error(op, "window " + std::to_string(kernel) + " over " + shape_str(nx->shape));
  }
  const std::size_t oh = (in.h - kernel) / stride + 1, ow = (in.w - kernel) / stride + 1;
  std::vector<double> out(oh * ow * in.c);
  std::vector<std::size_t> argmax(use_max ? out.size() : 0);
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t c = 0; c < in.c; ++c) {
        const std::size_t o = (oy * ow + ox) * in.c + c;
        double acc = use_max ? -std::numeric_limits<double>::infinity() : 0.0;
        std::size_t best = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t i = ((oy * stride + ky) * in.w + ox * stride + kx) * in.c + c;
            const double v = nx->value[i];
            if (use_max) {
              if (v > acc) {
                acc = v;
                best = i;
              }
            } else {
              acc += v;
            }
          }
        out[o] = use_max ? acc : acc * inv;
        if (use_max) argmax[o] = best;
      }
  return make_result(op, {oh, ow, in.c}, std::move(out), {nx},
                     [in, kernel, stride, oh, ow, inv, use_max, argmax = std::move(argmax)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       if (use_max) {
                         for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += self.grad[o];
                         return;
                       }
                       for (std::size_t oy = 0; oy < oh; ++oy)
                         for (std::size_t ox = 0; ox < ow; ++ox)
                           for (std::size_t c = 0; c < in.c; ++c) {
                             const double d = self.grad[(oy * ow + ox) * in.c + c] * inv;
                             for (std::size_t ky = 0; ky < kernel; ++ky)
                               for (std::size_t kx = 0; kx < kernel; ++kx)
                                 g[((oy * stride + ky) * in.w + ox * stride + kx) * in.c + c] += d;
                           }
                     });
}

// Reduces one axis group of an H x W x C tensor. over_channels: [H,W,1];
// otherwise over H and W: [C].
Tensor axis_pool(const char* op, const Tensor& x, bool over_channels, bool use_max) {
  const auto& nx = node_of(x, op);
  const auto in = require_hwc(op, nx);
  const std::size_t pixels = in.h * in.w;
  const std::size_t groups = over_channels ? pixels : in.c;
  const std::size_t members = over_channels ? in.c : pixels;
  auto index = [in, over_channels](std::size_t group, std::size_t member) {
    return over_channels ? group * in.c + member : member * in.c + group;
  };
  std::vector<double> out(groups);
  std::vector<std::size_t> argmax(use_max ? groups : 0);
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    double acc = use_max ? -std::numeric_limits<double>::infinity() : 0.0;
    for (std::size_t m = 0; m < members; ++m) {
      const std::size_t i = index(gidx, m);
      const double v = nx->value[i];
      if (use_max) {
        if (v > acc) {
          acc = v;
          argmax[gidx] = i;
        }
      } else {
        acc += v;
      }
    }
    out[gidx] = use_max ? acc : acc / static_cast<double>(members);
  }
  Shape shape = over_channels ? Shape{in.h, in.w, 1} : Shape{in.c};
  return make_result(op, std::move(shape), std::move(out), {nx},
                     [groups, members, index, use_max, argmax = std::move(argmax)](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       if (use_max) {
                         for (std::size_t gidx = 0; gidx < groups; ++gidx) g[argmax[gidx]] += self.grad[gidx];
                         return;
                       }
                       const double inv = 1.0 / static_cast<double>(members);
                       for (std::size_t gidx = 0; gidx < groups; ++gidx)
                         for (std::size_t m = 0; m < members; ++m) g[index(gidx, m)] += self.grad[gidx] * inv;
                     });
}

}  // namespace

Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  return window_pool("avg_pool2d", x, kernel, stride, false);
}
Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride) {
  return window_pool("max_pool2d", x, kernel, stride, true);
}
Tensor global_avg_pool(const Tensor& x) { return axis_pool("global_avg_pool", x, false, false); }
Tensor global_max_pool(const Tensor& x) { return axis_pool("global_max_pool", x, false, true); }
Tensor channel_avg_pool(const Tensor& x) { return axis_pool("channel_avg_pool", x, true, false); }
Tensor channel_max_pool(const Tensor& x) { return axis_pool("channel_max_pool", x, true, true); }

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  const auto& nx = node_of(x, "upsample_nearest");
  const auto in = require_hwc("upsample_nearest", nx);
  if (factor == 0) throw ContractError("upsample_nearest: factor must be positive");
  const std::size_t oh = in.h * factor, ow = in.w * factor;
  std::vector<double> out(oh * ow * in.c);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx)
      for (std::size_t c = 0; c < in.c; ++c)
        out[(y * ow + xx) * in.c + c] = nx->value[((y / factor) * in.w + xx / factor) * in.c + c];
  return make_result("upsample_nearest", {oh, ow, in.c}, std::move(out), {nx}, [in, factor, oh, ow](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx)
        for (std::size_t c = 0; c < in.c; ++c)
          g[((y / factor) * in.w + xx / factor) * in.c + c] += self.grad[(y * ow + xx) * in.c + c];
  });
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Half-pixel source coordinates, clamped at the borders.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t factor) {
  std::vector<Tap> taps(in * factor);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t factor) {
  const auto& nx = node_of(x, "upsample_bilinear");
  const auto in = require_hwc("upsample_bilinear", nx);
  if (factor == 0) throw ContractError("upsample_bilinear: factor must be positive");
  const auto ty = bilinear_taps(in.h, factor);
  const auto tx = bilinear_taps(in.w, factor);
  const std::size_t oh = ty.size(), ow = tx.size(), c = in.c;
  std::vector<double> out(oh * ow * c);
  const double* X = nx->value.data();
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx) {
      const auto& a = ty[y];
      const auto& b = tx[xx];
      const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
      const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
      const double* p00 = X + (a.lo * in.w + b.lo) * c;
      const double* p01 = X + (a.lo * in.w + b.hi) * c;
      const double* p10 = X + (a.hi * in.w + b.lo) * c;
      const double* p11 = X + (a.hi * in.w + b.hi) * c;
      double* o = out.data() + (y * ow + xx) * c;
      for (std::size_t k = 0; k < c; ++k) o[k] = w00 * p00[k] + w01 * p01[k] + w10 * p10[k] + w11 * p11[k];
    }
  return make_result("upsample_bilinear", {oh, ow, c}, std::move(out), {nx}, [in, ty, tx](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const std::size_t c = in.c, ow = tx.size();
    for (std::size_t y = 0; y < ty.size(); ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const auto& a = ty[y];
        const auto& b = tx[xx];
        const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
        const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
        const double* d = self.grad.data() + (y * ow + xx) * c;
        for (std::size_t k = 0; k < c; ++k) {
          g[(a.lo * in.w + b.lo) * c + k] += w00 * d[k];
          g[(a.lo * in.w + b.hi) * c + k] += w01 * d[k];
          g[(a.hi * in.w + b.lo) * c + k] += w10 * d[k];
          g[(a.hi * in.w + b.hi) * c + k] += w11 * d[k];
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  std::vector<NodePtr> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(node_of(p, "concat"));
  const Shape& first = nodes[0]->shape;
  if (axis >= first.size()) shape_error("concat", "axis " + std::to_string(axis) + " for " + shape_str(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& n : nodes) {
    if (n->shape.size() != first.size()) shape_error("concat", shape_str(first) + " vs " + shape_str(n->shape));
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && n->shape[d] != first[d]) shape_error("concat", shape_str(first) + " vs " + shape_str(n->shape));
    }
    shape[axis] += n->shape[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_row = shape[axis] * inner;
  std::vector<double> out(outer * out_row);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& n : nodes) {
    offsets.push_back(offset);
    const std::size_t row = n->shape[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(n->value.begin() + static_cast<std::ptrdiff_t>(o * row), row,
                  out.begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    offset += row;
  }
  return make_result("concat", std::move(shape), std::move(out), nodes,
                     [outer, out_row, inner, axis, offsets](Node& self) {
                       for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                         const auto& n = self.inputs[p];
                         if (!wants(n)) continue;
                         auto& g = n->grad_buffer();
                         const std::size_t row = n->shape[axis] * inner;
                         for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t i = 0; i < row; ++i) g[o * row + i] += self.grad[o * out_row + offsets[p] + i];
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& na = node_of(a, "slice");
  if (axis >= na->shape.size() || length == 0 || start + length > na->shape[axis]) {
    shape_error("slice", shape_str(na->shape) + " axis " + std::to_string(axis) + " [" + std::to_string(start) +
                             ", +" + std::to_string(length) + ")");
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= na->shape[d];
  for (std::size_t d = axis + 1; d < na->shape.size(); ++d) inner *= na->shape[d];
  const std::size_t in_row = na->shape[axis] * inner, out_row = length * inner, skip = start * inner;
  std::vector<double> out(outer * out_row);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(na->value.begin() + static_cast<std::ptrdiff_t>(o * in_row + skip), out_row,
                out.begin() + static_cast<std::ptrdiff_t>(o * out_row));
  Shape shape = na->shape;
  shape[axis] = length;
  return make_result("slice", std::move(shape), std::move(out), {na}, [outer, in_row, out_row, skip](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < out_row; ++i) g[o * in_row + skip + i] += self.grad[o * out_row + i];
  });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  const std::size_t d = q.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw ContractError("multi_head_attention: width " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
  }
  if (k.dim(1) != d || v.dim(1) != d || k.dim(0) != v.dim(0)) {
    shape_error("multi_head_attention", shape_str(q.shape()) + " " + shape_str(k.shape()) + " " + shape_str(v.shape()));
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  if (heads == 1) return matmul(softmax(scale(matmul_nt(q, k), inv_sqrt)), v);
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice(q, 1, h * dh, dh);
    const Tensor kh = slice(k, 1, h * dh, dh);
    const Tensor vh = slice(v, 1, h * dh, dh);
    outputs.push_back(matmul(softmax(scale(matmul_nt(qh, kh), inv_sqrt)), vh));
  }
  return concat(outputs, 1);
}

}  // namespace ops

double grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& input, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
  Tensor x = Tensor::from(input.shape(), std::vector<double>(input.values().begin(), input.values().end()), true);
  auto scalar_of = [&fn](const Tensor& t) {
    Tensor out = fn(t);
    return out.numel() == 1 ? out : ops::sum(out);
  };
  const Tensor loss = scalar_of(x);
  backward(loss);
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  NoGradGuard no_grad;
  double worst = 0.0;
  auto vals = x.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double saved = vals[i];
    vals[i] = saved + eps;
    const double plus = scalar_of(x).item();
    vals[i] = saved - eps;
    const double minus = scalar_of(x).item();
    vals[i] = saved;
    const double central = (plus - minus) / (2.0 * eps);
    const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
    if (std::isnan(err)) return err;
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace xprompt

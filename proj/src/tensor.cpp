#include "ccldc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "ccldc/errors.hpp"
#include "ccldc/kernels.hpp"

namespace ccldc {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool consumed = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static const NodePtr& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

const NodePtr& node_of(const Tensor& t) {
  const NodePtr& n = TensorAccess::node(t);
  if (!n) throw StateError("operation on an undefined tensor");
  return n;
}

void accumulate(Node& target, std::span<const double> g) {
  if (!target.requires_grad) return;
  if (!target.has_grad) {
    target.grad.assign(g.begin(), g.end());
    target.has_grad = true;
    return;
  }
  kernels::add(target.grad, g, target.grad);
}

/// Builds the result node; records the gradient rule only when some input
/// needs a gradient and recording is enabled.
Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                   std::vector<NodePtr> inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = std::move(op);
  const bool needs_graph =
      g_grad_enabled && std::any_of(inputs.begin(), inputs.end(),
                                    [](const NodePtr& in) { return in->requires_grad; });
  if (needs_graph) {
    for (const NodePtr& in : inputs) {
      if (in->consumed && in->requires_grad) {
        throw StateError("operation '" + node->op + "' uses a node from a consumed graph");
      }
    }
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return TensorAccess::wrap(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_temperature(double temperature, const char* op) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError(std::string(op) + ": temperature must be positive and finite, got " +
                         std::to_string(temperature));
  }
}

/// Row-wise log-softmax of z / temperature into out. Returns nothing else; the
/// scaled logits are formed by division so temperature 1 is an exact no-op.
void log_softmax_rows(std::span<const double> z, std::size_t rows, std::size_t cols,
                      double temperature, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* zr = z.data() + r * cols;
    double* orow = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) orow[c] = zr[c] / temperature;
    const double mx = *std::max_element(orow, orow + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      orow[c] = orow[c] - mx;
      s += std::exp(orow[c]);
    }
    const double ls = std::log(s);
    for (std::size_t c = 0; c < cols; ++c) orow[c] = orow[c] - ls;
  }
}

}  // namespace

// ---- shape helpers ---------------------------------------------------------

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- grad mode -------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  const std::size_t n = numel(shape);
  return from_values(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (values.size() != numel(shape)) {
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_of(*this)->shape; }
std::size_t Tensor::size() const { return node_of(*this)->value.size(); }

std::size_t Tensor::rows() const {
  require_matrix(*this, "rows");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require_matrix(*this, "cols");
  return shape()[1];
}

std::span<const double> Tensor::values() const { return node_of(*this)->value; }

std::span<double> Tensor::mutable_values() {
  const NodePtr& n = node_of(*this);
  if (!n->inputs.empty()) {
    throw StateError("mutable_values: tensor '" + n->op + "' is part of a live graph");
  }
  return n->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return values()[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require_matrix(*this, "at");
  if (row >= shape()[0] || col >= shape()[1]) throw DimensionError("at: index out of range");
  return values()[row * shape()[1] + col];
}

bool Tensor::requires_grad() const { return node_of(*this)->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  const NodePtr& n = node_of(*this);
  if (!n->inputs.empty()) throw StateError("set_requires_grad: only leaves can be marked");
  n->requires_grad = flag;
}

bool Tensor::has_grad() const { return node_of(*this)->has_grad; }

std::span<const double> Tensor::grad() const {
  const NodePtr& n = node_of(*this);
  if (!n->has_grad) throw StateError("grad: no gradient has been accumulated");
  return n->grad;
}

std::vector<double> Tensor::grad_or_zero() const {
  const NodePtr& n = node_of(*this);
  if (!n->has_grad) return std::vector<double>(n->value.size(), 0.0);
  return n->grad;
}

void Tensor::zero_grad() {
  const NodePtr& n = node_of(*this);
  n->grad.clear();
  n->has_grad = false;
}

std::string_view Tensor::op_name() const { return node_of(*this)->op; }

Tensor Tensor::detach() const {
  const NodePtr& n = node_of(*this);
  auto copy = std::make_shared<Node>();
  copy->shape = n->shape;
  copy->value = n->value;
  copy->op = "detach";
  return Tensor(std::move(copy));
}

void Tensor::backward() const {
  const NodePtr& root = node_of(*this);
  if (root->value.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_str(root->shape));
  }
  const bool is_leaf = root->op == "leaf";
  if (!is_leaf && root->consumed) {
    throw StateError("backward: graph already consumed by a previous backward pass");
  }
  if (is_leaf) {
    if (root->requires_grad) accumulate(*root, std::vector<double>{1.0});
    return;
  }
  if (!root->requires_grad || root->inputs.empty()) {
    root->consumed = true;
    return;
  }

  // Iterative post-order DFS over recorded (non-leaf) nodes.
  // Owning pointers: clearing a node's inputs below must not free a child
  // that is still waiting in the walk.
  std::vector<NodePtr> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<NodePtr, std::size_t>> stack{{root, 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodePtr child = node->inputs[next++];
      if (child->consumed && child->requires_grad) {
        throw StateError("backward: graph already consumed by a previous backward pass");
      }
      if (child->inputs.empty() || visited.count(child.get())) continue;
      visited.insert(child.get());
      stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, 1.0);
  root->has_grad = true;
  // Post-order lists inputs before consumers; walk it backwards.
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = it->get();
    if (node->has_grad && node->backward) node->backward(*node);
    node->backward = nullptr;
    node->inputs.clear();
    node->consumed = true;
    if (node != root.get()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
      node->has_grad = false;
    }
  }
}

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n);
  kernels::gemm(m, n, k, a.values(), b.values(), out);
  return make_result("matmul", {m, n}, std::move(out), {node_of(a), node_of(b)},
                     [m, n, k](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       if (na.requires_grad) {
                         std::vector<double> bt(k * n), ga(m * k);
                         kernels::transpose(k, n, nb.value, bt);
                         kernels::gemm(m, k, n, self.grad, bt, ga);
                         accumulate(na, ga);
                       }
                       if (nb.requires_grad) {
                         std::vector<double> at(k * m), gb(k * n);
                         kernels::transpose(m, k, na.value, at);
                         kernels::gemm(k, n, m, at, self.grad, gb);
                         accumulate(nb, gb);
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  kernels::add(a.values(), b.values(), out);
  return make_result("add", a.shape(), std::move(out), {node_of(a), node_of(b)}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  kernels::sub(a.values(), b.values(), out);
  return make_result("sub", a.shape(), std::move(out), {node_of(a), node_of(b)}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) {
      std::vector<double> g(self.grad.size());
      kernels::scale(-1.0, self.grad, g);
      accumulate(*self.inputs[1], g);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  kernels::mul(a.values(), b.values(), out);
  return make_result("mul", a.shape(), std::move(out), {node_of(a), node_of(b)}, [](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    std::vector<double> g(self.grad.size());
    if (na.requires_grad) {
      kernels::mul(self.grad, nb.value, g);
      accumulate(na, g);
    }
    if (nb.requires_grad) {
      kernels::mul(self.grad, na.value, g);
      accumulate(nb, g);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.size());
  kernels::scale(factor, a.values(), out);
  return make_result("scale", a.shape(), std::move(out), {node_of(a)}, [factor](Node& self) {
    std::vector<double> g(self.grad.size());
    kernels::scale(factor, self.grad, g);
    accumulate(*self.inputs[0], g);
  });
}

Tensor div_scalar(const Tensor& a, double divisor) {
  if (divisor == 0.0) throw ParameterError("div_scalar: division by zero");
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v = v / divisor;
  return make_result("div_scalar", a.shape(), std::move(out), {node_of(a)}, [divisor](Node& self) {
    std::vector<double> g(self.grad);
    for (double& v : g) v = v / divisor;
    accumulate(*self.inputs[0], g);
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.size() != n) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not match " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(m * n);
  const auto xv = x.values();
  const auto bv = bias.values();
  for (std::size_t r = 0; r < m; ++r) {
    kernels::add(xv.subspan(r * n, n), bv, std::span(out).subspan(r * n, n));
  }
  return make_result("add_row", {m, n}, std::move(out), {node_of(x), node_of(bias)},
                     [m, n](Node& self) {
                       accumulate(*self.inputs[0], self.grad);
                       if (self.inputs[1]->requires_grad) {
                         std::vector<double> gb(n, 0.0);
                         for (std::size_t r = 0; r < m; ++r) {
                           kernels::axpy(1.0, std::span<const double>(self.grad).subspan(r * n, n), gb);
                         }
                         accumulate(*self.inputs[1], gb);
                       }
                     });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  kernels::active().relu(x.size(), x.values().data(), out.data());
  return make_result("relu", x.shape(), std::move(out), {node_of(x)}, [](Node& self) {
    Node& in = *self.inputs[0];
    std::vector<double> g(self.grad.size());
    kernels::active().relu_backward(g.size(), in.value.data(), self.grad.data(), g.data());
    accumulate(in, g);
  });
}

Tensor sum(const Tensor& x) {
  const double s = kernels::sum(x.values());
  const std::size_t n = x.size();
  return make_result("sum", {1}, {s}, {node_of(x)}, [n](Node& self) {
    accumulate(*self.inputs[0], std::vector<double>(n, self.grad[0]));
  });
}

Tensor mean(const Tensor& x) {
  const std::size_t n = x.size();
  const double m = kernels::sum(x.values()) / static_cast<double>(n);
  return make_result("mean", {1}, {m}, {node_of(x)}, [n](Node& self) {
    accumulate(*self.inputs[0], std::vector<double>(n, self.grad[0] / static_cast<double>(n)));
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {node_of(x)},
                     [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor flatten(const Tensor& x) {
  const std::size_t batch = x.shape()[0];
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("flatten", {batch, x.size() / batch}, std::move(out), {node_of(x)},
                     [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Tensor softmax(const Tensor& z, double temperature) {
  require_matrix(z, "softmax");
  require_temperature(temperature, "softmax");
  const std::size_t rows = z.shape()[0], cols = z.shape()[1];
  std::vector<double> out(z.size());
  log_softmax_rows(z.values(), rows, cols, temperature, out);
  for (double& v : out) v = std::exp(v);
  return make_result("softmax", z.shape(), std::move(out), {node_of(z)},
                     [rows, cols, temperature](Node& self) {
                       std::vector<double> g(rows * cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.value.data() + r * cols;
                         const double* go = self.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += go[c] * y[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] = y[c] * (go[c] - dot) / temperature;
                         }
                       }
                       accumulate(*self.inputs[0], g);
                     });
}

Tensor log_softmax(const Tensor& z, double temperature) {
  require_matrix(z, "log_softmax");
  require_temperature(temperature, "log_softmax");
  const std::size_t rows = z.shape()[0], cols = z.shape()[1];
  std::vector<double> out(z.size());
  log_softmax_rows(z.values(), rows, cols, temperature, out);
  return make_result("log_softmax", z.shape(), std::move(out), {node_of(z)},
                     [rows, cols, temperature](Node& self) {
                       std::vector<double> g(rows * cols);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* l = self.value.data() + r * cols;
                         const double* go = self.grad.data() + r * cols;
                         double total = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) total += go[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           g[r * cols + c] = (go[c] - std::exp(l[c]) * total) / temperature;
                         }
                       }
                       accumulate(*self.inputs[0], g);
                     });
}

Tensor gather_rows(const Tensor& x, std::span<const int> index) {
  require_matrix(x, "gather_rows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (index.size() != rows) {
    throw DimensionError("gather_rows: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(rows) + " rows");
  }
  std::vector<int> idx(index.begin(), index.end());
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw ContractError("gather_rows: index " + std::to_string(idx[r]) + " out of range [0, " +
                          std::to_string(cols) + ")");
    }
    out[r] = x.values()[r * cols + static_cast<std::size_t>(idx[r])];
  }
  return make_result("gather_rows", {rows}, std::move(out), {node_of(x)},
                     [rows, cols, idx = std::move(idx)](Node& self) {
                       std::vector<double> g(rows * cols, 0.0);
                       for (std::size_t r = 0; r < rows; ++r) {
                         g[r * cols + static_cast<std::size_t>(idx[r])] = self.grad[r];
                       }
                       accumulate(*self.inputs[0], g);
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape shape = parts[0].shape();
  const Shape tail(shape.begin() + 1, shape.end());
  std::size_t total_rows = 0;
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (Shape(s.begin() + 1, s.end()) != tail) {
      throw DimensionError("concat_rows: trailing extents differ, " + shape_str(shape) + " vs " +
                           shape_str(s));
    }
    total_rows += s[0];
    inputs.push_back(node_of(p));
    sizes.push_back(p.size());
  }
  std::vector<double> out;
  out.reserve(numel(tail) * total_rows);
  for (const Tensor& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  shape[0] = total_rows;
  return make_result("concat_rows", std::move(shape), std::move(out), std::move(inputs),
                     [sizes = std::move(sizes)](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t i = 0; i < sizes.size(); ++i) {
                         accumulate(*self.inputs[i],
                                    std::span<const double>(self.grad).subspan(offset, sizes[i]));
                         offset += sizes[i];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (begin >= end || end > s[0]) {
    throw DimensionError("slice_rows: invalid range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + shape_str(s));
  }
  const std::size_t row = x.size() / s[0];
  Shape shape = s;
  shape[0] = end - begin;
  const auto v = x.values().subspan(begin * row, (end - begin) * row);
  const std::size_t total = x.size();
  return make_result("slice_rows", std::move(shape), std::vector<double>(v.begin(), v.end()),
                     {node_of(x)}, [begin, row, total](Node& self) {
                       std::vector<double> g(total, 0.0);
                       std::copy(self.grad.begin(), self.grad.end(), g.begin() + begin * row);
                       accumulate(*self.inputs[0], g);
                     });
}

std::vector<std::string> differentiable_ops() {
  return {"matmul", "add",     "sub",         "mul",         "scale",       "div_scalar",
          "add_row", "relu",   "sum",         "mean",        "reshape",     "flatten",
          "softmax", "log_softmax", "gather_rows", "concat_rows", "slice_rows"};
}

Tensor custom_op(std::string name, Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, GradRule rule) {
  check_shape(shape);
  if (values.size() != numel(shape)) throw DimensionError("custom_op: value count mismatch");
  std::vector<NodePtr> nodes;
  for (const Tensor& t : inputs) nodes.push_back(node_of(t));
  return make_result(std::move(name), std::move(shape), std::move(values), std::move(nodes),
                     [rule = std::move(rule)](Node& self) {
                       auto grads = rule(self.grad);
                       if (grads.size() != self.inputs.size()) {
                         throw ContractError("custom_op '" + self.op +
                                             "': gradient rule returned the wrong arity");
                       }
                       for (std::size_t i = 0; i < grads.size(); ++i) {
                         if (grads[i].empty()) continue;
                         if (grads[i].size() != self.inputs[i]->value.size()) {
                           throw DimensionError("custom_op '" + self.op +
                                                "': gradient size mismatch");
                         }
                         accumulate(*self.inputs[i], grads[i]);
                       }
                     });
}

}  // namespace ccldc

#pragma once

// Dense row-major double tensors with a single-use reverse-mode graph.
//
// A Tensor is a cheap handle; copies alias the same node. Operations on
// tensors that require gradients record a node holding the inputs it needs
// for its gradient rule. backward() on a scalar result walks the recorded
// nodes once in reverse topological order, accumulates into the grad of every
// leaf with requires_grad, and consumes the graph.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ccldc {

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
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Writable view for leaves (parameter updates, test fixtures). Throws
  /// StateError on a tensor produced by a recorded operation.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Throws StateError when no gradient has been accumulated.
  std::span<const double> grad() const;
  /// Gradient, or zeros when none has been accumulated.
  std::vector<double> grad_or_zero() const;
  void zero_grad();

  /// Reverse pass from this scalar. Consumes the graph.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  std::string_view op_name() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct TensorAccess;
};

/// Disables graph recording on this thread for its lifetime.
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

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor div_scalar(const Tensor& a, double divisor);
/// x[m x n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
/// [batch x ...] -> [batch x rest]
Tensor flatten(const Tensor& x);
/// Row-wise softmax of z / temperature.
Tensor softmax(const Tensor& z, double temperature = 1.0);
Tensor log_softmax(const Tensor& z, double temperature = 1.0);
/// out[r] = x[r, index[r]]
Tensor gather_rows(const Tensor& x, std::span<const int> index);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

/// Names of every built-in differentiable operation, for coverage checks.
std::vector<std::string> differentiable_ops();

/// Gradient rule for a user-defined op: returns one gradient per input
/// (an empty vector for inputs that receive none).
using GradRule = std::function<std::vector<std::vector<double>>(std::span<const double> grad_out)>;

/// Registers a user-defined operation in the graph.
Tensor custom_op(std::string name, Shape shape, std::vector<double> values,
                 std::vector<Tensor> inputs, GradRule rule);

}  // namespace ccldc

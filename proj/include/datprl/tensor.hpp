// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensor with tape-based reverse-mode differentiation.
//
// Every differentiable op produces a node that remembers its inputs and a
// closure propagating the node's gradient into them. backward() builds a
// Tape (the topologically ordered set of nodes reachable from the loss) and
// walks it in reverse.
//
// Gradient semantics:
//  - leaf gradients accumulate across backward() calls until zero_grad();
//  - intermediate gradients are reset at the start of every backward();
//  - graphs are only recorded while gradients are enabled (see NoGradGuard)
//    and at least one input requires a gradient.

#ifndef DATPRL_TENSOR_HPP
#define DATPRL_TENSOR_HPP

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace datprl {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape &shape);
std::string shape_str(const Shape &shape);

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node &)> backward;
  std::string_view op = "leaf";

  bool is_leaf() const { return !backward; }

  /// Gradient storage, zero-filled on first use.
  std::span<double> grad_buffer();
};

} // namespace detail

class Tensor {
public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  const Shape &shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  /// Direct write access; intended for initialisers and optimizers only.
  std::span<double> mutable_data() { return node_->value; }
  double at(std::size_t flat_index) const;
  double item() const;

  /// Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return node_->is_leaf(); }
  std::string_view op_name() const { return node_->op; }

  /// Same values, no history, no gradient.
  Tensor detach() const;
  /// Deep copy of a leaf including the requires_grad flag; gradient dropped.
  Tensor clone_leaf() const;

  void backward() const;

  const std::shared_ptr<detail::Node> &node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of the differentiable operations reachable from a root.
/// Every node appears exactly once and after all of its inputs.
class Tape {
public:
  static Tape record(const Tensor &root);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<detail::Node>> &nodes() const { return nodes_; }

  /// Seeds d(root)/d(root) = 1 and propagates to every node on the tape.
  void backward();

private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Populates gradients of every requires_grad leaf reachable from `loss`.
/// Throws ShapeError when `loss` is not a single element.
void backward(const Tensor &loss);

bool grad_enabled();

class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

private:
  bool previous_;
};

namespace detail {

/// Wraps a freshly computed value as an op result. Inputs and the backward
/// closure are only retained when recording is on and some input needs a
/// gradient. Throws std::domain_error on non-finite output.
Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   std::vector<Tensor> inputs,
                   std::function<void(Node &)> backward);

} // namespace detail

} // namespace datprl

#endif // DATPRL_TENSOR_HPP

// SPDX-License-Identifier: Apache-2.0

#include "datprl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace datprl {

std::size_t shape_numel(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

} // namespace detail

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values,
                                       bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw ShapeError("shape " + shape_str(shape) + " holds " +
                     std::to_string(shape_numel(shape)) + " elements, got " +
                     std::to_string(values.size()));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

} // namespace

Tensor::Tensor() : node_(new_node({1}, {0.0}, false)) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  return node_->shape[axis];
}

double Tensor::at(std::size_t flat_index) const {
  if (flat_index >= numel())
    throw std::out_of_range("index " + std::to_string(flat_index) +
                            " out of range for shape " + shape_str(shape()));
  return node_->value[flat_index];
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() requires a single element, shape is " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf())
    throw std::logic_error("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = on;
}

Tensor Tensor::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

Tensor Tensor::clone_leaf() const {
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

void Tensor::backward() const { datprl::backward(*this); }

Tape Tape::record(const Tensor &root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  // Iterative post-order DFS; a node is emitted after all of its inputs.
  std::unordered_set<const detail::Node *> seen;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second)
        stack.emplace_back(std::move(child), 0);
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tape::backward() {
  if (nodes_.empty()) return;
  for (auto &node : nodes_)
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  auto &root = nodes_.back();
  auto g = root->grad_buffer();
  g[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto &node = *it;
    if (!node->is_leaf()) node->backward(*node);
  }
}

void backward(const Tensor &loss) {
  if (loss.numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  auto tape = Tape::record(loss);
  tape.backward();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<double> value, std::string_view op,
                   std::vector<Tensor> inputs, std::function<void(Node &)> backward) {
  for (double v : value)
    if (!std::isfinite(v))
      throw std::domain_error("non-finite value produced by " + std::string(op));
  auto node = new_node(std::move(shape), std::move(value), false);
  node->op = op;
  if (t_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor &t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto &t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

} // namespace detail

} // namespace datprl

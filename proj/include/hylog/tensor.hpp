// Copyright 2026 The hylog Authors
// SPDX-License-Identifier: Apache-2.0

// Dense tensor with a dynamic reverse-mode differentiation graph.
//
// A Tensor is a cheap handle onto an immutable node. Every operation
// produces a new node; when gradient recording is enabled and any input
// requires a gradient, the node keeps references to its inputs and a
// backward rule. Calling backward() on a scalar walks the graph once in
// reverse topological order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hylog {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }

  // Gradient buffer of parent i, allocated on first use; nullptr when that
  // parent does not take part in differentiation.
  T* parent_grad(std::size_t i) {
    Node& p = *parents[i];
    if (!p.requires_grad) return nullptr;
    if (p.grad.empty()) p.grad.assign(p.data->size(), T(0));
    return p.grad.data();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    if (numel_of(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + to_string(shape));
    }
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), T(1)); }
  static Tensor full(Shape shape, T value) {
    auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }
  static Tensor scalar(T value) { return Tensor(Shape{1}, {value}); }

  // Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data->size(); }
  std::span<const T> data() const { return *node_->data; }
  const T* raw() const { return node_->data->data(); }
  T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return (*node_->data)[0];
  }
  T operator[](std::size_t i) const { return (*node_->data)[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  const char* op_name() const { return node_->op; }
  bool is_leaf() const { return node_->is_leaf(); }

  // Identity of the underlying node; two handles alias iff equal.
  const void* id() const { return node_.get(); }

  // Mutable access is restricted to leaves (parameters and constants).
  std::span<T> mutable_data() {
    if (!is_leaf()) throw std::logic_error("mutable_data() on a non-leaf tensor");
    return *node_->data;
  }
  void zero_grad() { node_->grad.clear(); }

  // Same values, cut from the graph.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    return t;
  }

  // Copy with independent storage.
  Tensor clone() const { return Tensor(shape(), *node_->data); }

  void backward() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node<T>> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T x : v) {
    if (!std::isfinite(x)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace detail

// Wraps freshly computed values into a graph node. `backward` receives the
// output node (its grad is populated) and must accumulate into parents via
// Node::parent_grad.
template <typename T, typename Backward>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs, Backward&& backward) {
  detail::check_finite(values, op);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::make_shared<std::vector<T>>(std::move(values));
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto* in : inputs) any = any || in->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto* in : inputs) node->parents.push_back(in->node());
      node->backward = std::forward<Backward>(backward);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

// Same as make_result for a list of inputs of runtime length.
template <typename T, typename Backward>
Tensor<T> make_result_n(const char* op, Shape shape, std::vector<T> values,
                        const std::vector<Tensor<T>>& inputs, Backward&& backward) {
  detail::check_finite(values, op);
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::make_shared<std::vector<T>>(std::move(values));
  node->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& in : inputs) node->parents.push_back(in.node());
      node->backward = std::forward<Backward>(backward);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + to_string(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->is_leaf()) continue;
    if (n->grad.empty()) continue;
    n->backward(*n);
    // Intermediate gradients are consumed once.
    std::vector<T>().swap(n->grad);
  }
}

}  // namespace hylog

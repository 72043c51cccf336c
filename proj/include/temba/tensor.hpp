#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "temba/errors.hpp"

namespace temba {

// Up to three extents, read as (batch, time, channels) when rank is 3.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 3;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) {
    require(dims.size() <= kMaxRank, "Shape: rank > 3");
    for (std::size_t d : dims) dims_[rank_++] = d;
  }

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t axis) const {
    require(axis < rank_, "Shape: axis out of range");
    return dims_[axis];
  }
  std::size_t back() const { return rank_ == 0 ? 1 : dims_[rank_ - 1]; }
  // Product of all extents except the last (number of "rows").
  std::size_t rows() const {
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < rank_; ++i) r *= dims_[i];
    return r;
  }
  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
  }
  Shape with(std::size_t axis, std::size_t extent) const {
    require(axis < rank_, "Shape: axis out of range");
    Shape s = *this;
    s.dims_[axis] = extent;
    return s;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (std::size_t i = 0; i < rank_; ++i)
      if (dims_[i] != o.dims_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < rank_; ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

 private:
  std::array<std::size_t, kMaxRank> dims_{};
  std::size_t rank_ = 0;
};

template <typename S>
struct Node;

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

// One recorded value in the computation graph. Leaves have no backward_fn.
template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty until needed
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::uint64_t seq = 0;  // execution order; 0 for leaves
  std::vector<NodePtr<S>> inputs;
  // Reads this->grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

namespace detail {

inline std::atomic<std::uint64_t>& op_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Disables tape recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major tensor with a shared graph node. Copies share the node, so a
// parameter held in two places receives one gradient buffer.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;
  explicit Tensor(NodePtr<S> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from(shape, std::vector<S>(shape.numel(), S(0)), requires_grad);
  }
  static Tensor full(Shape shape, S v, bool requires_grad = false) {
    return from(shape, std::vector<S>(shape.numel(), v), requires_grad);
  }
  static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false) {
    require(values.size() == shape.numel(), "Tensor: " + std::to_string(values.size()) +
                                                " values for shape " + shape.str());
    auto n = std::make_shared<Node<S>>();
    n->shape = shape;
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor scalar(S v, bool requires_grad = false) { return from(Shape{}, {v}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.rank(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const S> values() const { return node_->value; }
  // Mutable access is for leaves only (initialization, optimizer updates, tests).
  std::span<S> mutable_values() const { return node_->value; }
  const std::vector<S>& vec() const { return node_->value; }

  S item() const {
    require(numel() == 1, "Tensor::item on tensor of shape " + shape().str());
    return node_->value[0];
  }
  S operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) const {
    require(is_leaf() || !on, "set_requires_grad on a non-leaf");
    node_->requires_grad = on;
  }
  bool is_leaf() const { return !node_->backward_fn; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const S> grad() const {
    require(has_grad(), "Tensor::grad: no gradient recorded");
    return node_->grad;
  }
  std::span<S> mutable_grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() const { node_->grad.clear(); }

  // Fresh leaf holding a copy of the values, detached from the graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

  const NodePtr<S>& node() const { return node_; }

 private:
  NodePtr<S> node_;
};

template <typename S>
bool all_finite(std::span<const S> v) {
  for (S x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Builds the result node of a primitive op. Validates finiteness and, when
// recording is enabled and any input requires a gradient, links the node into
// the graph with its backward rule.
template <typename S>
Tensor<S> make_result(std::string_view op, Shape shape, std::vector<S> value,
                      const std::vector<Tensor<S>>& inputs,
                      std::function<void(Node<S>&)> backward_fn) {
  if (!all_finite<S>(value)) throw NumericFault("non-finite output in op '" + std::string(op) + "'");
  auto n = std::make_shared<Node<S>>();
  n->shape = shape;
  n->value = std::move(value);
  n->op = op;
  bool any = false;
  for (const auto& t : inputs) any = any || t.requires_grad();
  if (any && grad_enabled()) {
    n->requires_grad = true;
    n->seq = ++detail::op_counter();
    for (const auto& t : inputs) n->inputs.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<S>(std::move(n));
}

template <typename S>
Tensor<S> make_result(std::string_view op, Shape shape, std::vector<S> value,
                      std::initializer_list<Tensor<S>> inputs,
                      std::function<void(Node<S>&)> backward_fn) {
  return make_result<S>(op, shape, std::move(value), std::vector<Tensor<S>>(inputs),
                        std::move(backward_fn));
}

// Gradient buffer of input `i`, or nullptr when that input needs no gradient.
template <typename S>
S* input_grad(Node<S>& self, std::size_t i) {
  Node<S>& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

// The recorded ops reachable from a root, in reverse execution order.
template <typename S>
class Tape {
 public:
  static Tape record_from(const Tensor<S>& root) {
    Tape tape;
    std::unordered_set<Node<S>*> seen;
    std::vector<Node<S>*> stack{root.node().get()};
    while (!stack.empty()) {
      Node<S>* n = stack.back();
      stack.pop_back();
      if (!n->requires_grad || !seen.insert(n).second) continue;
      if (n->backward_fn) tape.ops_.push_back(n);
      for (const auto& in : n->inputs) stack.push_back(in.get());
    }
    std::sort(tape.ops_.begin(), tape.ops_.end(),
              [](const Node<S>* a, const Node<S>* b) { return a->seq > b->seq; });
    return tape;
  }

  std::span<Node<S>* const> ops() const { return ops_; }

  // Seeds d(root)/d(root) = 1 and runs every backward rule exactly once,
  // newest op first. Intermediate gradients start from zero; leaf gradients
  // accumulate across calls.
  void replay(Node<S>& root) const {
    for (Node<S>* n : ops_) n->grad.assign(n->value.size(), S(0));
    root.ensure_grad();
    root.grad[0] += S(1);
    for (Node<S>* n : ops_) {
      n->backward_fn(*n);
      for (const auto& in : n->inputs) {
        if (in->requires_grad && !all_finite<S>(std::span<const S>(in->grad)))
          throw NumericFault("non-finite gradient flowing out of op '" + std::string(n->op) + "'");
      }
    }
  }

 private:
  std::vector<Node<S>*> ops_;
};

// d(root)/d(leaf) accumulated into every leaf that requires a gradient.
template <typename S>
void backward(const Tensor<S>& root) {
  require(root.defined() && root.numel() == 1 && root.rank() == 0,
          "backward: root must be a scalar");
  if (!root.requires_grad()) return;
  Tape<S>::record_from(root).replay(*root.node());
}

}  // namespace temba

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "xpass/error.hpp"

namespace xpass {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

// Whether ops record backward closures. Thread-local so inference threads can
// disable recording without affecting a training thread.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return !backward_fn; }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T{0});
  }
};

}  // namespace detail

// RAII switch that stops the current thread from recording a tape.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

// Dense row-major tensor with shared ownership of its storage. Copies of a
// Tensor alias the same node; use clone() for an independent copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() : node_(std::make_shared<detail::Node<T>>()) {}

  explicit Tensor(Shape shape, T fill = T{0}) : Tensor() {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    node_->data.assign(shape_size(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : Tensor() {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("shape " + shape_string(shape) + " does not hold " + std::to_string(values.size()) +
                           " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    std::vector<T> values;
    std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& r : rows) {
      if (r.size() != cols) throw DimensionError("ragged matrix literal");
      values.insert(values.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(values));
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const { return dim() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return dim() == 0 ? 1 : node_->shape.back(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }

  T& operator[](std::size_t i) { return node_->data[i]; }
  const T& operator[](std::size_t i) const { return node_->data[i]; }
  T& operator()(std::size_t r, std::size_t c) { return node_->data[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  T item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }

  // Marks a leaf as trainable and allocates its gradient buffer.
  Tensor& set_requires_grad(bool on = true) {
    if (!node_->is_leaf()) throw UsageError("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = on;
    if (on) {
      node_->ensure_grad();
    } else {
      node_->grad.clear();
    }
    return *this;
  }

  void zero_grad() {
    if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
  }

  // Independent leaf copy of the values; no tape, same requires_grad flag.
  Tensor clone() const {
    Tensor out(shape(), node_->data);
    if (node_->requires_grad) out.set_requires_grad(true);
    return out;
  }

  // Leaf copy that shares nothing with the tape.
  Tensor detach() const { return Tensor(shape(), node_->data); }

  const NodePtr& node() const { return node_; }

  // Builds the result tensor of an op. When recording, links parents that
  // require gradients and installs `backward`.
  template <typename Backward>
  static Tensor make_result(Shape shape, std::vector<T> values, std::initializer_list<const Tensor*> inputs,
                            Backward&& backward) {
    Tensor out(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool any = false;
    for (const Tensor* in : inputs) any = any || in->requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const Tensor* in : inputs) out.node_->parents.push_back(in->node_);
    out.node_->backward_fn = std::forward<Backward>(backward);
    return out;
  }

 private:
  NodePtr node_;
};

// Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
// intermediate gradients are recomputed from scratch each sweep.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) throw UsageError("backward() needs a scalar, got " + shape_string(loss.shape()));
  if (!loss.requires_grad()) throw UsageError("backward() on a tensor that is not part of a recorded computation");
  using Node = detail::Node<T>;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), T{0});
    else node->ensure_grad();
  }
  order.back()->grad[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

}  // namespace xpass

#pragma once

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

namespace gcl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Recording switch for the autodiff tape. Thread-local so inference threads
/// can run with recording disabled while a trainer records on its own thread.
class GradMode {
public:
  static bool enabled() { return flag(); }
  static void set(bool on) { flag() = on; }

private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

/// RAII guard disabling tape recording for its lifetime.
class NoGradGuard {
public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

template <class T>
struct TensorNode;

/// Backward closure of one primitive: reads the output node's grad and
/// accumulates into its inputs.
template <class T>
using BackwardFn = std::function<void(TensorNode<T>&)>;

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  BackwardFn<T> backward;

  bool has_grad() const { return !grad.empty(); }

  /// Gradient buffer, zero-allocated on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense row-major tensor handle. Copies share storage; use clone() for a
/// deep copy.
template <class T>
class Tensor {
public:
  using Node = TensorNode<T>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
    if (values.size() != shape_numel(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) { return Tensor({1}, {value}, requires_grad); }

  explicit operator bool() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }
  /// Leading extent for matrices; 1 for vectors.
  std::size_t rows() const { return rank() == 1 ? 1 : node_->shape[0]; }
  /// Last-axis extent.
  std::size_t cols() const { return node_->shape.back(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  const std::vector<T>& values() const { return node_->data; }

  T item() const {
    if (numel() != 1) throw std::invalid_argument("item() requires a single-element tensor, got " + shape_str(shape()));
    return node_->data[0];
  }
  T at(std::size_t i) const { return node_->data.at(i); }
  T at(std::size_t r, std::size_t c) const { return node_->data.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->has_grad(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  const char* op() const { return node_->op; }

  Tensor clone(bool requires_grad = false) const { return Tensor(shape(), node_->data, requires_grad); }
  /// Same values, cut from the tape.
  Tensor detach() const { return clone(false); }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
  std::shared_ptr<Node> node_;
};

/// Creates the output of a primitive. Records the inputs and backward closure
/// only when recording is enabled and some input requires a gradient.
template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs, BackwardFn<T> backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const Tensor<T>* in : inputs) any = any || in->requires_grad();
  if (!any) return out;
  auto& node = out.node();
  node.requires_grad = true;
  node.op = op;
  for (const Tensor<T>* in : inputs) node.inputs.push_back(in->node_ptr());
  node.backward = std::move(backward);
  return out;
}

template <class T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      const std::vector<Tensor<T>>& inputs, BackwardFn<T> backward) {
  Tensor<T> out(std::move(shape), std::move(values));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& node = out.node();
  node.requires_grad = true;
  node.op = op;
  for (const auto& in : inputs) node.inputs.push_back(in.node_ptr());
  node.backward = std::move(backward);
  return out;
}

/// Executed primitives reachable from a loss, in forward topological order.
template <class T>
class Tape {
public:
  static Tape record(const Tensor<T>& root) {
    Tape tape;
    std::unordered_set<const TensorNode<T>*> visited;
    // Iterative post-order DFS: each node is emitted after all its inputs.
    std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(&root.node(), 0);
    visited.insert(&root.node());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        TensorNode<T>* child = node->inputs[next++].get();
        if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
      } else {
        tape.records_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<TensorNode<T>*>& records() const { return records_; }

  /// Runs every recorded backward closure once, in reverse order.
  void replay() const {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      TensorNode<T>* node = *it;
      if (node->backward && node->has_grad()) node->backward(*node);
    }
  }

private:
  std::vector<TensorNode<T>*> records_;
};

/// Reverse-mode pass from a scalar loss. Leaf gradients accumulate.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw std::invalid_argument("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw std::invalid_argument("backward() on a loss that does not depend on any parameter");
  const Tape<T> tape = Tape<T>::record(loss);
  loss.node().grad_buffer()[0] += T(1);
  tape.replay();
}

}  // namespace gcl

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cprn/tensor.hpp"

namespace cprn {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(T(0));
  }
};

// Shared handle onto a node. A default-constructed Var is "absent" and is used
// for optional operands such as a missing bias.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  explicit operator bool() const { return static_cast<bool>(node_); }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; zeros if nothing has been accumulated yet.
  Tensor<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() const { node_->zero_grad(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

template <class T>
Var<T> leaf(Tensor<T> t) {
  return Var<T>(std::move(t), true);
}

// Ordered record of the primitive ops executed during one forward pass.
// backward() replays the recorded rules in exact reverse order. A tape with
// recording disabled acts as a plain inference context.
template <class T>
class Tape {
 public:
  explicit Tape(bool recording = true, bool training = true)
      : recording_(recording), training_(training) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  bool training() const { return training_; }
  void set_training(bool t) { training_ = t; }

  // Whether an op over these operands needs a backward rule.
  template <class... Vs>
  bool wants_grad(const Vs&... vs) const {
    return recording_ && (... || vs.requires_grad());
  }

  void record(std::string op, std::function<void()> backward) {
    ops_.push_back({std::move(op), std::move(backward)});
  }

  std::size_t size() const { return ops_.size(); }
  const std::string& op_name(std::size_t i) const { return ops_[i].name; }

  void backward(const Var<T>& loss) {
    if (ops_.empty()) throw UsageError("backward called before any recorded forward pass");
    if (!loss || loss.value().size() != 1)
      throw UsageError("backward requires a scalar loss");
    if (!loss.requires_grad()) throw UsageError("loss does not depend on any differentiable input");
    loss.grad()[0] += T(1);
    visited_.clear();
    visited_.reserve(ops_.size());
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      visited_.push_back(it->name);
      it->backward();
    }
  }

  // Names of ops in the order the last backward() visited them.
  const std::vector<std::string>& visited() const { return visited_; }

  void clear() {
    ops_.clear();
    visited_.clear();
  }

 private:
  struct Op {
    std::string name;
    std::function<void()> backward;
  };
  std::vector<Op> ops_;
  std::vector<std::string> visited_;
  bool recording_;
  bool training_;
};

}  // namespace cprn

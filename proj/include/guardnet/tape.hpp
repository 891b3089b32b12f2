#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <utility>
#include <vector>

#include "guardnet/error.hpp"
#include "guardnet/tensor.hpp"

namespace guardnet {

template <class T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Node ids increase in execution order, so walking ids
/// backwards is a valid reverse topological order.
///
/// A tape built with record_grad = false computes values only: nothing
/// requires grad, no backward closures are stored, and parameters are
/// borrowed without copying. Inference runs on such tapes.
///
/// backward() consumes the tape. A second backward() without zero_grad()
/// throws UsageError rather than accumulating doubled gradients.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_grad_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var<T> leaf(Tensor<T> value, bool requires_grad = false) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = record_grad_ && requires_grad;
    return push(std::move(n));
  }

  // Borrowed value that never receives gradient. `ref` must outlive the tape.
  Var<T> constant(const Tensor<T>& ref) {
    Node n;
    n.borrowed = &ref;
    return push(std::move(n));
  }

  // Borrowed trainable parameter; binding the same tensor twice yields the same node.
  Var<T> param(const Tensor<T>& ref) {
    if (auto it = params_.find(&ref); it != params_.end()) return {this, it->second};
    Node n;
    n.borrowed = &ref;
    n.requires_grad = record_grad_;
    Var<T> v = push(std::move(n));
    params_.emplace(&ref, v.id());
    return v;
  }

  // Records an op result. The closure runs during backward() only when the
  // output requires grad; it reads the upstream gradient via grad(self).
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn) {
    if (!value.all_finite()) {
      throw DimensionError("non-finite value produced by a forward op (overflow)");
    }
    Node n;
    n.owned = std::move(value);
    if (record_grad_) {
      for (const auto& in : inputs) {
        if (nodes_.at(in.id()).requires_grad) n.requires_grad = true;
      }
      if (n.requires_grad) {
        n.inputs.reserve(inputs.size());
        for (const auto& in : inputs) n.inputs.push_back(in.id());
        n.backward = std::move(fn);
      }
    }
    return push(std::move(n));
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.borrowed ? *n.borrowed : n.owned;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty() || value(id).empty(); }

  // Gradient accumulator for `id`, allocated as zeros on first use.
  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.shape() != value(id).shape()) n.grad = Tensor<T>(value(id).shape());
    return n.grad;
  }

  // Gradient of a bound parameter after backward(); zeros when the loss does not depend on it.
  Tensor<T> grad_of(const Tensor<T>& param) const {
    auto it = params_.find(&param);
    if (it == params_.end() || nodes_[it->second].grad.empty()) return Tensor<T>(param.shape());
    return nodes_[it->second].grad;
  }

  Tensor<T> grad_of(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    if (n.grad.empty()) return Tensor<T>(value(v.id()).shape());
    return n.grad;
  }

  void backward(Var<T> loss) {
    if (&loss.tape() != this) throw UsageError("loss is not on this tape");
    if (value(loss.id()).size() != 1) {
      throw UsageError("backward() needs a scalar loss, got shape " + shape_str(value(loss.id()).shape()));
    }
    if (consumed_) throw UsageError("tape already consumed by backward(); call zero_grad() first");
    consumed_ = true;
    if (!nodes_[loss.id()].requires_grad) return;
    grad(loss.id()).fill(T{1});
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
    }
  }

  // Clears accumulated gradients so backward() may run again on the same graph.
  void zero_grad() {
    for (auto& n : nodes_) n.grad = Tensor<T>();
    consumed_ = false;
  }

  void clear() {
    nodes_.clear();
    params_.clear();
    consumed_ = false;
  }

  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_.at(id).inputs; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Var<T> push(Node n) {
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  bool record_grad_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor<T>*, std::size_t> params_;
};

}  // namespace guardnet

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "survseq/tensor.hpp"

namespace survseq {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
/// is alive and has not been cleared.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<Scalar>& value() const { return tape_->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient tape. Operations append nodes in evaluation order;
/// backward() replays them once each in reverse, accumulating gradients into
/// every node that (transitively) depends on a variable.
template <typename Scalar>
class Tape {
 public:
  using Backward =
      std::function<void(Tape&, const Tensor<Scalar>& output, const Tensor<Scalar>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Tensor<Scalar> value) { return push(std::move(value), false, nullptr); }
  Var<Scalar> variable(Tensor<Scalar> value) { return push(std::move(value), true, nullptr); }

  /// Appends the result of a primitive. The backward rule is kept only when
  /// one of the inputs carries a gradient.
  Var<Scalar> record(Tensor<Scalar> value, std::initializer_list<Var<Scalar>> inputs,
                     Backward backward) {
    return record(std::move(value), std::vector<Var<Scalar>>(inputs), std::move(backward));
  }

  Var<Scalar> record(Tensor<Scalar> value, const std::vector<Var<Scalar>>& inputs,
                     Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) needs = needs || requires_grad(v);
    return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
  }

  const Tensor<Scalar>& value(const Var<Scalar>& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var<Scalar>& v) const { return nodes_[v.id()].requires_grad; }

  /// Gradient reached by the last backward pass; zeros when none arrived.
  Tensor<Scalar> gradient(const Var<Scalar>& v) const {
    const auto& n = nodes_[v.id()];
    if (n.grad.size() == 0) return Tensor<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <typename Derived>
  void accumulate(const Var<Scalar>& v, const Eigen::MatrixBase<Derived>& g) {
    auto& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Backward pass from a scalar (1x1) output. Returns the number of recorded
  /// operations whose backward rule ran.
  std::size_t backward(const Var<Scalar>& out) {
    if (value(out).rows() != 1 || value(out).cols() != 1) {
      throw ShapeError("backward", "loss must be 1x1, got " + shape_string(value(out)));
    }
    return backward(out, Tensor<Scalar>::Ones(1, 1));
  }

  /// Backward pass seeded with an explicit output gradient.
  std::size_t backward(const Var<Scalar>& out, const Tensor<Scalar>& seed) {
    const auto& v = value(out);
    if (seed.rows() != v.rows() || seed.cols() != v.cols()) {
      throw ShapeError("backward",
                       "seed " + shape_string(seed) + " vs output " + shape_string(v));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    accumulate(out, seed);
    std::size_t visited = 0;
    for (std::size_t i = out.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.value, n.grad);
      ++visited;
    }
    return visited;
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var<Scalar> push(Tensor<Scalar> value, bool requires_grad, Backward backward) {
    nodes_.push_back({std::move(value), Tensor<Scalar>(), std::move(backward), requires_grad});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

/// Parameter leaves bound onto a tape, looked up by name.
template <typename Scalar>
class Bindings {
 public:
  Bindings() = default;

  /// Binds every parameter as a differentiable variable, or as a constant
  /// when `trainable` is false (inference).
  Bindings(Tape<Scalar>& tape, const ParameterSet<Scalar>& params, bool trainable = true) {
    for (const auto& e : params) {
      vars_.emplace_back(e.name, trainable ? tape.variable(e.value) : tape.constant(e.value));
      index_.emplace(e.name, vars_.size() - 1);
    }
  }

  const Var<Scalar>& operator[](const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unbound parameter '" + name + "'");
    return vars_[it->second].second;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  /// Gradients after backward(), in the parameter set's order.
  ParameterSet<Scalar> gradients() const {
    ParameterSet<Scalar> out;
    for (const auto& [name, v] : vars_) out.add(name, v.tape().gradient(v));
    return out;
  }

 private:
  std::vector<std::pair<std::string, Var<Scalar>>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace survseq

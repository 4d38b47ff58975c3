#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace survseq {

using Index = Eigen::Index;

/// Dense row-major matrix. Every value in the library (weights, activations,
/// gradients, batches) is two-dimensional; vectors are 1 x n or n x 1.
template <typename Scalar>
using Tensor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return shape_string(m.rows(), m.cols());
}

/// Raised by any primitive whose operands have incompatible dimensions.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string op, const std::string& detail)
      : std::invalid_argument(op + ": shape mismatch: " + detail), op_(std::move(op)) {}

  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Ordered, named collection of parameter tensors. Order is insertion order and
/// is what checkpoints and optimizers iterate over.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<Scalar> value;
  };

  void add(std::string name, Tensor<Scalar> value) {
    if (index_.count(name) != 0) {
      throw std::invalid_argument("duplicate parameter '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<Scalar>& operator[](const std::string& name) { return entries_[position(name)].value; }
  const Tensor<Scalar>& operator[](const std::string& name) const {
    return entries_[position(name)].value;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  Index scalar_count() const {
    Index n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }

  template <typename Other>
  ParameterSet<Other> cast() const {
    ParameterSet<Other> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<Other>());
    return out;
  }

  /// Same names in the same order with the same shapes.
  template <typename Other>
  bool same_layout(const ParameterSet<Other>& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entry(i);
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
        return false;
    }
    return true;
  }

 private:
  std::size_t position(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace survseq

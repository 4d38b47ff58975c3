#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "survseq/tensor.hpp"

namespace survseq {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Thrown before any parameter is touched when a gradient is NaN or infinite.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : std::runtime_error("non-finite gradient for parameter '" + parameter + "'"), parameter_(parameter) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

template <typename Scalar>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  ParameterSet<Scalar> first_moment;
  ParameterSet<Scalar> second_moment;

  AdamState() = default;
  AdamState(const ParameterSet<Scalar>& params, AdamOptions opts) : options(opts) {
    for (const auto& e : params) {
      first_moment.add(e.name, Tensor<Scalar>::Zero(e.value.rows(), e.value.cols()));
      second_moment.add(e.name, Tensor<Scalar>::Zero(e.value.rows(), e.value.cols()));
    }
  }
};

/// One bias-corrected adaptive-moment update, in place.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads) {
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment)) {
    throw ShapeError("adam_step", "parameter, gradient and moment layouts differ");
  }
  for (const auto& g : grads) {
    if (!g.value.allFinite()) throw NonFiniteGradient(g.name);
  }

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(o.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(o.beta2, t));
  const Scalar b1 = static_cast<Scalar>(o.beta1);
  const Scalar b2 = static_cast<Scalar>(o.beta2);
  const Scalar lr = static_cast<Scalar>(o.learning_rate);
  const Scalar eps = static_cast<Scalar>(o.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment.entry(i).value;
    auto& v = state.second_moment.entry(i).value;
    const auto& g = grads.entry(i).value;
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
    params.entry(i).value.array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
template <typename Scalar>
double clip_global_norm(ParameterSet<Scalar>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads) sq += g.value.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const Scalar factor = static_cast<Scalar>(max_norm / norm);
    for (auto& g : grads) g.value *= factor;
  }
  return norm;
}

}  // namespace survseq

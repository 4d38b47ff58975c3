#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "survseq/ops.hpp"

namespace survseq {

/// Builds a scalar loss from parameters bound onto a tape.
template <typename Scalar>
using GraphFn = std::function<Var<Scalar>(Tape<Scalar>&, const Bindings<Scalar>&)>;

template <typename Scalar>
struct ForwardBackwardResult {
  Scalar loss = 0;
  ParameterSet<Scalar> grads;
};

/// Evaluates the graph once and returns the loss with exact reverse-mode
/// gradients for every parameter.
template <typename Scalar>
ForwardBackwardResult<Scalar> forward_backward(const GraphFn<Scalar>& graph,
                                               const ParameterSet<Scalar>& params) {
  Tape<Scalar> tape;
  Bindings<Scalar> bound(tape, params);
  Var<Scalar> loss = graph(tape, bound);
  tape.backward(loss);
  return {loss.value()(0, 0), bound.gradients()};
}

struct ParameterCheck {
  std::string name;
  double max_rel_error = 0;
  Index worst_index = -1;
  double analytic = 0;
  double numeric = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParameterCheck> parameters;

  bool passed() const {
    return std::all_of(parameters.begin(), parameters.end(), [](const auto& p) { return p.passed; });
  }
  double max_rel_error() const {
    double m = 0;
    for (const auto& p : parameters) m = std::max(m, p.max_rel_error);
    return m;
  }
  std::vector<std::string> failures() const {
    std::vector<std::string> out;
    for (const auto& p : parameters)
      if (!p.passed) out.push_back(p.name);
    return out;
  }
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor for |analytic - numeric| / max(|analytic|, |numeric|, floor),
  /// so entries that are zero on both routes compare absolutely.
  double floor = 1e-6;
};

/// Compares reverse-mode gradients with central differences
/// (L(theta + h) - L(theta - h)) / 2h for every scalar parameter. Runs in
/// double precision.
inline GradCheckReport grad_check(const GraphFn<double>& graph, const ParameterSet<double>& params,
                                  double tolerance, GradCheckOptions options = {}) {
  if (!(tolerance > 0)) throw std::invalid_argument("grad_check: tolerance must be positive");
  GradCheckReport report;
  if (params.empty()) return report;

  const auto analytic = forward_backward(graph, params).grads;
  ParameterSet<double> probe = params;

  auto evaluate = [&]() {
    Tape<double> tape;
    Bindings<double> bound(tape, probe, false);
    Var<double> loss = graph(tape, bound);
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw ShapeError("grad_check", "loss must be 1x1, got " + shape_string(loss.value()));
    }
    return loss.value()(0, 0);
  };

  for (std::size_t p = 0; p < params.size(); ++p) {
    ParameterCheck check;
    check.name = params.entry(p).name;
    Tensor<double>& theta = probe.entry(p).value;
    const Tensor<double>& grad = analytic.entry(p).value;
    for (Index i = 0; i < theta.size(); ++i) {
      const double saved = theta.data()[i];
      theta.data()[i] = saved + options.step;
      const double up = evaluate();
      theta.data()[i] = saved - options.step;
      const double down = evaluate();
      theta.data()[i] = saved;

      const double numeric = (up - down) / (2 * options.step);
      const double a = grad.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > check.max_rel_error || check.worst_index < 0) {
        check.max_rel_error = rel;
        check.worst_index = i;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    check.passed = check.max_rel_error <= tolerance;
    report.parameters.push_back(check);
  }
  return report;
}

}  // namespace survseq

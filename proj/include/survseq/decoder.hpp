#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survseq/encoder.hpp"

namespace survseq {

template <typename Scalar>
struct Attention {
  Var<Scalar> context;  // B x H
  Var<Scalar> weights;  // B x L
};

/// Multiplicative attention: scores_l = <H_l, q P>, softmax over the real
/// steps of each row, context = sum_l w_l H_l.
template <typename Scalar>
Attention<Scalar> attend(const Var<Scalar>& query, const Var<Scalar>& memory, const Tensor<Scalar>& step_mask,
                         const Var<Scalar>& projection) {
  Var<Scalar> scores = sequence_dot(memory, query * projection);
  Var<Scalar> weights = masked_softmax_rows(scores, step_mask);
  return {sequence_weighted_sum(memory, weights), weights};
}

inline std::string decoder_prefix(int event) { return "decoder." + std::to_string(event) + "."; }

template <typename Scalar>
void add_decoder_parameters(ParameterSet<Scalar>& params, int events, Index hidden, int layers) {
  for (int k = 0; k < events; ++k) {
    const std::string p = decoder_prefix(k);
    for (int l = 0; l < layers; ++l) add_gru_parameters(params, p + "gru" + std::to_string(l) + ".", l == 0 ? 1 : hidden, hidden);
    params.add(p + "attention", Tensor<Scalar>::Zero(hidden, hidden));
    params.add(p + "dense.W", Tensor<Scalar>::Zero(2 * hidden, 1));
    params.add(p + "dense.b", Tensor<Scalar>::Zero(1, 1));
  }
}

/// Optional per-step interception of a block's output (used to inject
/// perturbations); receives the event, the step and a[k][t].
template <typename Scalar>
using StepHook = std::function<Var<Scalar>(int event, Index step, const Var<Scalar>& a)>;

/// Runs decoder block `event` for `horizon` steps and returns its B x horizon
/// non-negative pre-activations. Every layer starts from the encoder's final
/// state; step t is fed a[t-1] (zero at t = 0).
template <typename Scalar>
Var<Scalar> decode_block(int event, const EncoderOutput<Scalar>& enc, const Tensor<Scalar>& step_mask,
                         const Bindings<Scalar>& params, Index horizon, int layers, const StepHook<Scalar>& hook = {}) {
  if (horizon < 1) throw std::invalid_argument("decode_block: horizon must be >= 1");
  Tape<Scalar>& tape = enc.final.tape();
  const std::string p = decoder_prefix(event);
  std::vector<GruWeights<Scalar>> cells;
  for (int l = 0; l < layers; ++l) cells.push_back(GruWeights<Scalar>::bind(params, p + "gru" + std::to_string(l) + "."));
  const Var<Scalar> projection = params[p + "attention"];
  const Var<Scalar> dense_w = params[p + "dense.W"];
  const Var<Scalar> dense_b = params[p + "dense.b"];

  std::vector<Var<Scalar>> state(layers, enc.final);
  std::vector<Var<Scalar>> outputs;
  outputs.reserve(horizon);
  Var<Scalar> input = tape.constant(Tensor<Scalar>::Zero(enc.final.rows(), 1));
  for (Index t = 0; t < horizon; ++t) {
    Var<Scalar> x = input;
    for (int l = 0; l < layers; ++l) {
      state[l] = gru_cell(x, state[l], cells[l]);
      x = state[l];
    }
    const auto att = attend(x, enc.memory, step_mask, projection);
    Var<Scalar> a = relu(add_bias(concat_cols(std::vector<Var<Scalar>>{x, att.context}) * dense_w, dense_b));
    if (hook) a = hook(event, t, a);
    outputs.push_back(a);
    input = a;
  }
  return outputs.size() == 1 ? outputs.front() : concat_cols(outputs);
}

/// Joint softmax over all events and bins: rows are B x horizon blocks, one
/// per event; result is B x (K * horizon), event-major.
template <typename Scalar>
Var<Scalar> joint_head(const std::vector<Var<Scalar>>& rows) {
  if (rows.empty()) throw std::invalid_argument("joint_head: no events");
  return softmax_rows(rows.size() == 1 ? rows.front() : concat_cols(rows));
}

/// Discrete joint distribution over (event, bin) for one subject. Events are
/// numbered from 1 as in labels; row event-1 holds its bins.
class PdfMatrix {
 public:
  PdfMatrix() = default;
  explicit PdfMatrix(Tensor<double> p) : p_(std::move(p)) {}
  /// Unpacks one row of a B x (K*T) joint head output.
  template <typename Derived>
  static PdfMatrix from_flat(const Eigen::MatrixBase<Derived>& row, int events) {
    const Index horizon = row.size() / events;
    Tensor<double> p(events, horizon);
    for (int k = 0; k < events; ++k)
      for (Index t = 0; t < horizon; ++t) p(k, t) = static_cast<double>(row(k * horizon + t));
    return PdfMatrix(std::move(p));
  }

  int events() const { return static_cast<int>(p_.rows()); }
  Index horizon() const { return p_.cols(); }
  const Tensor<double>& values() const { return p_; }
  double operator()(int event, Index bin) const { return p_(row_index(event), bin); }
  double total() const { return p_.sum(); }

  /// Cumulative incidence of `event` through `bin` inclusive.
  double cdf(int event, Index bin) const {
    if (bin < 0 || bin >= horizon()) {
      throw std::out_of_range("cdf: bin " + std::to_string(bin) + " outside [0, " + std::to_string(horizon()) + ")");
    }
    return p_.row(row_index(event)).head(bin + 1).sum();
  }
  /// Whole CDF curve of one event.
  std::vector<double> cdf_curve(int event) const {
    std::vector<double> out(horizon());
    double acc = 0;
    for (Index t = 0; t < horizon(); ++t) out[t] = acc += p_(row_index(event), t);
    return out;
  }
  /// Expected bin conditional on `event`.
  double predicted_time(int event) const {
    const auto row = p_.row(row_index(event));
    const double mass = row.sum();
    if (!(mass > 0)) throw std::domain_error("predicted_time: event " + std::to_string(event) + " has zero mass");
    double acc = 0;
    for (Index t = 0; t < horizon(); ++t) acc += static_cast<double>(t) * row(t);
    return acc / mass;
  }
  /// Mean |p[k][t+1] - p[k][t]| over all events and adjacent bins.
  double roughness() const {
    if (horizon() < 2) return 0;
    return (p_.rightCols(horizon() - 1) - p_.leftCols(horizon() - 1)).cwiseAbs().mean();
  }

 private:
  Index row_index(int event) const {
    if (event < 1 || event > events()) {
      throw std::out_of_range("event " + std::to_string(event) + " outside [1, " + std::to_string(events()) + "]");
    }
    return event - 1;
  }
  Tensor<double> p_;
};

}  // namespace survseq

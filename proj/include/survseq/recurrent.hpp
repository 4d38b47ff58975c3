#pragma once

#include <string>

#include "survseq/ops.hpp"

namespace survseq {

/// Gated-recurrent cell weights. Gate columns are ordered [update | reset |
/// candidate]; the recurrent matrix is split so the reset gate can act on the
/// hidden state before the candidate projection.
template <typename Scalar>
struct GruWeights {
  Var<Scalar> input;           // I x 3H
  Var<Scalar> recurrent_gates; // H x 2H
  Var<Scalar> recurrent_cand;  // H x H
  Var<Scalar> bias;            // 1 x 3H

  static GruWeights bind(const Bindings<Scalar>& b, const std::string& prefix) {
    return {b[prefix + "W"], b[prefix + "U_zr"], b[prefix + "U_h"], b[prefix + "b"]};
  }
};

template <typename Scalar>
void add_gru_parameters(ParameterSet<Scalar>& params, const std::string& prefix, Index input, Index hidden) {
  params.add(prefix + "W", Tensor<Scalar>::Zero(input, 3 * hidden));
  params.add(prefix + "U_zr", Tensor<Scalar>::Zero(hidden, 2 * hidden));
  params.add(prefix + "U_h", Tensor<Scalar>::Zero(hidden, hidden));
  params.add(prefix + "b", Tensor<Scalar>::Zero(1, 3 * hidden));
}

/// One step:
///   z = sigmoid(x W_z + h U_z + e_z + b_z)
///   r = sigmoid(x W_r + h U_r + e_r + b_r)
///   c = tanh(x W_c + (r * h) U_h + e_c + b_c)
///   h' = (1 - z) * h + z * c
/// `extra` (B x 3H), when valid, is added to all three gate pre-activations.
template <typename Scalar>
Var<Scalar> gru_cell(const Var<Scalar>& x, const Var<Scalar>& h, const GruWeights<Scalar>& w,
                     const Var<Scalar>& extra = {}) {
  const Index hidden = h.cols();
  Var<Scalar> gates = add_bias(x * w.input, w.bias);
  if (extra.valid()) gates = gates + extra;
  Var<Scalar> zr = sigmoid(slice_cols(gates, 0, 2 * hidden) + h * w.recurrent_gates);
  Var<Scalar> z = slice_cols(zr, 0, hidden);
  Var<Scalar> r = slice_cols(zr, hidden, hidden);
  Var<Scalar> cand = tanh(slice_cols(gates, 2 * hidden, hidden) + cwise_product(r, h) * w.recurrent_cand);
  return h + cwise_product(z, cand - h);
}

}  // namespace survseq

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "survseq/encoder.hpp"

// Feed-forward per-event head: every bin gets its own output unit, with no
// coupling between neighbouring bins. Shares the encoder and joint softmax
// with the recurrent decoder.

namespace survseq {

inline std::string mlp_prefix(int event) { return "mlp." + std::to_string(event) + "."; }

template <typename Scalar>
void add_mlp_parameters(ParameterSet<Scalar>& params, int events, Index hidden, Index width, Index horizon) {
  for (int k = 0; k < events; ++k) {
    const std::string p = mlp_prefix(k);
    params.add(p + "l1.W", Tensor<Scalar>::Zero(2 * hidden, width));
    params.add(p + "l1.b", Tensor<Scalar>::Zero(1, width));
    params.add(p + "l2.W", Tensor<Scalar>::Zero(width, horizon));
    params.add(p + "l2.b", Tensor<Scalar>::Zero(1, horizon));
  }
}

/// Hidden width giving one head about the same parameter count as one
/// single-layer recurrent decoder block.
inline Index matched_mlp_width(Index hidden, Index horizon) {
  const double block = 4.0 * hidden * hidden + 8.0 * hidden + 1.0;  // gru 3H^2+6H, attention H^2, dense 2H+1
  const double per_unit = 2.0 * hidden + 1.0 + horizon;
  return std::max<Index>(1, static_cast<Index>(std::lround((block - horizon) / per_unit)));
}

/// Mean of the encoder states over each row's real steps.
template <typename Scalar>
Var<Scalar> mean_pool(const EncoderOutput<Scalar>& enc, const Tensor<Scalar>& step_mask) {
  Tensor<Scalar> w = step_mask;
  for (Index b = 0; b < w.rows(); ++b) w.row(b) /= w.row(b).sum();
  return sequence_weighted_sum(enc.memory, enc.final.tape().constant(std::move(w)));
}

/// One B x horizon pre-activation block per event.
template <typename Scalar>
std::vector<Var<Scalar>> mlp_decode(const EncoderOutput<Scalar>& enc, const Tensor<Scalar>& step_mask,
                                    const Bindings<Scalar>& params, int events) {
  const Var<Scalar> features = concat_cols(std::vector<Var<Scalar>>{enc.final, mean_pool(enc, step_mask)});
  std::vector<Var<Scalar>> rows;
  for (int k = 0; k < events; ++k) {
    const std::string p = mlp_prefix(k);
    Var<Scalar> h = relu(add_bias(features * params[p + "l1.W"], params[p + "l1.b"]));
    rows.push_back(relu(add_bias(h * params[p + "l2.W"], params[p + "l2.b"])));
  }
  return rows;
}

}  // namespace survseq

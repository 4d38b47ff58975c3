#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survseq/datamodel.hpp"
#include "survseq/recurrent.hpp"

namespace survseq {

/// Step-major, padded batch of encoder inputs. Rows are subjects; entry t of
/// each vector holds step t for every subject (zeros past a subject's end).
template <typename Scalar>
struct EncoderBatch {
  Index size = 0;
  Index steps = 0;
  Index covariates = 0;
  std::vector<Tensor<Scalar>> values;         // B x D
  std::vector<Tensor<Scalar>> mask;           // B x D
  std::vector<Tensor<Scalar>> delta;          // B x D
  std::vector<Tensor<Scalar>> last_observed;  // B x D
  std::vector<Tensor<Scalar>> valid;          // B x 1
  Tensor<Scalar> step_mask;                   // B x L, 1 on real steps
};

template <typename Scalar>
EncoderBatch<Scalar> make_encoder_batch(std::span<const EncoderInput* const> inputs) {
  EncoderBatch<Scalar> batch;
  batch.size = static_cast<Index>(inputs.size());
  if (batch.size == 0) return batch;
  batch.covariates = inputs.front()->values.cols();
  for (const auto* in : inputs) {
    if (in->steps() < 1) throw std::invalid_argument("encoder: sample with zero steps");
    if (in->values.cols() != batch.covariates) {
      throw ShapeError("make_encoder_batch", "covariate count " + std::to_string(in->values.cols()) + " vs " +
                                                 std::to_string(batch.covariates));
    }
    batch.steps = std::max(batch.steps, in->steps());
  }
  const Index B = batch.size, D = batch.covariates, L = batch.steps;
  batch.step_mask = Tensor<Scalar>::Zero(B, L);
  for (Index t = 0; t < L; ++t) {
    Tensor<Scalar> x = Tensor<Scalar>::Zero(B, D), m = x, d = x, last = x;
    Tensor<Scalar> valid = Tensor<Scalar>::Zero(B, 1);
    for (Index b = 0; b < B; ++b) {
      const auto* in = inputs[b];
      if (t >= in->steps()) continue;
      x.row(b) = in->values.row(t).template cast<Scalar>();
      m.row(b) = in->mask.row(t).template cast<Scalar>();
      d.row(b) = in->delta.row(t).template cast<Scalar>();
      last.row(b) = in->last_observed.row(t).template cast<Scalar>();
      valid(b, 0) = 1;
      batch.step_mask(b, t) = 1;
    }
    batch.values.push_back(std::move(x));
    batch.mask.push_back(std::move(m));
    batch.delta.push_back(std::move(d));
    batch.last_observed.push_back(std::move(last));
    batch.valid.push_back(std::move(valid));
  }
  return batch;
}

/// GRU-D layer weights: gates over (imputed input, decayed hidden, mask),
/// diagonal input decay and full hidden decay.
template <typename Scalar>
struct GruDWeights {
  GruWeights<Scalar> gru;        // input = imputed x (D x 3H)
  Var<Scalar> mask_weights;      // D x 3H
  Var<Scalar> input_decay_w;     // 1 x D
  Var<Scalar> input_decay_b;     // 1 x D
  Var<Scalar> hidden_decay_w;    // D x H
  Var<Scalar> hidden_decay_b;    // 1 x H
  Tensor<Scalar> empirical_mean; // 1 x D, not trained

  static GruDWeights bind(const Bindings<Scalar>& b, const std::string& prefix, Tensor<Scalar> mean) {
    return {GruWeights<Scalar>::bind(b, prefix),
            b[prefix + "V"],
            b[prefix + "decay_x_w"],
            b[prefix + "decay_x_b"],
            b[prefix + "decay_h_W"],
            b[prefix + "decay_h_b"],
            std::move(mean)};
  }
};

template <typename Scalar>
void add_grud_parameters(ParameterSet<Scalar>& params, const std::string& prefix, Index covariates, Index hidden) {
  add_gru_parameters(params, prefix, covariates, hidden);
  params.add(prefix + "V", Tensor<Scalar>::Zero(covariates, 3 * hidden));
  params.add(prefix + "decay_x_w", Tensor<Scalar>::Zero(1, covariates));
  params.add(prefix + "decay_x_b", Tensor<Scalar>::Zero(1, covariates));
  params.add(prefix + "decay_h_W", Tensor<Scalar>::Zero(covariates, hidden));
  params.add(prefix + "decay_h_b", Tensor<Scalar>::Zero(1, hidden));
}

/// gamma_x = exp(-max(0, w * delta + b)), elementwise with per-covariate w.
template <typename Scalar>
Var<Scalar> input_decay(const Var<Scalar>& delta, const Var<Scalar>& w, const Var<Scalar>& b) {
  return exp(-relu(add_bias(scale_columns(delta, w), b)));
}

/// gamma_h = exp(-max(0, delta W + b)).
template <typename Scalar>
Var<Scalar> hidden_decay(const Var<Scalar>& delta, const Var<Scalar>& W, const Var<Scalar>& b) {
  return exp(-relu(add_bias(delta * W, b)));
}

/// x_hat = m * x + (1 - m) * (gamma * x_last + (1 - gamma) * mean).
/// Rewritten as base + spread * gamma with the data-only terms folded into
/// constants, since only gamma carries a gradient.
template <typename Scalar>
Var<Scalar> impute(const Var<Scalar>& gamma, const Tensor<Scalar>& x, const Tensor<Scalar>& mask,
                   const Tensor<Scalar>& last_observed, const Tensor<Scalar>& mean_row) {
  Tape<Scalar>& tape = gamma.tape();
  const auto missing = (Scalar(1) - mask.array());
  Tensor<Scalar> mean = mean_row.replicate(x.rows(), 1);
  Tensor<Scalar> base = (mask.array() * x.array() + missing * mean.array()).matrix();
  Tensor<Scalar> spread = (missing * (last_observed.array() - mean.array())).matrix();
  return tape.constant(std::move(base)) + cwise_product(tape.constant(std::move(spread)), gamma);
}

/// One GRU-D step on a batch.
template <typename Scalar>
Var<Scalar> grud_step(const Tensor<Scalar>& x, const Tensor<Scalar>& mask, const Tensor<Scalar>& delta,
                      const Tensor<Scalar>& last_observed, const Var<Scalar>& h_prev, const GruDWeights<Scalar>& w) {
  Tape<Scalar>& tape = h_prev.tape();
  Var<Scalar> d = tape.constant(delta);
  Var<Scalar> m = tape.constant(mask);
  Var<Scalar> gamma_x = input_decay(d, w.input_decay_w, w.input_decay_b);
  Var<Scalar> x_hat = impute(gamma_x, x, mask, last_observed, w.empirical_mean);
  Var<Scalar> h_hat = cwise_product(hidden_decay(d, w.hidden_decay_w, w.hidden_decay_b), h_prev);
  return gru_cell(x_hat, h_hat, w.gru, m * w.mask_weights);
}

template <typename Scalar>
struct EncoderOutput {
  std::vector<Var<Scalar>> states;  // per step, B x H, top layer
  Var<Scalar> memory;               // B x (L*H), states packed step-major
  Var<Scalar> final;                // B x H, state at each subject's last real step
};

/// GRU-D layer followed by `layers - 1` plain gated-recurrent layers.
/// Padded steps carry the previous state forward unchanged.
template <typename Scalar>
EncoderOutput<Scalar> encode(Tape<Scalar>& tape, const Bindings<Scalar>& params, const EncoderBatch<Scalar>& batch,
                             Index hidden, int layers) {
  if (batch.size == 0 || batch.steps == 0) throw std::invalid_argument("encode: empty batch");
  const auto w = GruDWeights<Scalar>::bind(params, "encoder.grud.", Tensor<Scalar>::Zero(1, batch.covariates));
  std::vector<Var<Scalar>> states;
  Var<Scalar> h = tape.constant(Tensor<Scalar>::Zero(batch.size, hidden));
  for (Index t = 0; t < batch.steps; ++t) {
    Var<Scalar> next = grud_step(batch.values[t], batch.mask[t], batch.delta[t], batch.last_observed[t], h, w);
    h = select_rows(batch.valid[t], next, h);
    states.push_back(h);
  }
  for (int layer = 1; layer < layers; ++layer) {
    const auto g = GruWeights<Scalar>::bind(params, "encoder.gru" + std::to_string(layer) + ".");
    Var<Scalar> hl = tape.constant(Tensor<Scalar>::Zero(batch.size, hidden));
    for (Index t = 0; t < batch.steps; ++t) {
      hl = select_rows(batch.valid[t], gru_cell(states[t], hl, g), hl);
      states[t] = hl;
    }
  }
  EncoderOutput<Scalar> out;
  out.final = states.back();
  out.memory = states.size() == 1 ? states.front() : concat_cols(states);
  out.states = std::move(states);
  return out;
}

}  // namespace survseq

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "survseq/decoder.hpp"
#include "survseq/encoder.hpp"
#include "survseq/mlp_head.hpp"

namespace survseq {

enum class DecoderKind { recurrent, mlp };

struct ModelShape {
  Index covariates = 0;
  int events = 2;
  Index horizon = 1;
  Index hidden = 64;
  int encoder_layers = 1;
  int decoder_layers = 1;
  DecoderKind decoder = DecoderKind::recurrent;
  Index mlp_width = 0;  // 0: matched to the recurrent block

  Index effective_mlp_width() const { return mlp_width > 0 ? mlp_width : matched_mlp_width(hidden, horizon); }
  bool operator==(const ModelShape&) const = default;
};

/// Zero-filled parameter table with every tensor the shape calls for.
template <typename Scalar>
ParameterSet<Scalar> model_parameter_layout(const ModelShape& s) {
  ParameterSet<Scalar> params;
  add_grud_parameters(params, "encoder.grud.", s.covariates, s.hidden);
  for (int l = 1; l < s.encoder_layers; ++l) add_gru_parameters(params, "encoder.gru" + std::to_string(l) + ".", s.hidden, s.hidden);
  if (s.decoder == DecoderKind::recurrent) {
    add_decoder_parameters(params, s.events, s.hidden, s.decoder_layers);
  } else {
    add_mlp_parameters(params, s.events, s.hidden, s.effective_mlp_width(), s.horizon);
  }
  return params;
}

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

/// Seeded initialization: Glorot-uniform matrices, zero biases, small
/// positive output biases so the relu heads start active, and small positive
/// decay rates.
inline ParameterSet<double> init_model_parameters(const ModelShape& shape, std::uint64_t seed) {
  auto params = model_parameter_layout<double>(shape);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, value] = params.entry(i);
    if (detail::ends_with(name, "dense.b") || detail::ends_with(name, "l2.b")) {
      value.setConstant(0.1);
    } else if (detail::ends_with(name, ".b") || detail::ends_with(name, "decay_x_b") ||
               detail::ends_with(name, "decay_h_b") || detail::ends_with(name, "l1.b")) {
      value.setZero();
    } else if (detail::ends_with(name, "decay_x_w")) {
      std::uniform_real_distribution<double> u(0.0, 0.1);
      for (Index j = 0; j < value.size(); ++j) value.data()[j] = u(rng);
    } else {
      const double limit = std::sqrt(6.0 / static_cast<double>(value.rows() + value.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Index j = 0; j < value.size(); ++j) value.data()[j] = u(rng);
    }
  }
  return params;
}

/// Joint PDF of a batch: B x (events * horizon), event-major.
template <typename Scalar>
Var<Scalar> forward(Tape<Scalar>& tape, const Bindings<Scalar>& params, const ModelShape& shape,
                    const EncoderBatch<Scalar>& batch, const StepHook<Scalar>& hook = {}) {
  const auto enc = encode(tape, params, batch, shape.hidden, shape.encoder_layers);
  std::vector<Var<Scalar>> rows;
  if (shape.decoder == DecoderKind::recurrent) {
    for (int k = 0; k < shape.events; ++k) {
      rows.push_back(decode_block(k, enc, batch.step_mask, params, shape.horizon, shape.decoder_layers, hook));
    }
  } else {
    rows = mlp_decode(enc, batch.step_mask, params, shape.events);
  }
  return joint_head(rows);
}

/// Gradient-free forward pass in double precision.
inline std::vector<PdfMatrix> predict_pdfs(const ParameterSet<double>& params, const ModelShape& shape,
                                           std::span<const EncoderInput* const> inputs) {
  std::vector<PdfMatrix> out;
  if (inputs.empty()) return out;
  Tape<double> tape;
  Bindings<double> b(tape, params, false);
  const auto batch = make_encoder_batch<double>(inputs);
  const Var<double> pdf = forward(tape, b, shape, batch);
  out.reserve(inputs.size());
  for (Index r = 0; r < pdf.rows(); ++r) out.push_back(PdfMatrix::from_flat(pdf.value().row(r), shape.events));
  return out;
}

}  // namespace survseq

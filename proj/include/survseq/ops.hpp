#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "survseq/tape.hpp"

// Differentiable primitives. Each records its value on the operands' tape
// together with the reverse-mode rule for its inputs.

namespace survseq {

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(op, shape_string(a.value()) + " vs " + shape_string(b.value()));
  }
}

template <typename Scalar>
void require_same_tape(const char* op, const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument(std::string(op) + ": operands on different tapes");
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul", shape_string(a.value()) + " * " + shape_string(b.value()));
  }
  Tensor<Scalar> out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return matmul(a, b);
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("add", a, b);
  detail::require_same_shape("add", a, b);
  Tensor<Scalar> out = a.value() + b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("subtract", a, b);
  detail::require_same_shape("subtract", a, b);
  Tensor<Scalar> out = a.value() - b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  Tensor<Scalar> out = -a.value();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) { t.accumulate(a, -g); });
}

/// a + bias, with the 1 x n bias broadcast over rows.
template <typename Scalar>
Var<Scalar> add_bias(const Var<Scalar>& a, const Var<Scalar>& bias) {
  detail::require_same_tape("add_bias", a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_bias", shape_string(a.value()) + " + bias " + shape_string(bias.value()));
  }
  Tensor<Scalar> out = a.value().rowwise() + bias.value().row(0);
  return a.tape().record(std::move(out), {a, bias},
                         [a, bias](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                           t.accumulate(a, g);
                           if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
                         });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> cwise_product(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("cwise_product", a, b);
  detail::require_same_shape("cwise_product", a, b);
  Tensor<Scalar> out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

/// a with every row multiplied elementwise by the 1 x n row vector.
template <typename Scalar>
Var<Scalar> scale_columns(const Var<Scalar>& a, const Var<Scalar>& row) {
  detail::require_same_tape("scale_columns", a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("scale_columns", shape_string(a.value()) + " by " + shape_string(row.value()));
  }
  Tensor<Scalar> out = a.value().array().rowwise() * row.value().array().row(0);
  return a.tape().record(std::move(out), {a, row},
                         [a, row](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                           if (t.requires_grad(a)) {
                             Tensor<Scalar> ga = g.array().rowwise() * t.value(row).array().row(0);
                             t.accumulate(a, ga);
                           }
                           if (t.requires_grad(row)) {
                             t.accumulate(row, g.cwiseProduct(t.value(a)).colwise().sum());
                           }
                         });
}

/// a with every row multiplied by the matching entry of the n x 1 column.
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& a, const Var<Scalar>& col) {
  detail::require_same_tape("scale_rows", a, col);
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ShapeError("scale_rows", shape_string(a.value()) + " by " + shape_string(col.value()));
  }
  Tensor<Scalar> out = a.value().array().colwise() * col.value().array().col(0);
  return a.tape().record(std::move(out), {a, col},
                         [a, col](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                           if (t.requires_grad(a)) {
                             Tensor<Scalar> ga = g.array().colwise() * t.value(col).array().col(0);
                             t.accumulate(a, ga);
                           }
                           if (t.requires_grad(col)) {
                             t.accumulate(col, g.cwiseProduct(t.value(a)).rowwise().sum());
                           }
                         });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar s) {
  Tensor<Scalar> out = a.value() * s;
  return a.tape().record(std::move(out), {a},
                         [a, s](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) { t.accumulate(a, g * s); });
}

/// 1 - a.
template <typename Scalar>
Var<Scalar> one_minus(const Var<Scalar>& a) {
  Tensor<Scalar> out = (Scalar(1) - a.value().array()).matrix();
  return a.tape().record(std::move(out), {a},
                         [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) { t.accumulate(a, -g); });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Tensor<Scalar> out = (Scalar(1) / (Scalar(1) + (-a.value().array()).exp())).matrix();
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    t.accumulate(a, (g.array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value().array().tanh().matrix();
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    t.accumulate(a, (g.array() * (Scalar(1) - y.array().square())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    t.accumulate(a, (t.value(a).array() > Scalar(0)).select(g, Scalar(0)));
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  Tensor<Scalar> out = a.value().array().exp().matrix();
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    t.accumulate(a, g.cwiseProduct(y));
  });
}

/// Sum of all entries, as a 1x1 value.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  Tensor<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    const auto& v = t.value(a);
    t.accumulate(a, Tensor<Scalar>::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols", "row count " + std::to_string(p.rows()) + " vs " + std::to_string(rows));
    }
    cols += p.cols();
  }
  Tensor<Scalar> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return parts.front().tape().record(std::move(out), parts,
                                     [parts](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                                       Index off = 0;
                                       for (const auto& p : parts) {
                                         const Index c = t.value(p).cols();
                                         if (t.requires_grad(p)) t.accumulate(p, g.middleCols(off, c));
                                         off += c;
                                       }
                                     });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols", "columns [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") of " + shape_string(a.value()));
  }
  Tensor<Scalar> out = a.value().middleCols(start, count);
  return a.tape().record(std::move(out), {a},
                         [a, start, count](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                           const auto& v = t.value(a);
                           Tensor<Scalar> full = Tensor<Scalar>::Zero(v.rows(), v.cols());
                           full.middleCols(start, count) = g;
                           t.accumulate(a, full);
                         });
}

namespace detail {

template <typename Scalar>
Tensor<Scalar> softmax_rows_value(const Tensor<Scalar>& a, const Tensor<Scalar>* mask) {
  Tensor<Scalar> out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) {
    Scalar hi = -std::numeric_limits<Scalar>::infinity();
    for (Index c = 0; c < a.cols(); ++c) {
      if (mask == nullptr || (*mask)(r, c) != Scalar(0)) hi = std::max(hi, a(r, c));
    }
    Scalar total = 0;
    for (Index c = 0; c < a.cols(); ++c) {
      const bool on = mask == nullptr || (*mask)(r, c) != Scalar(0);
      out(r, c) = on ? std::exp(a(r, c) - hi) : Scalar(0);
      total += out(r, c);
    }
    out.row(r) /= total;
  }
  return out;
}

}  // namespace detail

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& a) {
  return a.tape().record(detail::softmax_rows_value<Scalar>(a.value(), nullptr), {a},
                         [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                           Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
                           Tensor<Scalar> ga = y.cwiseProduct((g.colwise() - dot));
                           t.accumulate(a, ga);
                         });
}

/// Row-wise softmax restricted to entries where `mask` is nonzero; masked
/// entries get probability 0. Every row needs at least one unmasked entry.
template <typename Scalar>
Var<Scalar> masked_softmax_rows(const Var<Scalar>& a, const Tensor<Scalar>& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) {
    throw ShapeError("masked_softmax_rows", shape_string(a.value()) + " mask " + shape_string(mask));
  }
  return a.tape().record(detail::softmax_rows_value<Scalar>(a.value(), &mask), {a},
                         [a](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
                           Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
                           Tensor<Scalar> ga = y.cwiseProduct((g.colwise() - dot));
                           t.accumulate(a, ga);
                         });
}

/// Per-row dot products between a query and each step of a packed sequence.
/// memory is B x (L*H) with step l of row b in columns [l*H, (l+1)*H);
/// query is B x H. Result is B x L.
template <typename Scalar>
Var<Scalar> sequence_dot(const Var<Scalar>& memory, const Var<Scalar>& query) {
  detail::require_same_tape("sequence_dot", memory, query);
  const Index hidden = query.cols();
  if (memory.rows() != query.rows() || hidden == 0 || memory.cols() % hidden != 0) {
    throw ShapeError("sequence_dot", "memory " + shape_string(memory.value()) + " query " + shape_string(query.value()));
  }
  const Index steps = memory.cols() / hidden;
  using RowBlock = Eigen::Map<const Tensor<Scalar>>;
  Tensor<Scalar> out(memory.rows(), steps);
  for (Index b = 0; b < memory.rows(); ++b) {
    RowBlock m(memory.value().row(b).data(), steps, hidden);
    out.row(b).noalias() = (m * query.value().row(b).transpose()).transpose();
  }
  return memory.tape().record(
      std::move(out), {memory, query},
      [memory, query, steps, hidden](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
        const auto& mem = t.value(memory);
        const auto& q = t.value(query);
        if (t.requires_grad(memory)) {
          Tensor<Scalar> gm(mem.rows(), mem.cols());
          for (Index b = 0; b < mem.rows(); ++b) {
            Eigen::Map<Tensor<Scalar>> block(gm.row(b).data(), steps, hidden);
            block.noalias() = g.row(b).transpose() * q.row(b);
          }
          t.accumulate(memory, gm);
        }
        if (t.requires_grad(query)) {
          Tensor<Scalar> gq(q.rows(), hidden);
          for (Index b = 0; b < mem.rows(); ++b) {
            Eigen::Map<const Tensor<Scalar>> block(mem.row(b).data(), steps, hidden);
            gq.row(b).noalias() = g.row(b) * block;
          }
          t.accumulate(query, gq);
        }
      });
}

/// Per-row weighted sum of the steps of a packed sequence: weights is B x L,
/// memory B x (L*H), result B x H.
template <typename Scalar>
Var<Scalar> sequence_weighted_sum(const Var<Scalar>& memory, const Var<Scalar>& weights) {
  detail::require_same_tape("sequence_weighted_sum", memory, weights);
  const Index steps = weights.cols();
  if (memory.rows() != weights.rows() || steps == 0 || memory.cols() % steps != 0) {
    throw ShapeError("sequence_weighted_sum",
                     "memory " + shape_string(memory.value()) + " weights " + shape_string(weights.value()));
  }
  const Index hidden = memory.cols() / steps;
  Tensor<Scalar> out(memory.rows(), hidden);
  for (Index b = 0; b < memory.rows(); ++b) {
    Eigen::Map<const Tensor<Scalar>> block(memory.value().row(b).data(), steps, hidden);
    out.row(b).noalias() = weights.value().row(b) * block;
  }
  return memory.tape().record(
      std::move(out), {memory, weights},
      [memory, weights, steps, hidden](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
        const auto& mem = t.value(memory);
        const auto& w = t.value(weights);
        if (t.requires_grad(memory)) {
          Tensor<Scalar> gm(mem.rows(), mem.cols());
          for (Index b = 0; b < mem.rows(); ++b) {
            Eigen::Map<Tensor<Scalar>> block(gm.row(b).data(), steps, hidden);
            block.noalias() = w.row(b).transpose() * g.row(b);
          }
          t.accumulate(memory, gm);
        }
        if (t.requires_grad(weights)) {
          Tensor<Scalar> gw(w.rows(), steps);
          for (Index b = 0; b < mem.rows(); ++b) {
            Eigen::Map<const Tensor<Scalar>> block(mem.row(b).data(), steps, hidden);
            gw.row(b).noalias() = (block * g.row(b).transpose()).transpose();
          }
          t.accumulate(weights, gw);
        }
      });
}

/// Row-wise select: rows where `keep` (B x 1, entries 0 or 1) is 1 come from
/// `a`, the others from `b`.
template <typename Scalar>
Var<Scalar> select_rows(const Tensor<Scalar>& keep, const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_tape("select_rows", a, b);
  detail::require_same_shape("select_rows", a, b);
  if (keep.cols() != 1 || keep.rows() != a.rows()) {
    throw ShapeError("select_rows", "selector " + shape_string(keep) + " for " + shape_string(a.value()));
  }
  Tensor<Scalar> out(a.rows(), a.cols());
  for (Index r = 0; r < a.rows(); ++r) out.row(r) = keep(r, 0) != Scalar(0) ? a.value().row(r) : b.value().row(r);
  return a.tape().record(std::move(out), {a, b}, [keep, a, b](Tape<Scalar>& t, const Tensor<Scalar>& y, const Tensor<Scalar>& g) {
    Tensor<Scalar> ga = g.array().colwise() * keep.array().col(0);
    Tensor<Scalar> gb = g - ga;
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

}  // namespace survseq

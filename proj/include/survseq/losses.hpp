#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survseq/ops.hpp"

namespace survseq {

enum class RankingVariant { eq4, eq5 };

/// Training target of one subject: event 0 means censored at `time`.
struct SurvivalLabel {
  int event = 0;
  double time = 0;
  Index bin = 0;

  bool censored() const { return event == 0; }
};

/// Ordered pair for the ranking term: `first` is uncensored with event
/// `event` and strictly earlier than `second`'s event or censoring time.
struct RankingPair {
  Index first = 0;
  Index second = 0;
  int event = 0;

  bool operator==(const RankingPair&) const = default;
};

inline std::vector<RankingPair> build_pairs(std::span<const SurvivalLabel> labels) {
  std::vector<RankingPair> pairs;
  const Index n = static_cast<Index>(labels.size());
  for (Index i = 0; i < n; ++i) {
    if (labels[i].censored()) continue;
    for (Index j = 0; j < n; ++j) {
      if (labels[i].time < labels[j].time) pairs.push_back({i, j, labels[i].event});
    }
  }
  return pairs;
}

/// Per-event cumulative sums of a B x (K*T) joint PDF, same layout.
template <typename Scalar>
Tensor<Scalar> event_cdf(const Tensor<Scalar>& pdf, int events) {
  const Index horizon = pdf.cols() / events;
  Tensor<Scalar> out(pdf.rows(), pdf.cols());
  for (Index b = 0; b < pdf.rows(); ++b) {
    for (int k = 0; k < events; ++k) {
      Scalar acc = 0;
      for (Index t = 0; t < horizon; ++t) out(b, k * horizon + t) = acc += pdf(b, k * horizon + t);
    }
  }
  return out;
}

namespace detail {

template <typename Scalar>
void check_loss_inputs(const char* op, const Var<Scalar>& pdf, std::size_t labels, int events) {
  if (events < 1 || pdf.cols() % events != 0 || pdf.rows() != static_cast<Index>(labels)) {
    throw ShapeError(op, "pdf " + shape_string(pdf.value()) + " with " + std::to_string(labels) + " labels and " +
                             std::to_string(events) + " events");
  }
}

}  // namespace detail

/// Negative log-likelihood summed over the batch: -log p[event][bin] for
/// uncensored subjects, -log(1 - sum_k CDF_k(bin)) for censored ones.
template <typename Scalar>
Var<Scalar> log_likelihood(const Var<Scalar>& pdf, std::span<const SurvivalLabel> labels, int events,
                           double eps = 1e-12) {
  detail::check_loss_inputs("log_likelihood", pdf, labels.size(), events);
  const Index horizon = pdf.cols() / events;
  const Tensor<Scalar>& p = pdf.value();
  std::vector<Scalar> survival(labels.size(), Scalar(0));
  double total = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const auto& l = labels[b];
    if (l.bin < 0 || l.bin >= horizon || l.event < 0 || l.event > events) {
      throw std::out_of_range("log_likelihood: label outside the pdf");
    }
    if (!l.censored()) {
      total -= std::log(static_cast<double>(p(b, (l.event - 1) * horizon + l.bin)) + eps);
    } else {
      double mass = 0;
      for (int k = 0; k < events; ++k) mass += static_cast<double>(p.row(b).segment(k * horizon, l.bin + 1).sum());
      const double s = std::max(0.0, 1.0 - mass);
      survival[b] = static_cast<Scalar>(s);
      total -= std::log(s + eps);
    }
  }
  Tensor<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(total);
  std::vector<SurvivalLabel> saved(labels.begin(), labels.end());
  return pdf.tape().record(
      std::move(out), {pdf},
      [pdf, saved = std::move(saved), survival = std::move(survival), events, horizon, eps](
          Tape<Scalar>& t, const Tensor<Scalar>&, const Tensor<Scalar>& g) {
        const Tensor<Scalar>& p = t.value(pdf);
        Tensor<Scalar> gp = Tensor<Scalar>::Zero(p.rows(), p.cols());
        for (std::size_t b = 0; b < saved.size(); ++b) {
          const auto& l = saved[b];
          if (!l.censored()) {
            const Index c = (l.event - 1) * horizon + l.bin;
            gp(b, c) = static_cast<Scalar>(-1.0 / (static_cast<double>(p(b, c)) + eps));
          } else {
            const auto d = static_cast<Scalar>(1.0 / (static_cast<double>(survival[b]) + eps));
            for (int k = 0; k < events; ++k) gp.row(b).segment(k * horizon, l.bin + 1).array() += d;
          }
        }
        t.accumulate(pdf, gp * g(0, 0));
      });
}

/// Ranking term -(1/|pairs|) sum exp(CDF_k(t|first) - CDF_k(t|second)).
/// eq4 compares at the first subject's event bin only; eq5 at every bin of
/// the horizon (not averaged over bins). No pairs gives 0.
template <typename Scalar>
Var<Scalar> ranking_loss(const Var<Scalar>& pdf, std::span<const SurvivalLabel> labels,
                         std::span<const RankingPair> pairs, int events, RankingVariant variant) {
  detail::check_loss_inputs("ranking_loss", pdf, labels.size(), events);
  const Index horizon = pdf.cols() / events;
  const Tensor<Scalar> cdf = event_cdf(pdf.value(), events);
  const double norm = pairs.empty() ? 0.0 : 1.0 / static_cast<double>(pairs.size());
  // Gradient with respect to the CDF, turned into a PDF gradient in backward.
  Tensor<Scalar> gc = Tensor<Scalar>::Zero(cdf.rows(), cdf.cols());
  double total = 0;
  for (const auto& pr : pairs) {
    if (pr.first >= cdf.rows() || pr.second >= cdf.rows() || pr.event < 1 || pr.event > events) {
      throw std::out_of_range("ranking_loss: pair outside the batch");
    }
    const Index base = (pr.event - 1) * horizon;
    Index from = 0, to = horizon;
    if (variant == RankingVariant::eq4) {
      from = labels[pr.first].bin;
      to = from + 1;
    }
    for (Index t = from; t < to; ++t) {
      const double e = std::exp(static_cast<double>(cdf(pr.first, base + t)) - static_cast<double>(cdf(pr.second, base + t)));
      total -= norm * e;
      gc(pr.first, base + t) -= static_cast<Scalar>(norm * e);
      gc(pr.second, base + t) += static_cast<Scalar>(norm * e);
    }
  }
  Tensor<Scalar> out(1, 1);
  out(0, 0) = static_cast<Scalar>(total);
  return pdf.tape().record(std::move(out), {pdf},
                           [pdf, gc = std::move(gc), events, horizon](Tape<Scalar>& t, const Tensor<Scalar>&,
                                                                      const Tensor<Scalar>& g) {
                             // d/dp of a cumulative sum is a reverse cumulative sum.
                             Tensor<Scalar> gp(gc.rows(), gc.cols());
                             for (Index b = 0; b < gc.rows(); ++b) {
                               for (int k = 0; k < events; ++k) {
                                 Scalar acc = 0;
                                 for (Index s = horizon - 1; s >= 0; --s) gp(b, k * horizon + s) = acc += gc(b, k * horizon + s);
                               }
                             }
                             t.accumulate(pdf, gp * g(0, 0));
                           });
}

struct LossWeights {
  double likelihood = 1.0;
  double ranking = 0.0;
  RankingVariant variant = RankingVariant::eq5;
};

template <typename Scalar>
struct LossTerms {
  Var<Scalar> total;
  double likelihood = 0;
  double ranking = 0;
};

/// w_l * likelihood + w_r * ranking, with pairs drawn from this batch.
template <typename Scalar>
LossTerms<Scalar> total_loss(const Var<Scalar>& pdf, std::span<const SurvivalLabel> labels, int events,
                             const LossWeights& w) {
  if (w.likelihood < 0 || w.ranking < 0 || (w.likelihood == 0 && w.ranking == 0)) {
    throw std::invalid_argument("loss weights must be non-negative and not both zero");
  }
  LossTerms<Scalar> out;
  Var<Scalar> ll = log_likelihood(pdf, labels, events);
  out.likelihood = static_cast<double>(ll.value()(0, 0));
  out.total = scale(ll, static_cast<Scalar>(w.likelihood));
  if (w.ranking > 0) {
    const auto pairs = build_pairs(labels);
    Var<Scalar> rk = ranking_loss(pdf, labels, std::span<const RankingPair>(pairs), events, w.variant);
    out.ranking = static_cast<double>(rk.value()(0, 0));
    out.total = out.total + scale(rk, static_cast<Scalar>(w.ranking));
  }
  return out;
}

}  // namespace survseq

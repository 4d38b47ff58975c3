#include "survseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace survseq {

std::optional<double> mean_absolute_error(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("mean_absolute_error: length mismatch");
  if (predicted.empty()) return std::nullopt;
  double acc = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) acc += std::abs(predicted[i] - truth[i]);
  return acc / static_cast<double>(predicted.size());
}

std::optional<double> ConcordanceCounts::index() const {
  if (comparable == 0) return std::nullopt;
  return static_cast<double>(2 * concordant + ties) / static_cast<double>(2 * comparable);
}

namespace {

// Counts of inserted ranks; prefix(r) = number inserted with rank < r.
class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t rank) {
    for (std::size_t i = rank + 1; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
  }
  long long prefix(std::size_t rank) const {
    long long s = 0;
    for (std::size_t i = rank; i > 0; i -= i & (~i + 1)) s += tree_[i];
    return s;
  }

 private:
  std::vector<long long> tree_;
};

}  // namespace

ConcordanceCounts concordance_counts(std::span<const double> risk, std::span<const SurvivalLabel> labels, int event,
                                     double horizon_time) {
  if (risk.size() != labels.size()) throw std::invalid_argument("concordance: length mismatch");
  const std::size_t n = risk.size();
  std::vector<double> sorted_risk(risk.begin(), risk.end());
  std::sort(sorted_risk.begin(), sorted_risk.end());
  sorted_risk.erase(std::unique(sorted_risk.begin(), sorted_risk.end()), sorted_risk.end());
  auto rank_of = [&](double r) {
    return static_cast<std::size_t>(std::lower_bound(sorted_risk.begin(), sorted_risk.end(), r) - sorted_risk.begin());
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a].time > labels[b].time; });

  // Walk from the latest time down; everyone already inserted is strictly
  // later than the current group.
  ConcordanceCounts c;
  Fenwick later(sorted_risk.size());
  long long inserted = 0;
  for (std::size_t g = 0; g < n;) {
    std::size_t end = g;
    while (end < n && labels[order[end]].time == labels[order[g]].time) ++end;
    for (std::size_t p = g; p < end; ++p) {
      const std::size_t i = order[p];
      if (labels[i].event != event || labels[i].time > horizon_time) continue;
      const std::size_t r = rank_of(risk[i]);
      const long long below = later.prefix(r);
      const long long not_above = later.prefix(r + 1);
      c.concordant += below;
      c.ties += not_above - below;
      c.comparable += inserted;
    }
    for (std::size_t p = g; p < end; ++p) later.add(rank_of(risk[order[p]]));
    inserted += static_cast<long long>(end - g);
    g = end;
  }
  return c;
}

std::optional<double> time_dependent_ci(std::span<const double> risk, std::span<const SurvivalLabel> labels,
                                        int event, double horizon_time) {
  return concordance_counts(risk, labels, event, horizon_time).index();
}

std::vector<double> quantiles(std::vector<double> values, std::span<const double> levels) {
  if (values.empty()) throw std::invalid_argument("quantiles: no values");
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double p : levels) {
    if (!(p >= 0 && p <= 1)) throw std::invalid_argument("quantiles: level outside [0, 1]");
    const double h = (static_cast<double>(values.size()) - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    out.push_back(values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]));
  }
  return out;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson_correlation: need two equal-length samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0;
  return sxy / std::sqrt(sxx * syy);
}

const MetricCell* FoldMetrics::find(int event, double level) const {
  for (const auto& c : cells)
    if (c.event == event && c.level == level) return &c;
  return nullptr;
}

FoldMetrics evaluate_split(std::span<const SurvivalLabel> labels, std::span<const PdfMatrix> pdfs, double bin_width,
                           std::span<const double> levels) {
  if (labels.size() != pdfs.size()) throw std::invalid_argument("evaluate_split: labels and predictions differ in count");
  FoldMetrics out;
  out.levels.assign(levels.begin(), levels.end());
  if (pdfs.empty()) return out;
  const int events = pdfs.front().events();
  const Index horizon = pdfs.front().horizon();

  double rough = 0;
  for (const auto& p : pdfs) rough += p.roughness();
  out.roughness = rough / static_cast<double>(pdfs.size());

  std::vector<double> event_times;
  for (const auto& l : labels)
    if (!l.censored()) event_times.push_back(l.time);
  if (event_times.empty()) {
    // Nothing uncensored: buckets and comparable pairs are all empty.
    for (int k = 1; k <= events; ++k)
      for (double level : levels) out.cells.push_back({k, level, 0, std::nullopt, std::nullopt, 0});
    return out;
  }
  out.thresholds = quantiles(event_times, levels);

  for (int k = 1; k <= events; ++k) {
    for (std::size_t q = 0; q < levels.size(); ++q) {
      const double threshold = out.thresholds[q];
      MetricCell cell{k, levels[q], threshold, std::nullopt, std::nullopt, 0};
      std::vector<double> pred, truth;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].event != k || labels[i].time > threshold) continue;
        pred.push_back(pdfs[i].predicted_time(k) * bin_width);
        truth.push_back(static_cast<double>(labels[i].bin) * bin_width);
      }
      cell.subjects = static_cast<Index>(pred.size());
      cell.mae = mean_absolute_error(pred, truth);

      const Index bin = std::min<Index>(static_cast<Index>(std::floor(threshold / bin_width)), horizon - 1);
      std::vector<double> risk(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) risk[i] = pdfs[i].cdf(k, bin);
      cell.ci = time_dependent_ci(risk, labels, k, threshold);
      out.cells.push_back(cell);
    }
  }
  return out;
}

std::optional<Aggregate> aggregate(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  Aggregate a;
  a.count = static_cast<int>(values.size());
  a.mean = std::accumulate(values.begin(), values.end(), 0.0) / a.count;
  if (a.count < 2) return a;
  double ss = 0;
  for (double v : values) ss += (v - a.mean) * (v - a.mean);
  a.stddev = std::sqrt(ss / (a.count - 1));
  const double half = 1.96 * *a.stddev / std::sqrt(static_cast<double>(a.count));
  a.lower = a.mean - half;
  a.upper = a.mean + half;
  return a;
}

std::vector<AggregateRow> aggregate_folds(std::span<const FoldMetrics> folds) {
  // Keyed by (event, level index, metric) to keep a stable order.
  std::map<std::tuple<int, std::size_t, int>, std::vector<double>> values;
  std::map<std::size_t, double> level_of;
  for (const auto& f : folds) {
    for (const auto& c : f.cells) {
      const auto it = std::find(f.levels.begin(), f.levels.end(), c.level);
      const auto li = static_cast<std::size_t>(it - f.levels.begin());
      level_of[li] = c.level;
      auto& mae = values[{c.event, li, 0}];
      auto& ci = values[{c.event, li, 1}];
      if (c.mae) mae.push_back(*c.mae);
      if (c.ci) ci.push_back(*c.ci);
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, v] : values) {
    const auto a = aggregate(v);
    if (!a) continue;
    const auto& [event, li, metric] = key;
    rows.push_back({event, level_of[li], metric == 0 ? "mae" : "ci", *a});
  }
  return rows;
}

}  // namespace survseq

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survseq/decoder.hpp"
#include "survseq/losses.hpp"

namespace survseq {

/// Mean |predicted - truth|; absent when there is nothing to average.
std::optional<double> mean_absolute_error(std::span<const double> predicted, std::span<const double> truth);

struct ConcordanceCounts {
  long long concordant = 0;
  long long ties = 0;
  long long comparable = 0;

  /// (concordant + ties / 2) / comparable; absent without comparable pairs.
  std::optional<double> index() const;
};

/// Time-dependent concordance for `event` truncated at `horizon_time`:
/// over pairs with labels[i].event == event, time_i < time_j and
/// time_i <= horizon_time, how often risk_i > risk_j (ties count half).
/// `risk` is each subject's predicted CDF of `event` at the truncation time.
/// O(n log n).
ConcordanceCounts concordance_counts(std::span<const double> risk, std::span<const SurvivalLabel> labels, int event,
                                     double horizon_time);
std::optional<double> time_dependent_ci(std::span<const double> risk, std::span<const SurvivalLabel> labels,
                                        int event, double horizon_time);

/// Linear interpolation between order statistics (h = (n-1) p).
std::vector<double> quantiles(std::vector<double> values, std::span<const double> levels);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

inline const std::vector<double>& default_quantile_levels() {
  static const std::vector<double> levels{0.25, 0.50, 0.75, 1.00};
  return levels;
}

struct MetricCell {
  int event = 0;
  double level = 0;
  double threshold = 0;
  std::optional<double> mae;
  std::optional<double> ci;
  Index subjects = 0;  // uncensored subjects of this event inside the bucket
};

/// Metrics of one held-out split.
struct FoldMetrics {
  std::vector<double> levels;
  std::vector<double> thresholds;
  std::vector<MetricCell> cells;  // event-major, then level
  double roughness = 0;           // mean |p[k][t+1] - p[k][t]|

  const MetricCell* find(int event, double level) const;
};

/// Thresholds are quantiles of the uncensored event times of this split;
/// buckets are cumulative (time <= threshold). MAE compares expected bins
/// with observed bins, scaled to time units by `bin_width`; CI is truncated
/// at each threshold.
FoldMetrics evaluate_split(std::span<const SurvivalLabel> labels, std::span<const PdfMatrix> pdfs, double bin_width,
                           std::span<const double> levels = default_quantile_levels());

struct Aggregate {
  double mean = 0;
  std::optional<double> stddev;  // sample standard deviation
  std::optional<double> lower;   // mean -/+ 1.96 std / sqrt(n)
  std::optional<double> upper;
  int count = 0;
};

/// Fewer than two values: mean only. Empty: absent.
std::optional<Aggregate> aggregate(std::span<const double> values);

struct AggregateRow {
  int event = 0;
  double level = 0;
  std::string metric;  // "mae" or "ci"
  Aggregate value;
};

/// Per (event, level, metric) across folds; folds where a metric is absent
/// are skipped for that metric.
std::vector<AggregateRow> aggregate_folds(std::span<const FoldMetrics> folds);

}  // namespace survseq

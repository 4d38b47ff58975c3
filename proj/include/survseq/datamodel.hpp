#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "survseq/tensor.hpp"

namespace survseq {

/// One subject's longitudinal record. Rows of values/mask/delta are steps,
/// columns are covariates in the dataset's global order. Unobserved values
/// hold 0.
struct LongitudinalSample {
  std::string subject_id;
  std::vector<double> timestamps;
  Tensor<double> values;
  Tensor<double> mask;
  Tensor<double> delta;
  int event_type = 0;  // 0 = censored, 1..K
  double event_time = 0;

  Index steps() const { return static_cast<Index>(timestamps.size()); }
  Index covariates() const { return values.cols(); }
  bool censored() const { return event_type == 0; }

  bool operator==(const LongitudinalSample&) const = default;
};

struct Dataset {
  std::vector<std::string> covariates;
  std::vector<LongitudinalSample> samples;

  std::size_t size() const { return samples.size(); }
  int num_events() const;
};

/// Malformed or inconsistent input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IngestOptions {
  /// Global covariate order. Empty means "every name seen, sorted".
  /// When given, rows naming any other covariate are rejected.
  std::vector<std::string> covariates;
  /// Covariates measured once per subject; their value is repeated at every
  /// step with mask 1.
  std::vector<std::string> static_covariates;
};

/// Reads `subject_id,time,covariate,value` observations and
/// `subject_id,event_time,event_type` labels. One sample per label row, in
/// label order. Observations sharing a timestamp form one step; repeated
/// measurements of a covariate at one timestamp are averaged.
Dataset ingest_long_format(std::istream& observations, std::istream& labels, const IngestOptions& options = {});
Dataset ingest_long_format_files(const std::string& observations_path, const std::string& labels_path,
                                 const IngestOptions& options = {});

/// Writes the two long-format files. Only observed entries are written.
void write_long_format(const Dataset& data, std::ostream& observations, std::ostream& labels);

/// delta[0,d] = 0; delta[t,d] = s_t - s_{t-1} + (mask[t-1,d] == 0 ? delta[t-1,d] : 0).
Tensor<double> compute_delta(std::span<const double> timestamps, const Tensor<double>& mask);

/// Greedy left-to-right merge of observation times: a step joins the current
/// group while it lies within `threshold` of the group's first time. A group
/// becomes one step at the average of its original timestamps; masks are
/// OR-ed and repeated observations averaged. Passes repeat until nothing
/// merges, so the result is a fixed point.
LongitudinalSample merge_close_timestamps(const LongitudinalSample& sample, double threshold);

/// Keeps a seeded uniform random subset of `max_steps` steps in time order
/// when the sample is longer; deltas are recomputed.
LongitudinalSample cap_length(const LongitudinalSample& sample, Index max_steps, std::uint64_t seed);

struct DiscretizationSpec {
  double bin_width = 1;
  double max_event_time = 1;
  /// ceil(1.25 * max_event_time / bin_width)
  int horizon() const;
};

struct BinIndex {
  int index = 0;
  bool clamped = false;  // event time fell beyond the horizon
};

/// min(floor(tau / bin_width), horizon - 1).
BinIndex discretize_event_time(double tau, const DiscretizationSpec& spec);

struct DatasetStats {
  std::vector<std::string> covariates;
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant;
  /// Mean positive delta; deltas are divided by it before entering the encoder.
  double delta_scale = 1;

  bool operator==(const DatasetStats&) const = default;
};

/// Per-covariate mean and standard deviation over observed entries of the
/// given samples only. A covariate with zero spread (or fewer than two
/// observations) is flagged constant and normalized with stddev 1.
DatasetStats compute_stats(const std::vector<std::string>& covariates,
                           std::span<const LongitudinalSample* const> samples);
DatasetStats compute_stats(const Dataset& data);

/// Encoder-ready view of a sample: z-scored values (0 where unobserved),
/// scaled deltas, and the last observed value before each step (0, the
/// normalized mean, before any observation).
struct EncoderInput {
  Tensor<double> values;
  Tensor<double> mask;
  Tensor<double> delta;
  Tensor<double> last_observed;
  Index steps() const { return values.rows(); }
};

EncoderInput normalize(const LongitudinalSample& sample, const DatasetStats& stats);

/// Shortest decimal text that reads back to exactly the same double.
std::string format_double(double value);

}  // namespace survseq

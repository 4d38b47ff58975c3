#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survseq/checkpoint.hpp"
#include "survseq/config.hpp"
#include "survseq/metrics.hpp"

namespace survseq {

/// Loads the configured cohort (ingested files, or a synthetic draw) and
/// applies timestamp merging and the encoder length cap.
Dataset load_dataset(const RunConfig& config);
/// Merging and capping only; used by load_dataset.
Dataset preprocess(Dataset data, const RunConfig& config);

/// Fills max_event_time from the data when the config leaves it unset.
DiscretizationSpec resolve_discretization(const RunConfig& config, const Dataset& data);

std::vector<SurvivalLabel> make_labels(std::span<const LongitudinalSample> samples, const DiscretizationSpec& spec);
SurvivalLabel make_label(const LongitudinalSample& sample, const DiscretizationSpec& spec);

ModelShape model_shape(const RunConfig& config, Index covariates, int events, Index horizon);

struct TrainOptions {
  /// Called after every epoch with the current (not best) weights.
  std::function<void(int epoch, const ParameterSet<float>& params)> on_epoch;
  /// Progress lines; silent when empty.
  std::function<void(const std::string&)> log;
};

struct TrainResult {
  Checkpoint checkpoint;  // best-validation weights
  bool diverged = false;
};

/// Minibatch training on `train` with early stopping on the total loss of
/// `validation` (or of `train` when validation is empty). Normalization
/// statistics come from `train` only. On a non-finite loss or gradient the
/// run stops and returns the last good weights with diverged = true.
TrainResult train_model(const RunConfig& config, const Dataset& data, std::span<const std::size_t> train,
                        std::span<const std::size_t> validation, const TrainOptions& options = {});

/// Mean per-subject total loss of a split under the given weights.
double evaluate_loss(const RunConfig& config, const Checkpoint& model, const Dataset& data,
                     std::span<const std::size_t> subjects);

/// Seeded shuffle, then position modulo `folds`. Entry i is subject i's fold.
std::vector<int> assign_folds(std::size_t subjects, int folds, std::uint64_t seed);

struct ValidationSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
/// Seeded random hold-out of round(fraction * n) subjects.
ValidationSplit split_validation(std::span<const std::size_t> subjects, double fraction, std::uint64_t seed);

/// Normalized encoder inputs of the given subjects under `stats`. Samples
/// must use the checkpoint's covariate order.
std::vector<EncoderInput> encoder_inputs(const Dataset& data, std::span<const std::size_t> subjects,
                                         const DatasetStats& stats);

/// Deterministic double-precision forward pass, in batches.
std::vector<PdfMatrix> predict(const Checkpoint& model, const Dataset& data, std::span<const std::size_t> subjects);
std::vector<PdfMatrix> predict(const Checkpoint& model, const Dataset& data);

/// Throws DataError naming covariates missing from or extra to `expected`
/// when the sets differ; otherwise reorders the dataset's columns to match.
Dataset align_covariates(Dataset data, const std::vector<std::string>& expected);

struct FoldResult {
  int fold = 0;
  std::vector<std::size_t> test;
  std::vector<SurvivalLabel> labels;
  std::vector<PdfMatrix> predictions;
  FoldMetrics metrics;
  TrainingHistory history;
  bool diverged = false;
};

struct CrossValidation {
  std::vector<int> assignment;
  std::vector<FoldResult> folds;
  std::vector<AggregateRow> summary;
};

struct CrossValidationOptions {
  /// Restrict to these folds (all when empty).
  std::vector<int> only_folds;
  std::function<void(const std::string&)> log;
};

FoldResult run_fold(const RunConfig& config, const Dataset& data, std::span<const int> assignment, int fold,
                    const std::function<void(const std::string&)>& log = {});
CrossValidation crossvalidate(const RunConfig& config, const Dataset& data, const CrossValidationOptions& options = {});

/// Key-value summary and a table of model, event, quantile, metric, mean,
/// std, lower, upper.
void write_report_text(std::ostream& out, const std::string& model, const CrossValidation& cv, const RunConfig& config);
void write_report_csv(std::ostream& out, const std::string& model, std::span<const AggregateRow> rows);

/// Long table of (subject, event, bin, probability, cdf) behind a metadata
/// header giving bin_width and horizon.
void write_pdf_table(std::ostream& out, std::span<const std::string> subjects, std::span<const PdfMatrix> pdfs,
                     double bin_width, const std::string& time_unit);
/// One subject's curves for one event: bin, time, pdf, cdf.
void write_curve(std::ostream& out, const PdfMatrix& pdf, int event, double bin_width);

}  // namespace survseq

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "survseq/datamodel.hpp"

namespace survseq {

/// Parameters of the competing-risks Weibull process. Vectors of
/// per-covariate Weibull parameters may hold a single value, which is
/// broadcast. Empty coefficient vectors and an empty partition are drawn
/// from the seed by resolve().
struct SyntheticConfig {
  int num_covariates = 20;
  int n_samples = 20000;
  std::vector<double> weibull_shape{1.5};
  std::vector<double> weibull_location{0.0};
  std::vector<double> weibull_scale{1.0};
  /// Length num_covariates; restricted to the relevant subset per event.
  std::vector<double> quadratic_coef;
  std::vector<double> linear_coef;
  std::vector<int> subset1;
  std::vector<int> subset2;
  double censoring_rate = 0.20;
  double missing_rate = 0.77;
  double max_event_time = 200;
  /// Shape of the event-time Weibull; its scale is g(s).
  double event_shape = 1.5;
  /// g(s) = clamp(scale_factor * |s|, scale_min, scale_max). scale_max <= 0
  /// means max_event_time / 3; scale_factor <= 0 means calibrate on the
  /// population.
  double scale_min = 1.0;
  double scale_max = 0.0;
  double scale_factor = 0.0;
  /// Population quantile of |s| mapped onto scale_max during calibration.
  double scale_quantile = 0.8;
  int max_steps = 20;
  double drift_max = 1.0;
  /// Observation probability is sigmoid(offset + nmar_slope * z).
  double nmar_slope = -1.0;
  std::uint64_t seed = 1;

  double effective_scale_max() const { return scale_max > 0 ? scale_max : max_event_time / 3.0; }
  double shape(int d) const;
  double location(int d) const;
  double scale(int d) const;

  /// Throws std::invalid_argument on any violated invariant, including the
  /// partition subset1 ⊎ subset2 = {0..num_covariates-1}.
  void validate() const;
  /// Copy with coefficients and partition filled in from the seed.
  SyntheticConfig resolve() const;
};

/// n x num_covariates matrix, each entry Weibull(shape, location, scale) by
/// inverse-CDF sampling.
Tensor<double> sample_covariates(const SyntheticConfig& config, Index n, std::mt19937_64& rng);

/// The two covariate combinations (quadratic on one subset, linear on the
/// other, roles swapped for the second event).
std::pair<double, double> event_scores(std::span<const double> x, const SyntheticConfig& config);

double event_scale(double score, const SyntheticConfig& config);

struct EventTimes {
  double first = 0;
  double second = 0;
};

/// Draws T1 ~ Weibull(event_shape, g(s1)) and T2 ~ Weibull(event_shape, g(s2)).
/// Requires a resolved config with scale_factor > 0.
EventTimes sample_event_times(std::span<const double> x, const SyntheticConfig& config, std::mt19937_64& rng);

struct Outcome {
  int event_type = 0;
  double event_time = 0;
};

/// First-hitting event, random censoring with probability censoring_rate
/// (time uniform on (0, min(T1, T2))), and administrative censoring at
/// max_event_time.
Outcome apply_censoring(const EventTimes& times, const SyntheticConfig& config, std::mt19937_64& rng);

/// Noise-free longitudinal measurements of one subject.
struct Trajectory {
  std::vector<double> times;
  Tensor<double> values;
};

/// m ~ Uniform{2..max_steps} times in (0, event_time); covariate d at time s
/// is x_d * exp(r_d * s / event_time), r_d ~ Uniform(-drift_max, drift_max).
Trajectory draw_trajectory(std::span<const double> x, double event_time, const SyntheticConfig& config,
                           std::mt19937_64& rng);

/// Value-dependent missingness: an entry is observed with probability
/// sigmoid(offset + slope * z), z the entry's z-score under the population
/// moments of its covariate.
struct NmarModel {
  std::vector<double> mean;
  std::vector<double> stddev;
  double slope = -1;
  double offset = 0;

  double observe_probability(int covariate, double value) const;
};

/// Moments from all trajectory entries, offset by bisection so the mean
/// observation probability equals 1 - missing_rate.
NmarModel calibrate_nmar(std::span<const Trajectory> trajectories, const SyntheticConfig& config);

/// Draws the observation mask. Steps with nothing observed are dropped; if
/// that leaves none, the most likely entry of the first step is kept.
LongitudinalSample observe(const Trajectory& trajectory, const NmarModel& nmar, std::mt19937_64& rng);

LongitudinalSample longitudinalize(std::span<const double> x, double event_time, const SyntheticConfig& config,
                                   const NmarModel& nmar, std::mt19937_64& rng);

/// Sets scale_factor so that the scale_quantile of |s| over the given
/// covariate rows maps onto scale_max.
double calibrate_scale_factor(const Tensor<double>& covariates, const SyntheticConfig& config);

struct SyntheticDataset {
  Dataset data;
  SyntheticConfig config;  // resolved
  NmarModel nmar;
  Tensor<double> covariates;  // baseline draws, n x num_covariates
  std::vector<EventTimes> latent_times;

  double censored_fraction() const;
  double missing_fraction() const;
};

/// Generates the full cohort. Each subject draws from its own streams derived
/// from (seed, subject index), so output is a pure function of the config.
SyntheticDataset generate(const SyntheticConfig& config);

/// Writes observations.csv, labels.csv and manifest.txt into `directory`.
void export_dataset(const SyntheticDataset& dataset, const std::string& directory);

std::string covariate_name(int d);

}  // namespace survseq

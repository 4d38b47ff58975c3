#include "survseq/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "survseq/config.hpp"

namespace survseq {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t subject, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(subject), static_cast<std::uint32_t>(subject >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

double weibull_draw(double shape, double location, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  return location + scale * std::pow(-std::log1p(-u), 1.0 / shape);
}

double pick(const std::vector<double>& v, int d) { return v.size() == 1 ? v[0] : v.at(d); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum Purpose : std::uint64_t { kCovariates = 0, kEvents = 1, kCensoring = 2, kTrajectory = 3, kMask = 4 };

}  // namespace

double SyntheticConfig::shape(int d) const { return pick(weibull_shape, d); }
double SyntheticConfig::location(int d) const { return pick(weibull_location, d); }
double SyntheticConfig::scale(int d) const { return pick(weibull_scale, d); }

void SyntheticConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("synthetic config: " + msg); };
  if (num_covariates < 1) fail("num_covariates must be >= 1");
  if (n_samples < 0) fail("n_samples must be >= 0");
  for (const auto* v : {&weibull_shape, &weibull_location, &weibull_scale}) {
    if (v->size() != 1 && v->size() != static_cast<std::size_t>(num_covariates))
      fail("Weibull parameter vectors need 1 or num_covariates entries");
  }
  for (double s : weibull_shape)
    if (!(s > 0)) fail("Weibull shape must be > 0");
  for (double s : weibull_scale)
    if (!(s > 0)) fail("Weibull scale must be > 0");
  if (!(event_shape > 0)) fail("event_shape must be > 0");
  for (const auto* v : {&quadratic_coef, &linear_coef}) {
    if (!v->empty() && v->size() != static_cast<std::size_t>(num_covariates))
      fail("coefficient vectors need num_covariates entries");
  }
  if (!(censoring_rate >= 0 && censoring_rate <= 1)) fail("censoring_rate must lie in [0, 1]");
  if (!(missing_rate >= 0 && missing_rate < 1)) fail("missing_rate must lie in [0, 1)");
  if (!(max_event_time > 0)) fail("max_event_time must be > 0");
  if (!(scale_min > 0) || !(effective_scale_max() >= scale_min)) fail("need 0 < scale_min <= scale_max");
  if (!(scale_quantile > 0 && scale_quantile <= 1)) fail("scale_quantile must lie in (0, 1]");
  if (max_steps < 2) fail("max_steps must be >= 2");
  if (!(drift_max >= 0)) fail("drift_max must be >= 0");
  if (subset1.empty() != subset2.empty()) fail("give both subsets or neither");
  if (!subset1.empty()) {
    std::vector<int> seen(num_covariates, 0);
    for (const auto* s : {&subset1, &subset2}) {
      for (int d : *s) {
        if (d < 0 || d >= num_covariates) fail("subset index out of range");
        ++seen[d];
      }
    }
    for (int c : seen)
      if (c != 1) fail("subsets must be disjoint and cover every covariate");
  }
}

SyntheticConfig SyntheticConfig::resolve() const {
  validate();
  SyntheticConfig out = *this;
  auto rng = stream(seed, ~std::uint64_t{0}, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (out.quadratic_coef.empty()) {
    out.quadratic_coef.resize(num_covariates);
    for (auto& c : out.quadratic_coef) c = normal(rng);
  }
  if (out.linear_coef.empty()) {
    out.linear_coef.resize(num_covariates);
    for (auto& c : out.linear_coef) c = normal(rng);
  }
  if (out.subset1.empty()) {
    std::vector<int> idx(num_covariates);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int half = num_covariates / 2;
    out.subset1.assign(idx.begin(), idx.begin() + half);
    out.subset2.assign(idx.begin() + half, idx.end());
    std::sort(out.subset1.begin(), out.subset1.end());
    std::sort(out.subset2.begin(), out.subset2.end());
  }
  return out;
}

Tensor<double> sample_covariates(const SyntheticConfig& config, Index n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("sample_covariates: n must be >= 1");
  config.validate();
  Tensor<double> x(n, config.num_covariates);
  for (Index i = 0; i < n; ++i)
    for (int d = 0; d < config.num_covariates; ++d)
      x(i, d) = weibull_draw(config.shape(d), config.location(d), config.scale(d), rng);
  return x;
}

std::pair<double, double> event_scores(std::span<const double> x, const SyntheticConfig& config) {
  double s1 = 0, s2 = 0;
  for (int d : config.subset1) {
    s1 += config.quadratic_coef[d] * x[d] * x[d];
    s2 += config.linear_coef[d] * x[d];
  }
  for (int d : config.subset2) {
    s1 += config.linear_coef[d] * x[d];
    s2 += config.quadratic_coef[d] * x[d] * x[d];
  }
  return {s1, s2};
}

double event_scale(double score, const SyntheticConfig& config) {
  return std::clamp(config.scale_factor * std::abs(score), config.scale_min, config.effective_scale_max());
}

EventTimes sample_event_times(std::span<const double> x, const SyntheticConfig& config, std::mt19937_64& rng) {
  if (!(config.scale_factor > 0)) throw std::invalid_argument("sample_event_times: scale_factor not calibrated");
  const auto [s1, s2] = event_scores(x, config);
  EventTimes t;
  t.first = weibull_draw(config.event_shape, 0.0, event_scale(s1, config), rng);
  t.second = weibull_draw(config.event_shape, 0.0, event_scale(s2, config), rng);
  // A zero draw (u == 0) is not a valid event time.
  t.first = std::max(t.first, 1e-9);
  t.second = std::max(t.second, 1e-9);
  return t;
}

Outcome apply_censoring(const EventTimes& times, const SyntheticConfig& config, std::mt19937_64& rng) {
  Outcome o;
  const double first = std::min(times.first, times.second);
  o.event_type = times.first <= times.second ? 1 : 2;
  o.event_time = first;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(rng) < config.censoring_rate) {
    o.event_type = 0;
    double c = 0;
    while (!(c > 0)) c = unif(rng) * first;
    o.event_time = c;
  }
  if (o.event_time > config.max_event_time) {
    o.event_type = 0;
    o.event_time = config.max_event_time;
  }
  return o;
}

Trajectory draw_trajectory(std::span<const double> x, double event_time, const SyntheticConfig& config,
                           std::mt19937_64& rng) {
  if (!(event_time > 0)) throw std::invalid_argument("draw_trajectory: event_time must be > 0");
  std::uniform_int_distribution<int> count(2, config.max_steps);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int m = count(rng);
  Trajectory tr;
  while (static_cast<int>(tr.times.size()) < m) {
    const double s = unif(rng) * event_time;
    if (s > 0 && std::find(tr.times.begin(), tr.times.end(), s) == tr.times.end()) tr.times.push_back(s);
  }
  std::sort(tr.times.begin(), tr.times.end());
  const int dims = config.num_covariates;
  std::vector<double> rate(dims);
  for (auto& r : rate) r = (2 * unif(rng) - 1) * config.drift_max;
  tr.values.resize(m, dims);
  for (int t = 0; t < m; ++t)
    for (int d = 0; d < dims; ++d) tr.values(t, d) = x[d] * std::exp(rate[d] * tr.times[t] / event_time);
  return tr;
}

double NmarModel::observe_probability(int covariate, double value) const {
  const double z = (value - mean[covariate]) / stddev[covariate];
  return sigmoid(offset + slope * z);
}

NmarModel calibrate_nmar(std::span<const Trajectory> trajectories, const SyntheticConfig& config) {
  const int dims = config.num_covariates;
  NmarModel model;
  model.slope = config.nmar_slope;
  model.mean.assign(dims, 0.0);
  model.stddev.assign(dims, 1.0);
  std::vector<double> sum(dims, 0), sumsq(dims, 0);
  double n = 0;
  for (const auto& tr : trajectories) {
    for (Index t = 0; t < tr.values.rows(); ++t) {
      for (int d = 0; d < dims; ++d) {
        sum[d] += tr.values(t, d);
        sumsq[d] += tr.values(t, d) * tr.values(t, d);
      }
      n += 1;
    }
  }
  if (n == 0) return model;
  for (int d = 0; d < dims; ++d) {
    model.mean[d] = sum[d] / n;
    const double var = sumsq[d] / n - model.mean[d] * model.mean[d];
    model.stddev[d] = var > 0 ? std::sqrt(var) : 1.0;
  }

  const double target = 1.0 - config.missing_rate;
  auto mean_probability = [&](double offset) {
    model.offset = offset;
    double total = 0, count = 0;
    for (const auto& tr : trajectories)
      for (Index t = 0; t < tr.values.rows(); ++t)
        for (int d = 0; d < dims; ++d) {
          total += model.observe_probability(d, tr.values(t, d));
          count += 1;
        }
    return total / count;
  };
  double lo = -40, hi = 40;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_probability(mid) < target ? lo : hi) = mid;
  }
  model.offset = 0.5 * (lo + hi);
  return model;
}

LongitudinalSample observe(const Trajectory& trajectory, const NmarModel& nmar, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index steps = trajectory.values.rows();
  const Index dims = trajectory.values.cols();
  Tensor<double> mask = Tensor<double>::Zero(steps, dims);
  for (Index t = 0; t < steps; ++t)
    for (Index d = 0; d < dims; ++d)
      if (unif(rng) < nmar.observe_probability(static_cast<int>(d), trajectory.values(t, d))) mask(t, d) = 1;

  std::vector<Index> keep;
  for (Index t = 0; t < steps; ++t)
    if (mask.row(t).sum() > 0) keep.push_back(t);
  if (keep.empty()) {
    Index best = 0;
    for (Index d = 1; d < dims; ++d)
      if (nmar.observe_probability(static_cast<int>(d), trajectory.values(0, d)) >
          nmar.observe_probability(static_cast<int>(best), trajectory.values(0, best)))
        best = d;
    mask(0, best) = 1;
    keep.push_back(0);
  }

  LongitudinalSample s;
  const Index kept = static_cast<Index>(keep.size());
  s.values = Tensor<double>::Zero(kept, dims);
  s.mask.resize(kept, dims);
  for (Index i = 0; i < kept; ++i) {
    s.timestamps.push_back(trajectory.times[keep[i]]);
    s.mask.row(i) = mask.row(keep[i]);
    for (Index d = 0; d < dims; ++d)
      if (mask(keep[i], d) != 0) s.values(i, d) = trajectory.values(keep[i], d);
  }
  s.delta = compute_delta(s.timestamps, s.mask);
  return s;
}

LongitudinalSample longitudinalize(std::span<const double> x, double event_time, const SyntheticConfig& config,
                                   const NmarModel& nmar, std::mt19937_64& rng) {
  return observe(draw_trajectory(x, event_time, config, rng), nmar, rng);
}

double calibrate_scale_factor(const Tensor<double>& covariates, const SyntheticConfig& config) {
  std::vector<double> mags;
  mags.reserve(2 * static_cast<std::size_t>(covariates.rows()));
  for (Index i = 0; i < covariates.rows(); ++i) {
    const auto [s1, s2] = event_scores(std::span<const double>(covariates.row(i).data(), covariates.cols()), config);
    mags.push_back(std::abs(s1));
    mags.push_back(std::abs(s2));
  }
  if (mags.empty()) return 1.0;
  const auto k = static_cast<std::size_t>(std::floor(config.scale_quantile * static_cast<double>(mags.size() - 1)));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
  const double q = mags[k];
  return q > 0 ? config.effective_scale_max() / q : 1.0;
}

double SyntheticDataset::censored_fraction() const {
  if (data.samples.empty()) return 0;
  double c = 0;
  for (const auto& s : data.samples) c += s.censored() ? 1 : 0;
  return c / static_cast<double>(data.samples.size());
}

double SyntheticDataset::missing_fraction() const {
  double missing = 0, total = 0;
  for (const auto& s : data.samples) {
    missing += static_cast<double>(s.mask.size()) - s.mask.sum();
    total += static_cast<double>(s.mask.size());
  }
  return total > 0 ? missing / total : 0;
}

std::string covariate_name(int d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "x%02d", d);
  return buf;
}

SyntheticDataset generate(const SyntheticConfig& config) {
  SyntheticDataset out;
  out.config = config.resolve();
  auto& cfg = out.config;
  const int n = cfg.n_samples;
  for (int d = 0; d < cfg.num_covariates; ++d) out.data.covariates.push_back(covariate_name(d));
  out.covariates.resize(n, cfg.num_covariates);
  for (int i = 0; i < n; ++i) {
    auto rng = stream(cfg.seed, static_cast<std::uint64_t>(i), kCovariates);
    out.covariates.row(i) = sample_covariates(cfg, 1, rng);
  }
  if (!(cfg.scale_factor > 0)) cfg.scale_factor = calibrate_scale_factor(out.covariates, cfg);

  std::vector<Outcome> outcomes(n);
  std::vector<Trajectory> trajectories(n);
  out.latent_times.resize(n);
  for (int i = 0; i < n; ++i) {
    const std::span<const double> x(out.covariates.row(i).data(), cfg.num_covariates);
    auto events_rng = stream(cfg.seed, static_cast<std::uint64_t>(i), kEvents);
    out.latent_times[i] = sample_event_times(x, cfg, events_rng);
    auto censor_rng = stream(cfg.seed, static_cast<std::uint64_t>(i), kCensoring);
    outcomes[i] = apply_censoring(out.latent_times[i], cfg, censor_rng);
    auto traj_rng = stream(cfg.seed, static_cast<std::uint64_t>(i), kTrajectory);
    trajectories[i] = draw_trajectory(x, outcomes[i].event_time, cfg, traj_rng);
  }
  out.nmar = calibrate_nmar(trajectories, cfg);

  out.data.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto mask_rng = stream(cfg.seed, static_cast<std::uint64_t>(i), kMask);
    LongitudinalSample s = observe(trajectories[i], out.nmar, mask_rng);
    char id[16];
    std::snprintf(id, sizeof(id), "s%05d", i);
    s.subject_id = id;
    s.event_type = outcomes[i].event_type;
    s.event_time = outcomes[i].event_time;
    out.data.samples.push_back(std::move(s));
  }
  return out;
}

void export_dataset(const SyntheticDataset& dataset, const std::string& directory) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(directory, ec);
  const fs::path dir(directory);
  std::ofstream obs(dir / "observations.csv");
  std::ofstream lab(dir / "labels.csv");
  std::ofstream manifest(dir / "manifest.txt");
  if (!obs || !lab || !manifest) throw std::runtime_error("cannot write dataset files under '" + directory + "'");
  write_long_format(dataset.data, obs, lab);

  std::size_t rows = 0;
  for (const auto& s : dataset.data.samples) rows += static_cast<std::size_t>(s.mask.sum());
  manifest << "; synthetic competing-risks cohort\n";
  manifest << "[generated]\n";
  manifest << "subjects = " << dataset.data.samples.size() << "\n";
  manifest << "observation_rows = " << rows << "\n";
  manifest << "censored_fraction = " << format_double(dataset.censored_fraction()) << "\n";
  manifest << "missing_fraction = " << format_double(dataset.missing_fraction()) << "\n";
  manifest << "nmar_offset = " << format_double(dataset.nmar.offset) << "\n\n";
  manifest << synthetic_config_to_ini(dataset.config);
  if (!obs || !lab || !manifest) throw std::runtime_error("write failed under '" + directory + "'");
}

}  // namespace survseq

#include "survseq/datamodel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace survseq {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_int(const std::string& text, int& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

void expect_header(std::istream& in, const std::vector<std::string>& expected, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(std::string(what) + ": empty file");
  auto fields = split_row(line);
  for (auto& f : fields) f = trim(f);
  if (!fields.empty() && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0] = fields[0].substr(3);
  if (fields != expected) {
    std::string want;
    for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
    throw DataError(std::string(what) + ": expected header '" + want + "'");
  }
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > shown) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

struct Observation {
  double time;
  int covariate;
  double value;
};

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

int Dataset::num_events() const {
  int k = 0;
  for (const auto& s : samples) k = std::max(k, s.event_type);
  return k;
}

Tensor<double> compute_delta(std::span<const double> timestamps, const Tensor<double>& mask) {
  const Index steps = static_cast<Index>(timestamps.size());
  if (mask.rows() != steps) {
    throw ShapeError("compute_delta", std::to_string(steps) + " timestamps vs mask " + shape_string(mask));
  }
  Tensor<double> delta = Tensor<double>::Zero(steps, mask.cols());
  for (Index t = 1; t < steps; ++t) {
    const double gap = timestamps[t] - timestamps[t - 1];
    for (Index d = 0; d < mask.cols(); ++d) {
      delta(t, d) = gap + (mask(t - 1, d) == 0 ? delta(t - 1, d) : 0.0);
    }
  }
  return delta;
}

Dataset ingest_long_format(std::istream& observations, std::istream& labels, const IngestOptions& options) {
  expect_header(labels, {"subject_id", "event_time", "event_type"}, "labels");
  Dataset data;
  std::unordered_map<std::string, std::size_t> subject_index;
  std::string line;
  std::size_t row = 1;
  while (std::getline(labels, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto f = split_row(line);
    if (f.size() != 3) throw DataError("labels row " + std::to_string(row) + ": expected 3 fields");
    LongitudinalSample s;
    s.subject_id = trim(f[0]);
    if (!parse_double(trim(f[1]), s.event_time) || !(s.event_time > 0)) {
      throw DataError("labels row " + std::to_string(row) + ": event_time must be a positive number");
    }
    if (!parse_int(trim(f[2]), s.event_type) || s.event_type < 0) {
      throw DataError("labels row " + std::to_string(row) + ": event_type must be a nonnegative integer");
    }
    if (!subject_index.emplace(s.subject_id, data.samples.size()).second) {
      throw DataError("labels row " + std::to_string(row) + ": duplicate subject '" + s.subject_id + "'");
    }
    data.samples.push_back(std::move(s));
  }

  expect_header(observations, {"subject_id", "time", "covariate", "value"}, "observations");
  std::vector<std::string> names = options.covariates;
  const bool fixed_names = !names.empty();
  std::map<std::string, int> name_index;
  for (std::size_t i = 0; i < names.size(); ++i) name_index.emplace(names[i], static_cast<int>(i));

  struct Raw {
    double time;
    std::string covariate;
    double value;
  };
  std::vector<std::vector<Raw>> raw(data.samples.size());
  std::set<std::string> unknown_subjects;
  std::set<std::string> seen_names;
  row = 1;
  while (std::getline(observations, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto f = split_row(line);
    if (f.size() != 4) throw DataError("observations row " + std::to_string(row) + ": expected 4 fields");
    const std::string id = trim(f[0]);
    Raw r;
    r.covariate = trim(f[2]);
    if (!parse_double(trim(f[1]), r.time)) {
      throw DataError("observations row " + std::to_string(row) + ": non-numeric time '" + f[1] + "'");
    }
    if (!parse_double(trim(f[3]), r.value)) {
      throw DataError("observations row " + std::to_string(row) + ": non-numeric value '" + f[3] + "'");
    }
    if (fixed_names && name_index.count(r.covariate) == 0) {
      throw DataError("observations row " + std::to_string(row) + ": unknown covariate '" + r.covariate + "'");
    }
    auto it = subject_index.find(id);
    if (it == subject_index.end()) {
      unknown_subjects.insert(id);
      continue;
    }
    seen_names.insert(r.covariate);
    raw[it->second].push_back(std::move(r));
  }
  if (!unknown_subjects.empty()) {
    throw DataError("subjects without labels: " +
                    join_ids(std::vector<std::string>(unknown_subjects.begin(), unknown_subjects.end())));
  }
  std::vector<std::string> empty;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i].empty()) empty.push_back(data.samples[i].subject_id);
  if (!empty.empty()) throw DataError("no observations for subjects: " + join_ids(empty));

  if (!fixed_names) {
    names.assign(seen_names.begin(), seen_names.end());
    for (std::size_t i = 0; i < names.size(); ++i) name_index.emplace(names[i], static_cast<int>(i));
  }
  for (const auto& s : options.static_covariates) {
    if (name_index.count(s) == 0) throw DataError("static covariate '" + s + "' not present in observations");
  }
  data.covariates = names;
  const Index dims = static_cast<Index>(names.size());

  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& sample = data.samples[i];
    std::vector<double> times;
    std::vector<Observation> obs;
    std::vector<double> static_value(dims, 0.0);
    std::vector<bool> is_static(dims, false);
    std::vector<int> static_count(dims, 0);
    for (const auto& s : options.static_covariates) is_static[name_index.at(s)] = true;
    for (const auto& r : raw[i]) {
      const int c = name_index.at(r.covariate);
      if (is_static[c]) {
        static_value[c] += r.value;
        ++static_count[c];
        continue;
      }
      times.push_back(r.time);
      obs.push_back({r.time, c, r.value});
    }
    if (times.empty()) {
      // Only static rows: a single step at the earliest of them.
      double first = raw[i].front().time;
      for (const auto& r : raw[i]) first = std::min(first, r.time);
      times.push_back(first);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    const Index steps = static_cast<Index>(times.size());
    sample.timestamps = times;
    sample.values = Tensor<double>::Zero(steps, dims);
    sample.mask = Tensor<double>::Zero(steps, dims);
    Tensor<double> counts = Tensor<double>::Zero(steps, dims);
    for (const auto& o : obs) {
      const Index t = std::lower_bound(times.begin(), times.end(), o.time) - times.begin();
      sample.values(t, o.covariate) += o.value;
      counts(t, o.covariate) += 1;
    }
    for (Index t = 0; t < steps; ++t) {
      for (Index d = 0; d < dims; ++d) {
        if (counts(t, d) > 0) {
          if (counts(t, d) > 1) sample.values(t, d) /= counts(t, d);
          sample.mask(t, d) = 1;
        }
      }
    }
    for (Index d = 0; d < dims; ++d) {
      if (!is_static[d] || static_count[d] == 0) continue;
      sample.values.col(d).setConstant(static_value[d] / static_count[d]);
      sample.mask.col(d).setOnes();
    }
    sample.delta = compute_delta(sample.timestamps, sample.mask);
  }
  return data;
}

Dataset ingest_long_format_files(const std::string& observations_path, const std::string& labels_path,
                                 const IngestOptions& options) {
  std::ifstream obs(observations_path);
  if (!obs) throw DataError("cannot open observations file '" + observations_path + "'");
  std::ifstream lab(labels_path);
  if (!lab) throw DataError("cannot open labels file '" + labels_path + "'");
  return ingest_long_format(obs, lab, options);
}

void write_long_format(const Dataset& data, std::ostream& observations, std::ostream& labels) {
  observations << "subject_id,time,covariate,value\n";
  labels << "subject_id,event_time,event_type\n";
  for (const auto& s : data.samples) {
    labels << s.subject_id << ',' << format_double(s.event_time) << ',' << s.event_type << '\n';
    for (Index t = 0; t < s.steps(); ++t) {
      const std::string time = format_double(s.timestamps[t]);
      for (Index d = 0; d < s.covariates(); ++d) {
        if (s.mask(t, d) == 0) continue;
        observations << s.subject_id << ',' << time << ',' << data.covariates[d] << ','
                     << format_double(s.values(t, d)) << '\n';
      }
    }
  }
}

namespace {

// One greedy pass. Returns true if anything merged.
bool merge_pass(std::vector<double>& times, std::vector<double>& weights, Tensor<double>& sums,
                Tensor<double>& counts, double threshold) {
  const std::size_t n = times.size();
  std::vector<double> out_times, out_weights;
  Tensor<double> out_sums(static_cast<Index>(n), sums.cols());
  Tensor<double> out_counts(static_cast<Index>(n), counts.cols());
  Index groups = 0;
  std::size_t i = 0;
  bool merged = false;
  while (i < n) {
    const double anchor = times[i];
    double weighted = 0, weight = 0;
    out_sums.row(groups).setZero();
    out_counts.row(groups).setZero();
    std::size_t j = i;
    while (j < n && times[j] - anchor <= threshold && (j == i || threshold > 0)) {
      weighted += times[j] * weights[j];
      weight += weights[j];
      out_sums.row(groups) += sums.row(static_cast<Index>(j));
      out_counts.row(groups) += counts.row(static_cast<Index>(j));
      ++j;
    }
    merged = merged || (j - i > 1);
    out_times.push_back(weighted / weight);
    out_weights.push_back(weight);
    ++groups;
    i = j;
  }
  times = std::move(out_times);
  weights = std::move(out_weights);
  sums = out_sums.topRows(groups);
  counts = out_counts.topRows(groups);
  return merged;
}

}  // namespace

LongitudinalSample merge_close_timestamps(const LongitudinalSample& sample, double threshold) {
  if (!(threshold >= 0)) throw std::invalid_argument("merge_close_timestamps: threshold must be >= 0");
  std::vector<double> times = sample.timestamps;
  std::vector<double> weights(times.size(), 1.0);
  Tensor<double> sums = sample.values.cwiseProduct(sample.mask);
  Tensor<double> counts = sample.mask;
  bool any = false;
  while (times.size() > 1 && merge_pass(times, weights, sums, counts, threshold)) any = true;
  if (!any) return sample;

  LongitudinalSample out = sample;
  out.timestamps = times;
  out.mask = (counts.array() > 0).cast<double>().matrix();
  out.values = Tensor<double>::Zero(counts.rows(), counts.cols());
  for (Index t = 0; t < counts.rows(); ++t)
    for (Index d = 0; d < counts.cols(); ++d)
      if (counts(t, d) > 0) out.values(t, d) = sums(t, d) / counts(t, d);
  out.delta = compute_delta(out.timestamps, out.mask);
  return out;
}

LongitudinalSample cap_length(const LongitudinalSample& sample, Index max_steps, std::uint64_t seed) {
  if (max_steps < 1) throw std::invalid_argument("cap_length: max_steps must be >= 1");
  if (sample.steps() <= max_steps) return sample;
  std::vector<Index> all(static_cast<std::size_t>(sample.steps()));
  for (Index t = 0; t < sample.steps(); ++t) all[t] = t;
  std::vector<Index> keep;
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(keep), max_steps, rng);

  LongitudinalSample out = sample;
  out.timestamps.clear();
  out.values.resize(max_steps, sample.covariates());
  out.mask.resize(max_steps, sample.covariates());
  for (Index i = 0; i < max_steps; ++i) {
    out.timestamps.push_back(sample.timestamps[keep[i]]);
    out.values.row(i) = sample.values.row(keep[i]);
    out.mask.row(i) = sample.mask.row(keep[i]);
  }
  out.delta = compute_delta(out.timestamps, out.mask);
  return out;
}

int DiscretizationSpec::horizon() const {
  if (!(bin_width > 0) || !(max_event_time > 0)) {
    throw std::invalid_argument("discretization: bin_width and max_event_time must be positive");
  }
  return static_cast<int>(std::ceil(1.25 * max_event_time / bin_width));
}

BinIndex discretize_event_time(double tau, const DiscretizationSpec& spec) {
  if (!(tau >= 0)) throw std::invalid_argument("discretize_event_time: negative time");
  const int horizon = spec.horizon();
  const double raw = std::floor(tau / spec.bin_width);
  if (raw >= horizon) return {horizon - 1, true};
  return {static_cast<int>(raw), false};
}

DatasetStats compute_stats(const std::vector<std::string>& covariates,
                           std::span<const LongitudinalSample* const> samples) {
  const std::size_t dims = covariates.size();
  DatasetStats stats;
  stats.covariates = covariates;
  stats.mean.assign(dims, 0.0);
  stats.stddev.assign(dims, 1.0);
  stats.constant.assign(dims, false);
  std::vector<double> count(dims, 0), sum(dims, 0), sumsq(dims, 0);
  double delta_sum = 0, delta_count = 0;
  for (const auto* s : samples) {
    if (static_cast<std::size_t>(s->covariates()) != dims) {
      throw ShapeError("compute_stats", "sample " + s->subject_id + " has " + std::to_string(s->covariates()) +
                                            " covariates, expected " + std::to_string(dims));
    }
    for (Index t = 0; t < s->steps(); ++t) {
      for (Index d = 0; d < s->covariates(); ++d) {
        if (s->delta(t, d) > 0) {
          delta_sum += s->delta(t, d);
          delta_count += 1;
        }
        if (s->mask(t, d) == 0) continue;
        const double v = s->values(t, d);
        count[d] += 1;
        sum[d] += v;
      }
    }
  }
  for (std::size_t d = 0; d < dims; ++d)
    if (count[d] > 0) stats.mean[d] = sum[d] / count[d];
  for (const auto* s : samples)
    for (Index t = 0; t < s->steps(); ++t)
      for (Index d = 0; d < s->covariates(); ++d)
        if (s->mask(t, d) != 0) {
          const double c = s->values(t, d) - stats.mean[d];
          sumsq[d] += c * c;
        }
  for (std::size_t d = 0; d < dims; ++d) {
    const double sd = count[d] > 1 ? std::sqrt(sumsq[d] / (count[d] - 1)) : 0.0;
    if (sd > 0) {
      stats.stddev[d] = sd;
    } else {
      stats.constant[d] = true;
      stats.stddev[d] = 1.0;
    }
  }
  stats.delta_scale = delta_count > 0 ? delta_sum / delta_count : 1.0;
  return stats;
}

DatasetStats compute_stats(const Dataset& data) {
  std::vector<const LongitudinalSample*> ptrs;
  for (const auto& s : data.samples) ptrs.push_back(&s);
  return compute_stats(data.covariates, ptrs);
}

EncoderInput normalize(const LongitudinalSample& sample, const DatasetStats& stats) {
  const Index dims = sample.covariates();
  if (static_cast<std::size_t>(dims) != stats.mean.size()) {
    throw ShapeError("normalize", "sample has " + std::to_string(dims) + " covariates, stats have " +
                                      std::to_string(stats.mean.size()));
  }
  EncoderInput in;
  in.mask = sample.mask;
  in.delta = sample.delta / stats.delta_scale;
  in.values = Tensor<double>::Zero(sample.steps(), dims);
  in.last_observed = Tensor<double>::Zero(sample.steps(), dims);
  Eigen::RowVectorXd last = Eigen::RowVectorXd::Zero(dims);
  for (Index t = 0; t < sample.steps(); ++t) {
    in.last_observed.row(t) = last;
    for (Index d = 0; d < dims; ++d) {
      if (sample.mask(t, d) == 0) continue;
      const double z = (sample.values(t, d) - stats.mean[d]) / stats.stddev[d];
      in.values(t, d) = z;
      last(d) = z;
    }
  }
  return in;
}

}  // namespace survseq

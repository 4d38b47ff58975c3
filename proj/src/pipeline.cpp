#include "survseq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "survseq/synthgen.hpp"

namespace survseq {

namespace {

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

void say(const std::function<void(const std::string&)>& log, const std::string& line) {
  if (log) log(line);
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

LossWeights loss_weights(const RunConfig& config, Index horizon) {
  return {config.loss.w_l, config.loss.ranking_weight(static_cast<int>(horizon)), config.loss.ranking};
}

// Everything the optimizer loop touches, prepared once per training run.
struct Prepared {
  std::vector<EncoderInput> inputs;
  std::vector<SurvivalLabel> labels;
};

Prepared prepare(const Dataset& data, std::span<const std::size_t> subjects, const DatasetStats& stats,
                 const DiscretizationSpec& spec) {
  Prepared p;
  p.inputs = encoder_inputs(data, subjects, stats);
  for (std::size_t i : subjects) p.labels.push_back(make_label(data.samples[i], spec));
  return p;
}

// Summed total loss of a minibatch; records onto `tape`.
LossTerms<float> batch_loss(Tape<float>& tape, const Bindings<float>& params, const ModelShape& shape,
                            const Prepared& data, std::span<const std::size_t> rows, const LossWeights& weights) {
  std::vector<const EncoderInput*> inputs;
  std::vector<SurvivalLabel> labels;
  for (std::size_t r : rows) {
    inputs.push_back(&data.inputs[r]);
    labels.push_back(data.labels[r]);
  }
  const auto batch = make_encoder_batch<float>(inputs);
  const Var<float> pdf = forward(tape, params, shape, batch);
  return total_loss(pdf, std::span<const SurvivalLabel>(labels), shape.events, weights);
}

// Mean per-subject loss over a prepared split, batched as in training.
double split_loss(const ParameterSet<float>& params, const ModelShape& shape, const Prepared& data,
                  const LossWeights& weights, int batch_size) {
  const std::size_t n = data.inputs.size();
  if (n == 0) return 0;
  double total = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    rows.clear();
    for (std::size_t r = start; r < std::min(n, start + batch_size); ++r) rows.push_back(r);
    Tape<float> tape;
    Bindings<float> b(tape, params, false);
    total += static_cast<double>(batch_loss(tape, b, shape, data, rows, weights).total.value()(0, 0));
  }
  return total / static_cast<double>(n);
}

}  // namespace

Dataset preprocess(Dataset data, const RunConfig& config) {
  const double threshold = config.merge_threshold();
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    auto s = merge_close_timestamps(data.samples[i], threshold);
    data.samples[i] = cap_length(s, config.data.max_steps, mix(config.train.seed, i));
  }
  return data;
}

Dataset load_dataset(const RunConfig& config) {
  Dataset raw;
  if (config.uses_synthetic()) {
    raw = generate(config.synthetic).data;
  } else {
    IngestOptions opts;
    opts.static_covariates = config.data.static_covariates;
    raw = ingest_long_format_files(config.data.observations, config.data.labels, opts);
  }
  return preprocess(std::move(raw), config);
}

DiscretizationSpec resolve_discretization(const RunConfig& config, const Dataset& data) {
  DiscretizationSpec spec = config.discretization;
  if (spec.max_event_time <= 0) {
    double m = 0;
    for (const auto& s : data.samples) m = std::max(m, s.event_time);
    if (!(m > 0)) throw DataError("cannot size the horizon: no positive event times");
    spec.max_event_time = m;
  }
  return spec;
}

SurvivalLabel make_label(const LongitudinalSample& sample, const DiscretizationSpec& spec) {
  return {sample.event_type, sample.event_time, discretize_event_time(sample.event_time, spec).index};
}

std::vector<SurvivalLabel> make_labels(std::span<const LongitudinalSample> samples, const DiscretizationSpec& spec) {
  std::vector<SurvivalLabel> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(make_label(s, spec));
  return out;
}

ModelShape model_shape(const RunConfig& config, Index covariates, int events, Index horizon) {
  ModelShape s;
  s.covariates = covariates;
  s.events = events;
  s.horizon = horizon;
  s.hidden = config.model.hidden;
  s.encoder_layers = config.model.encoder_layers;
  s.decoder_layers = config.model.decoder_layers;
  s.decoder = config.model.decoder;
  s.mlp_width = config.model.mlp_width;
  return s;
}

std::vector<EncoderInput> encoder_inputs(const Dataset& data, std::span<const std::size_t> subjects,
                                         const DatasetStats& stats) {
  std::vector<EncoderInput> out;
  out.reserve(subjects.size());
  for (std::size_t i : subjects) {
    if (data.samples.at(i).steps() == 0) throw DataError("subject '" + data.samples[i].subject_id + "' has no steps");
    out.push_back(normalize(data.samples[i], stats));
  }
  return out;
}

TrainResult train_model(const RunConfig& config, const Dataset& data, std::span<const std::size_t> train,
                        std::span<const std::size_t> validation, const TrainOptions& options) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("train_model: empty training split");
  std::vector<const LongitudinalSample*> train_samples;
  for (std::size_t i : train) train_samples.push_back(&data.samples.at(i));

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config_text = run_config_to_ini(config);
  ck.stats = compute_stats(data.covariates, train_samples);
  ck.discretization = resolve_discretization(config, data);
  const int events = std::max(1, data.num_events());
  ck.shape = model_shape(config, static_cast<Index>(data.covariates.size()), events, ck.discretization.horizon());

  const Prepared train_set = prepare(data, train, ck.stats, ck.discretization);
  const Prepared val_set = prepare(data, validation, ck.stats, ck.discretization);
  const Prepared& monitor = validation.empty() ? train_set : val_set;
  const LossWeights weights = loss_weights(config, ck.shape.horizon);
  const int batch_size = config.train.batch_size;

  ParameterSet<float> params = init_model_parameters(ck.shape, config.train.seed).cast<float>();
  AdamState<float> adam(params, config.optimizer);
  ck.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::mt19937_64 rng(mix(config.train.seed, 0x7261696eULL));
  std::vector<std::size_t> order(train_set.inputs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.train.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    std::string failure;
    for (std::size_t start = 0; start < order.size() && failure.empty(); start += batch_size) {
      const std::span<const std::size_t> rows(order.data() + start, std::min<std::size_t>(batch_size, order.size() - start));
      Tape<float> tape;
      Bindings<float> b(tape, params, true);
      const auto loss = batch_loss(tape, b, ck.shape, train_set, rows, weights);
      const float value = loss.total.value()(0, 0);
      if (!std::isfinite(value)) {
        failure = "non-finite training loss";
        break;
      }
      tape.backward(loss.total);
      auto grads = b.gradients();
      if (config.train.clip_norm > 0) clip_global_norm(grads, config.train.clip_norm);
      try {
        adam_step(adam, params, grads);
      } catch (const NonFiniteGradient& e) {
        failure = e.what();
      }
      epoch_loss += static_cast<double>(value);
    }
    const double val_loss = failure.empty() ? split_loss(params, ck.shape, monitor, weights, batch_size) : 0.0;
    if (failure.empty() && !std::isfinite(val_loss)) failure = "non-finite validation loss";
    if (!failure.empty()) {
      result.diverged = true;
      ck.history.stop_reason = "diverged at epoch " + std::to_string(epoch) + ": " + failure;
      say(options.log, ck.history.stop_reason);
      break;
    }
    const double train_loss = epoch_loss / static_cast<double>(order.size());
    ck.history.epochs.push_back({epoch, train_loss, val_loss});
    say(options.log, "epoch " + std::to_string(epoch) + " train_loss " + format_double(train_loss) +
                         " validation_loss " + format_double(val_loss));
    if (options.on_epoch) options.on_epoch(epoch, params);
    if (val_loss < best) {
      best = val_loss;
      since_best = 0;
      ck.params = params;
      ck.history.best_epoch = epoch;
    } else if (++since_best > config.train.patience) {
      ck.history.stop_reason = "early stop at epoch " + std::to_string(epoch);
      break;
    }
  }
  if (ck.history.stop_reason.empty()) ck.history.stop_reason = "max epochs";
  ck.optimizer = std::move(adam);
  return result;
}

double evaluate_loss(const RunConfig& config, const Checkpoint& model, const Dataset& data,
                     std::span<const std::size_t> subjects) {
  const Prepared set = prepare(data, subjects, model.stats, model.discretization);
  return split_loss(model.params, model.shape, set, loss_weights(config, model.shape.horizon), config.train.batch_size);
}

std::vector<int> assign_folds(std::size_t subjects, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("cross-validation needs at least 2 folds");
  std::vector<std::size_t> order(subjects);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix(seed, 0x666f6c64ULL));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold(subjects);
  for (std::size_t p = 0; p < subjects; ++p) fold[order[p]] = static_cast<int>(p % folds);
  return fold;
}

ValidationSplit split_validation(std::span<const std::size_t> subjects, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(subjects.begin(), subjects.end());
  std::mt19937_64 rng(mix(seed, 0x76616cULL));
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(order.size())));
  ValidationSplit s;
  s.validation.assign(order.begin(), order.begin() + std::min(held, order.size()));
  s.train.assign(order.begin() + std::min(held, order.size()), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<PdfMatrix> predict(const Checkpoint& model, const Dataset& data, std::span<const std::size_t> subjects) {
  if (static_cast<Index>(data.covariates.size()) != model.shape.covariates) {
    throw DataError("dataset has " + std::to_string(data.covariates.size()) + " covariates, model expects " +
                    std::to_string(model.shape.covariates));
  }
  const ParameterSet<double> params = model.params.cast<double>();
  const auto inputs = encoder_inputs(data, subjects, model.stats);
  std::vector<PdfMatrix> out;
  out.reserve(inputs.size());
  constexpr std::size_t chunk = 256;
  for (std::size_t start = 0; start < inputs.size(); start += chunk) {
    std::vector<const EncoderInput*> ptrs;
    for (std::size_t i = start; i < std::min(inputs.size(), start + chunk); ++i) ptrs.push_back(&inputs[i]);
    auto part = predict_pdfs(params, model.shape, ptrs);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<PdfMatrix> predict(const Checkpoint& model, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  return predict(model, data, all);
}

Dataset align_covariates(Dataset data, const std::vector<std::string>& expected) {
  const std::set<std::string> have(data.covariates.begin(), data.covariates.end());
  const std::set<std::string> want(expected.begin(), expected.end());
  std::vector<std::string> missing, extra;
  std::set_difference(want.begin(), want.end(), have.begin(), have.end(), std::back_inserter(missing));
  std::set_difference(have.begin(), have.end(), want.begin(), want.end(), std::back_inserter(extra));
  if (!missing.empty() || !extra.empty()) {
    throw DataError("covariate mismatch: missing [" + join(missing) + "] extra [" + join(extra) + "]");
  }
  if (data.covariates == expected) return data;
  std::vector<Index> source(expected.size());
  for (std::size_t d = 0; d < expected.size(); ++d) {
    source[d] = std::find(data.covariates.begin(), data.covariates.end(), expected[d]) - data.covariates.begin();
  }
  for (auto& s : data.samples) {
    Tensor<double> v(s.steps(), expected.size()), m(s.steps(), expected.size()), dl(s.steps(), expected.size());
    for (std::size_t d = 0; d < expected.size(); ++d) {
      v.col(d) = s.values.col(source[d]);
      m.col(d) = s.mask.col(source[d]);
      dl.col(d) = s.delta.col(source[d]);
    }
    s.values = std::move(v);
    s.mask = std::move(m);
    s.delta = std::move(dl);
  }
  data.covariates = expected;
  return data;
}

FoldResult run_fold(const RunConfig& config, const Dataset& data, std::span<const int> assignment, int fold,
                    const std::function<void(const std::string&)>& log) {
  FoldResult r;
  r.fold = fold;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < assignment.size(); ++i) (assignment[i] == fold ? r.test : rest).push_back(i);
  const auto split = split_validation(rest, config.train.validation_fraction, mix(config.train.seed, 100 + fold));
  TrainOptions opts;
  opts.log = log;
  const auto trained = train_model(config, data, split.train, split.validation, opts);
  r.history = trained.checkpoint.history;
  r.diverged = trained.diverged;

  const auto& spec = trained.checkpoint.discretization;
  for (std::size_t i : r.test) r.labels.push_back(make_label(data.samples[i], spec));
  r.predictions = predict(trained.checkpoint, data, r.test);
  if (std::none_of(r.labels.begin(), r.labels.end(), [](const SurvivalLabel& l) { return !l.censored(); })) {
    say(log, "warning: fold " + std::to_string(fold) + " has no uncensored test subjects; its metrics are absent");
  }
  r.metrics = evaluate_split(r.labels, r.predictions, spec.bin_width);
  return r;
}

CrossValidation crossvalidate(const RunConfig& config, const Dataset& data, const CrossValidationOptions& options) {
  CrossValidation cv;
  cv.assignment = assign_folds(data.size(), config.folds, config.train.seed);
  std::vector<FoldMetrics> metrics;
  for (int f = 0; f < config.folds; ++f) {
    if (!options.only_folds.empty() &&
        std::find(options.only_folds.begin(), options.only_folds.end(), f) == options.only_folds.end()) {
      continue;
    }
    say(options.log, "fold " + std::to_string(f));
    cv.folds.push_back(run_fold(config, data, cv.assignment, f, options.log));
    metrics.push_back(cv.folds.back().metrics);
  }
  cv.summary = aggregate_folds(metrics);
  return cv;
}

namespace {

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

}  // namespace

void write_report_text(std::ostream& out, const std::string& model, const CrossValidation& cv,
                       const RunConfig& config) {
  out << "model = " << model << "\n";
  out << "folds = " << cv.folds.size() << "\n";
  out << "seed = " << config.train.seed << "\n";
  out << "quantile_estimator = linear interpolation between order statistics\n";
  out << "quantile_buckets = cumulative\n";
  out << "mae_unit = " << config.data.time_unit << "\n";
  for (const auto& f : cv.folds) {
    const std::string p = "fold." + std::to_string(f.fold) + ".";
    out << p << "test_subjects = " << f.test.size() << "\n";
    out << p << "epochs = " << f.history.epochs.size() << "\n";
    out << p << "best_epoch = " << f.history.best_epoch << "\n";
    out << p << "stop_reason = " << f.history.stop_reason << "\n";
    out << p << "roughness = " << format_double(f.metrics.roughness) << "\n";
    for (std::size_t q = 0; q < f.metrics.thresholds.size(); ++q) {
      out << p << "threshold." << format_double(f.metrics.levels[q]) << " = "
          << format_double(f.metrics.thresholds[q]) << "\n";
    }
    for (const auto& c : f.metrics.cells) {
      const std::string k = p + "event" + std::to_string(c.event) + ".q" + format_double(c.level) + ".";
      out << k << "mae = " << optional_text(c.mae) << "\n";
      out << k << "ci = " << optional_text(c.ci) << "\n";
    }
  }
  for (const auto& r : cv.summary) {
    const std::string k = "summary.event" + std::to_string(r.event) + ".q" + format_double(r.level) + "." + r.metric + ".";
    out << k << "mean = " << format_double(r.value.mean) << "\n";
    out << k << "std = " << optional_text(r.value.stddev) << "\n";
    out << k << "lower = " << optional_text(r.value.lower) << "\n";
    out << k << "upper = " << optional_text(r.value.upper) << "\n";
  }
}

void write_report_csv(std::ostream& out, const std::string& model, std::span<const AggregateRow> rows) {
  out << "model,event,quantile,metric,mean,std,lower,upper\n";
  for (const auto& r : rows) {
    out << model << ',' << r.event << ',' << format_double(r.level) << ',' << r.metric << ','
        << format_double(r.value.mean) << ',' << optional_text(r.value.stddev) << ','
        << optional_text(r.value.lower) << ',' << optional_text(r.value.upper) << '\n';
  }
}

void write_pdf_table(std::ostream& out, std::span<const std::string> subjects, std::span<const PdfMatrix> pdfs,
                     double bin_width, const std::string& time_unit) {
  const Index horizon = pdfs.empty() ? 0 : pdfs.front().horizon();
  out << "# bin_width = " << format_double(bin_width) << "\n";
  out << "# horizon = " << horizon << "\n";
  out << "# time_unit = " << time_unit << "\n";
  out << "subject_id,event,bin,probability,cdf\n";
  for (std::size_t i = 0; i < pdfs.size(); ++i) {
    for (int k = 1; k <= pdfs[i].events(); ++k) {
      const auto cdf = pdfs[i].cdf_curve(k);
      for (Index t = 0; t < pdfs[i].horizon(); ++t) {
        out << subjects[i] << ',' << k << ',' << t << ',' << format_double(pdfs[i](k, t)) << ','
            << format_double(cdf[t]) << '\n';
      }
    }
  }
}

void write_curve(std::ostream& out, const PdfMatrix& pdf, int event, double bin_width) {
  out << "bin,time,pdf,cdf\n";
  const auto cdf = pdf.cdf_curve(event);
  for (Index t = 0; t < pdf.horizon(); ++t) {
    out << t << ',' << format_double(static_cast<double>(t) * bin_width) << ',' << format_double(pdf(event, t)) << ','
        << format_double(cdf[t]) << '\n';
  }
}

}  // namespace survseq

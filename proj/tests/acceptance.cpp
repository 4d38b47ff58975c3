// Acceptance harness: one PASS/FAIL line per criterion. Pass criterion
// numbers as arguments to run a subset; exits non-zero if any selected
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "survseq/gradcheck.hpp"
#include "survseq/pipeline.hpp"

using namespace survseq;

namespace {

using Mat = Tensor<double>;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

Mat random_mat(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Normalized-looking encoder inputs with some entries missing. Gaps are kept
// strictly positive so no decay relu sits on its kink.
std::vector<EncoderInput> random_inputs(int n, Index covariates, std::mt19937_64& rng) {
  std::vector<EncoderInput> ins;
  for (int i = 0; i < n; ++i) {
    EncoderInput in;
    const Index L = 2 + i % 3;
    in.values = random_mat(L, covariates, rng);
    in.mask = (random_mat(L, covariates, rng).array() > -0.3).cast<double>().matrix();
    in.delta = random_mat(L, covariates, rng).cwiseAbs().array() + 0.05;
    in.last_observed = random_mat(L, covariates, rng);
    ins.push_back(in);
  }
  return ins;
}

std::vector<const EncoderInput*> pointers(const std::vector<EncoderInput>& ins) {
  std::vector<const EncoderInput*> p;
  for (const auto& in : ins) p.push_back(&in);
  return p;
}

// ---------------------------------------------------------------------------

Verdict gradient_integrity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const auto ins = random_inputs(3, 3, rng);
  const auto batch = make_encoder_batch<double>(pointers(ins));
  const std::vector<SurvivalLabel> labels{{1, 1.5, 1}, {2, 3.2, 3}, {0, 2.7, 2}};

  struct Case {
    DecoderKind decoder;
    LossWeights weights;
    const char* name;
  };
  const std::vector<Case> cases{
      {DecoderKind::recurrent, {1.0, 0.0}, "recurrent/likelihood"},
      {DecoderKind::recurrent, {0.0, 1.0, RankingVariant::eq5}, "recurrent/ranking-all-bins"},
      {DecoderKind::recurrent, {1.0, 1.0, RankingVariant::eq4}, "recurrent/likelihood+ranking-event-bin"},
      {DecoderKind::mlp, {1.0, 1.0, RankingVariant::eq5}, "mlp/likelihood+ranking-all-bins"},
  };
  double worst = 0;
  std::size_t tensors = 0;
  std::vector<std::string> failures;
  for (const auto& c : cases) {
    ModelShape shape;
    shape.covariates = 3;
    shape.events = 2;
    shape.horizon = 5;
    shape.hidden = 8;
    shape.decoder = c.decoder;
    const auto params = init_model_parameters(shape, 7);
    const auto report = grad_check(
        [&](Tape<double>& tape, const Bindings<double>& b) {
          const auto pdf = forward(tape, b, shape, batch);
          return total_loss(pdf, std::span<const SurvivalLabel>(labels), shape.events, c.weights).total;
        },
        params, 1e-4);
    worst = std::max(worst, report.max_rel_error());
    tensors += report.parameters.size();
    for (const auto& f : report.failures()) failures.push_back(std::string(c.name) + ":" + f);
  }
  const double secs = seconds_since(t0);
  std::string detail = "max relative error " + fmt(worst, 3) + " over " + std::to_string(tensors) +
                       " parameter tensors in 4 graphs, " + fmt(secs, 3) + " s (limits 1e-4, 60 s)";
  for (const auto& f : failures) detail += "; failed " + f;
  return {failures.empty() && worst < 1e-4 && secs < 60, detail};
}

Verdict normalization_invariant() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> events(1, 3), horizon(1, 12), hidden(2, 8), covariates(1, 4), layers(1, 2);
  double worst = 0;
  long violations = 0;
  for (int pass = 0; pass < 1000; ++pass) {
    ModelShape shape;
    shape.events = events(rng);
    shape.horizon = horizon(rng);
    shape.hidden = hidden(rng);
    shape.covariates = covariates(rng);
    shape.encoder_layers = layers(rng);
    shape.decoder_layers = layers(rng);
    shape.decoder = pass % 2 ? DecoderKind::mlp : DecoderKind::recurrent;
    auto params = init_model_parameters(shape, 1000 + pass);
    const double scale = pass % 3 == 0 ? 1.0 : pass % 3 == 1 ? 4.0 : 15.0;
    for (std::size_t i = 0; i < params.size(); ++i) params.entry(i).value *= scale;
    const auto ins = random_inputs(2, shape.covariates, rng);
    for (const auto& pdf : predict_pdfs(params, shape, pointers(ins))) {
      worst = std::max(worst, std::abs(pdf.total() - 1.0));
      for (int k = 1; k <= shape.events; ++k) {
        const auto c = pdf.cdf_curve(k);
        for (std::size_t t = 1; t < c.size(); ++t) violations += c[t] < c[t - 1];
      }
    }
  }
  return {worst <= 1e-6 && violations == 0, "1000 random-parameter passes, max |sum p - 1| = " + fmt(worst, 3) +
                                                 ", CDF monotonicity violations " + std::to_string(violations)};
}

Verdict loss_verbatim() {
  // Two events, three bins, bin width 1. A: event 1 at t=0.5; B: event 2 at
  // t=1.5; C: censored at t=1.8.
  Mat p(3, 6);
  p << 0.30, 0.10, 0.10, 0.20, 0.20, 0.10,
       0.05, 0.10, 0.15, 0.10, 0.40, 0.20,
       0.10, 0.10, 0.20, 0.05, 0.05, 0.50;
  const std::vector<SurvivalLabel> labels{{1, 0.5, 0}, {2, 1.5, 1}, {0, 1.8, 1}};

  // Likelihood: -ln p_A[1][0] - ln p_B[2][1] - ln(1 - CDF_1,C(1) - CDF_2,C(1)).
  const double nll = -std::log(0.30) - std::log(0.40) - std::log(1.0 - 0.20 - 0.10);
  // Pairs (A,B) and (A,C) on event 1, (B,C) on event 2. CDFs:
  //   event 1: A .30 .40 .50   B .05 .15 .30   C .10 .20 .40
  //   event 2: B .10 .50 .70   C .05 .10 .60
  const double all_bins = -(std::exp(0.25) + std::exp(0.25) + std::exp(0.20) +  // (A,B)
                            std::exp(0.20) + std::exp(0.20) + std::exp(0.10) +  // (A,C)
                            std::exp(0.05) + std::exp(0.40) + std::exp(0.10)) /  // (B,C)
                          3.0;
  const double event_bin = -(std::exp(0.25) + std::exp(0.20) + std::exp(0.40)) / 3.0;

  Tape<double> tape;
  const auto pdf = tape.constant(p);
  const std::span<const SurvivalLabel> span(labels);
  const auto t5 = total_loss(pdf, span, 2, LossWeights{1.0, 1.0, RankingVariant::eq5});
  const auto t4 = total_loss(pdf, span, 2, LossWeights{1.0, 1.0, RankingVariant::eq4});
  const double errors[] = {std::abs(t5.likelihood - nll), std::abs(t5.ranking - all_bins),
                           std::abs(t5.total.value()(0, 0) - (nll + all_bins)), std::abs(t4.ranking - event_bin),
                           std::abs(t4.total.value()(0, 0) - (nll + event_bin))};
  double worst = *std::max_element(std::begin(errors), std::end(errors));

  // Single-term cases: p = 0.5 -> ln 2; censored with CDF 0.25 -> -ln 0.75;
  // one pair with identical PDFs over four bins -> -4.
  auto one_event = [](std::initializer_list<double> row, Index rows = 1) {
    Mat m(rows, static_cast<Index>(row.size()));
    for (Index r = 0; r < rows; ++r) m.row(r) = Eigen::Map<const Eigen::RowVectorXd>(row.begin(), m.cols());
    return m;
  };
  const std::vector<SurvivalLabel> hit{{1, 0.5, 0}}, cens{{0, 0.5, 0}}, pair{{1, 0.5, 0}, {1, 2.5, 2}};
  const Mat half = one_event({0.5, 0.5}), quarter = one_event({0.25, 0.75}), flat = one_event({0.4, 0.3, 0.2, 0.1}, 2);
  const auto pairs = build_pairs(pair);
  auto value = [](const Var<double>& v) { return v.value()(0, 0); };
  worst = std::max({worst, std::abs(value(log_likelihood(tape.constant(half), hit, 1)) - std::log(2.0)),
                    std::abs(value(log_likelihood(tape.constant(quarter), cens, 1)) + std::log(0.75)),
                    std::abs(value(ranking_loss(tape.constant(flat), pair, std::span<const RankingPair>(pairs), 1,
                                                RankingVariant::eq5)) +
                             4.0)});
  return {worst <= 1e-10, "likelihood " + fmt(t5.likelihood, 12) + " vs " + fmt(nll, 12) + ", all-bin ranking " +
                              fmt(t5.ranking, 12) + " vs " + fmt(all_bins, 12) + ", max abs error " + fmt(worst, 3) +
                              " (limit 1e-10)"};
}

Verdict metric_oracle() {
  std::mt19937_64 rng(303);
  int mismatches = 0, tie_instances = 0;
  long long pairs = 0;
  for (int instance = 0; instance < 50; ++instance) {
    const int n = std::uniform_int_distribution<int>(2, 100)(rng);
    const int time_levels = std::max(2, n / 3);
    std::uniform_int_distribution<int> ev(0, 2), tm(0, time_levels - 1), coarse(0, 9);
    std::normal_distribution<double> n01;
    const bool tied_risk = instance % 2 == 0;
    std::vector<SurvivalLabel> labels;
    std::vector<double> risk;
    for (int i = 0; i < n; ++i) {
      const int t = tm(rng);
      labels.push_back({ev(rng), static_cast<double>(t), t});
      risk.push_back(tied_risk ? coarse(rng) / 10.0 : n01(rng));
    }
    const int event = 1 + instance % 2;
    const double horizon = std::uniform_real_distribution<double>(0, time_levels)(rng);
    long long concordant = 0, ties = 0, comparable = 0;
    for (int i = 0; i < n; ++i) {
      if (labels[i].event != event || labels[i].time > horizon) continue;
      for (int j = 0; j < n; ++j) {
        if (!(labels[i].time < labels[j].time)) continue;
        ++comparable;
        concordant += risk[i] > risk[j];
        ties += risk[i] == risk[j];
      }
    }
    const auto c = concordance_counts(risk, labels, event, horizon);
    const auto ci = time_dependent_ci(risk, labels, event, horizon);
    const std::optional<double> expected =
        comparable ? std::optional<double>((concordant + 0.5 * ties) / static_cast<double>(comparable)) : std::nullopt;
    mismatches += c.concordant != concordant || c.ties != ties || c.comparable != comparable || ci != expected;
    tie_instances += ties > 0;
    pairs += comparable;
  }
  return {mismatches == 0, "50 instances (" + std::to_string(tie_instances) + " with tied risks, " +
                               std::to_string(pairs) + " comparable pairs), exact mismatches " +
                               std::to_string(mismatches)};
}

Verdict generator_statistics() {
  const auto t0 = Clock::now();
  const auto ds = generate(SyntheticConfig{});
  std::vector<double> times;
  for (const auto& s : ds.data.samples)
    if (!s.censored()) times.push_back(s.event_time);
  double mean = 0;
  for (double t : times) mean += t;
  mean /= static_cast<double>(times.size());
  const std::vector<double> half{0.5};
  const double median = quantiles(times, half)[0];
  const double secs = seconds_since(t0);
  const double cens = ds.censored_fraction(), miss = ds.missing_fraction();
  const bool pass = std::abs(cens - 0.20) <= 0.02 && std::abs(miss - 0.77) <= 0.02 && mean > median && secs < 120;
  return {pass, "n " + std::to_string(ds.data.size()) + ", censored " + fmt(cens) + " (0.20 +/- 0.02), missing " +
                    fmt(miss) + " (0.77 +/- 0.02), event-time mean " + fmt(mean) + " > median " + fmt(median) + ", " +
                    fmt(secs, 3) + " s (limit 120 s)"};
}

// --- desk-scale cross-validation shared by criteria 6, 7 and 9 ------------

RunConfig desk_config(DecoderKind decoder) {
  RunConfig c;
  c.synthetic.n_samples = 4000;  // otherwise the default process: 20 covariates, 2 events
  c.synthetic.max_event_time = 200;
  c.discretization = {2.0, 200.0};
  c.model.hidden = 64;
  c.model.decoder = decoder;
  c.folds = 5;
  return c;
}

struct DeskRun {
  RunConfig config;
  CrossValidation cv;
  double seconds = 0;
};

DeskRun run_desk(DecoderKind decoder) {
  DeskRun r;
  r.config = desk_config(decoder);
  const auto t0 = Clock::now();
  r.cv = crossvalidate(r.config, load_dataset(r.config));
  r.seconds = seconds_since(t0);
  return r;
}

double summary_mean(const CrossValidation& cv, int event, const std::string& metric) {
  for (const auto& row : cv.summary)
    if (row.event == event && row.level == 1.0 && row.metric == metric) return row.value.mean;
  return std::nan("");
}

// Cumulative incidence of `event` by time t under the true generating
// process: both latent times are Weibull with the same shape, so with
// h_k = g_k^-shape, F_k(t) = h_k / (h_1 + h_2) * (1 - exp(-t^shape (h_1 + h_2))).
double true_incidence(const SyntheticConfig& resolved, std::span<const double> x, int event, double t) {
  const auto [s1, s2] = event_scores(x, resolved);
  const double g = resolved.event_shape;
  const double h1 = std::pow(event_scale(s1, resolved), -g), h2 = std::pow(event_scale(s2, resolved), -g);
  return (event == 1 ? h1 : h2) / (h1 + h2) * (1.0 - std::exp(-std::pow(t, g) * (h1 + h2)));
}

// CI of the true incidence on the same folds and truncation times: the best
// any model of the baseline covariates can reach on this draw.
std::vector<double> bayes_ci(const DeskRun& run) {
  const auto truth = generate(run.config.synthetic);
  std::vector<double> out;
  for (int k = 1; k <= 2; ++k) {
    double acc = 0;
    int n = 0;
    for (const auto& f : run.cv.folds) {
      if (f.metrics.thresholds.empty()) continue;
      const double threshold = f.metrics.thresholds.back();
      std::vector<double> risk;
      for (std::size_t i : f.test) {
        const auto row = truth.covariates.row(static_cast<Index>(i));
        risk.push_back(true_incidence(truth.config, std::span<const double>(row.data(), row.size()), k, threshold));
      }
      if (const auto ci = time_dependent_ci(risk, f.labels, k, threshold)) {
        acc += *ci;
        ++n;
      }
    }
    out.push_back(n ? acc / n : std::nan(""));
  }
  return out;
}

Verdict desk_reproduction(const DeskRun& run) {
  const double ci1 = summary_mean(run.cv, 1, "ci"), ci2 = summary_mean(run.cv, 2, "ci");
  const double mae1 = summary_mean(run.cv, 1, "mae"), mae2 = summary_mean(run.cv, 2, "mae");
  const double ci = (ci1 + ci2) / 2, mae = (mae1 + mae2) / 2;
  const auto bayes = bayes_ci(run);
  const bool pass = ci >= 0.75 && mae <= 25 && run.seconds < 3600;
  return {pass, "5-fold CV in " + fmt(run.seconds, 4) + " s (limit 3600 s); 100% quantile CI " + fmt(ci1) + "/" +
                    fmt(ci2) + " mean " + fmt(ci) + " (need >= 0.75); MAE " + fmt(mae1) + "/" + fmt(mae2) + " mean " +
                    fmt(mae) + " (need <= 25); CI of the true generating incidence on the same folds " +
                    fmt(bayes[0]) + "/" + fmt(bayes[1]) + " mean " + fmt((bayes[0] + bayes[1]) / 2)};
}

Verdict anti_collapse(const DeskRun& run) {
  std::vector<double> predicted, truth;
  for (const auto& f : run.cv.folds) {
    for (std::size_t i = 0; i < f.labels.size(); ++i) {
      if (f.labels[i].censored()) continue;
      predicted.push_back(f.predictions[i].predicted_time(f.labels[i].event) * run.config.discretization.bin_width);
      truth.push_back(f.labels[i].time);
    }
  }
  const double r = pearson_correlation(predicted, truth);
  const std::vector<double> decile{0.9};
  const double cut = quantiles(truth, decile)[0];
  double top = 0, all = 0;
  int n_top = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    all += predicted[i];
    if (truth[i] >= cut) {
      top += predicted[i];
      ++n_top;
    }
  }
  all /= static_cast<double>(predicted.size());
  top /= n_top;
  return {r >= 0.6 && top > all, std::to_string(predicted.size()) + " uncensored test subjects, Pearson " + fmt(r) +
                                     " (need >= 0.6), mean prediction in top true-time decile " + fmt(top) +
                                     " vs overall " + fmt(all)};
}

Verdict smoothness(const DeskRun& recurrent, const DeskRun& mlp) {
  auto mean_roughness = [](const DeskRun& r) {
    double acc = 0;
    for (const auto& f : r.cv.folds) acc += f.metrics.roughness;
    return acc / static_cast<double>(r.cv.folds.size());
  };
  auto head_size = [](const DeskRun& r) {
    const auto& f = r.cv.folds.front();
    ModelShape s = model_shape(r.config, 20, 2, f.predictions.front().horizon());
    std::size_t n = 0;
    const auto layout = model_parameter_layout<double>(s);
    for (std::size_t i = 0; i < layout.size(); ++i) n += static_cast<std::size_t>(layout.entry(i).value.size());
    return n;
  };
  const double a = mean_roughness(recurrent), b = mean_roughness(mlp);
  return {a < b, "mean |p[t+1] - p[t]| recurrent " + fmt(a) + " vs MLP head " + fmt(b) + " (parameters " +
                     std::to_string(head_size(recurrent)) + " vs " + std::to_string(head_size(mlp)) + ")"};
}

// ---------------------------------------------------------------------------

Verdict censoring_behavior() {
  RunConfig c;
  c.synthetic.num_covariates = 4;
  c.synthetic.n_samples = 200;
  c.synthetic.max_event_time = 40;
  c.synthetic.max_steps = 6;
  c.discretization = {2.0, 40.0};
  c.model.hidden = 16;
  c.train.max_epochs = 20;
  c.train.patience = 20;
  c.train.validation_fraction = 0;
  Dataset data = load_dataset(c);
  const Index c_bin = 5;
  // Labels only: every subject censored inside bin c.
  for (auto& s : data.samples) {
    s.event_type = 0;
    s.event_time = (static_cast<double>(c_bin) + 0.5) * c.discretization.bin_width;
  }
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<const LongitudinalSample*> ptrs;
  for (const auto& s : data.samples) ptrs.push_back(&s);
  const auto inputs = encoder_inputs(data, all, compute_stats(data.covariates, ptrs));
  const ModelShape shape = model_shape(c, static_cast<Index>(data.covariates.size()), std::max(1, data.num_events()),
                                       c.discretization.horizon());

  auto mass_at_c = [&](const ParameterSet<double>& params) {
    double acc = 0;
    for (const auto& pdf : predict_pdfs(params, shape, pointers(inputs)))
      for (int k = 1; k <= pdf.events(); ++k) acc += pdf.cdf(k, c_bin);
    return acc / static_cast<double>(inputs.size());
  };
  std::vector<double> mass{mass_at_c(init_model_parameters(shape, c.train.seed).cast<float>().cast<double>())};
  TrainOptions opts;
  opts.on_epoch = [&](int, const ParameterSet<float>& p) { mass.push_back(mass_at_c(p.cast<double>())); };
  train_model(c, data, all, {}, opts);

  bool decreasing = mass.size() == 21;
  for (std::size_t e = 1; e < mass.size(); ++e) decreasing = decreasing && mass[e] < mass[e - 1];
  std::string trace;
  for (std::size_t e = 0; e < mass.size(); e += 5) trace += (e ? " " : "") + fmt(mass[e], 3);
  return {decreasing, "mean sum_k CDF_k(c) over " + std::to_string(mass.size() - 1) +
                          " epochs strictly decreasing: " + (decreasing ? "yes" : "no") + " (epochs 0,5,..: " + trace +
                          ", final " + fmt(mass.back(), 3) + ")"};
}

Verdict determinism() {
  RunConfig c;
  c.synthetic.num_covariates = 5;
  c.synthetic.n_samples = 300;
  c.synthetic.max_event_time = 40;
  c.synthetic.max_steps = 8;
  c.discretization = {2.0, 40.0};
  c.model.hidden = 12;
  c.train.max_epochs = 8;
  c.train.seed = 17;
  const Dataset data = load_dataset(c);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const auto split = split_validation(all, 0.2, c.train.seed);
  const auto a = train_model(c, data, split.train, split.validation).checkpoint;
  const auto b = train_model(c, data, split.train, split.validation).checkpoint;
  auto bytes = [](const Checkpoint& ck) {
    std::ostringstream out;
    save_checkpoint(ck, out);
    return out.str();
  };
  const bool same_history = a.history == b.history && !a.history.epochs.empty();
  const std::string saved = bytes(a);
  const bool same_checkpoint = saved == bytes(b);

  std::istringstream in(saved);
  const auto loaded = load_checkpoint(in);
  const std::vector<std::size_t> probe(all.begin(), all.begin() + 32);
  const auto before = predict(a, data, probe), after = predict(loaded, data, probe);
  bool identical = before.size() == after.size();
  for (std::size_t i = 0; identical && i < before.size(); ++i) identical = before[i].values() == after[i].values();
  return {same_history && same_checkpoint && identical,
          std::to_string(a.history.epochs.size()) + "-epoch history identical across runs: " +
              (same_history ? "yes" : "no") + ", checkpoint bytes identical: " + (same_checkpoint ? "yes" : "no") +
              ", round-trip predictions on 32-subject probe bit-identical: " + (identical ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  std::optional<DeskRun> recurrent, mlp;
  if (selected.count(6) || selected.count(7) || selected.count(9)) recurrent = run_desk(DecoderKind::recurrent);
  if (selected.count(9)) mlp = run_desk(DecoderKind::mlp);

  const std::map<int, std::function<Verdict()>> criteria{
      {1, gradient_integrity},
      {2, normalization_invariant},
      {3, loss_verbatim},
      {4, metric_oracle},
      {5, generator_statistics},
      {6, [&] { return desk_reproduction(*recurrent); }},
      {7, [&] { return anti_collapse(*recurrent); }},
      {8, censoring_behavior},
      {9, [&] { return smoothness(*recurrent, *mlp); }},
      {10, determinism},
  };
  int failed = 0;
  for (int n : selected) {
    const auto it = criteria.find(n);
    if (it == criteria.end()) continue;
    const Verdict o = it->second();
    failed += !o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

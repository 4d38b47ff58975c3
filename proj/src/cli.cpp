#include "survseq/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "survseq/pipeline.hpp"
#include "survseq/synthgen.hpp"

namespace survseq {

namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string checkpoint;
  std::string sample;
};

// Failures carrying their own exit code and error kind.
struct CliFailure {
  int code;
  std::string kind;
  std::string message;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CliFailure{1, "io", "cannot write '" + path.string() + "'"};
  return out;
}

fs::path prepare_out_dir(const Options& o) {
  fs::path dir(o.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliFailure{1, "io", "cannot create '" + dir.string() + "': " + ec.message()};
  return dir;
}

RunConfig run_config(const Options& o) {
  if (o.config.empty()) throw CliFailure{2, "usage", "--config is required"};
  RunConfig c = load_run_config(o.config);
  if (o.seed) {
    c.train.seed = *o.seed;
    c.synthetic.seed = *o.seed;
  }
  c.validate();
  return c;
}

/// Config for commands driven by a checkpoint: an explicit --config wins,
/// otherwise the configuration stored in the checkpoint.
RunConfig checkpoint_config(const Options& o, const Checkpoint& ck) {
  if (!o.config.empty()) return run_config(o);
  std::istringstream in(ck.config_text);
  return parse_run_config(in);
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& config) {
  auto out = open_out(dir / "run_manifest.txt");
  out << "; survseq " << kVersion << " " << command << "\n";
  out << "; seed " << config.train.seed << "\n";
  out << run_config_to_ini(config);
}

std::vector<std::string> subject_ids(const Dataset& data) {
  std::vector<std::string> ids;
  for (const auto& s : data.samples) ids.push_back(s.subject_id);
  return ids;
}

int cmd_generate(const Options& o, std::ostream& out) {
  if (o.config.empty()) throw CliFailure{2, "usage", "--config is required"};
  SyntheticConfig c = load_synthetic_config(o.config);
  if (o.seed) c.seed = *o.seed;
  const auto dir = prepare_out_dir(o);
  const auto ds = generate(c);
  export_dataset(ds, dir.string());
  out << "subjects " << ds.data.size() << "\n";
  out << "censored_fraction " << format_double(ds.censored_fraction()) << "\n";
  out << "missing_fraction " << format_double(ds.missing_fraction()) << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig config = run_config(o);
  const auto dir = prepare_out_dir(o);
  const Dataset data = load_dataset(config);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const auto split = split_validation(all, config.train.validation_fraction, config.train.seed);
  TrainOptions opts;
  opts.log = [&out](const std::string& line) { out << line << "\n"; };
  const auto result = train_model(config, data, split.train, split.validation, opts);
  save_checkpoint(result.checkpoint, (dir / "model.ckpt").string());
  auto history = open_out(dir / "history.csv");
  history << "epoch,train_loss,validation_loss\n";
  for (const auto& e : result.checkpoint.history.epochs) {
    history << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.validation_loss) << '\n';
  }
  write_manifest(dir, "train", config);
  if (result.diverged) throw CliFailure{3, "diverged", result.checkpoint.history.stop_reason + "; last good weights saved"};
  out << "best_epoch " << result.checkpoint.history.best_epoch << "\n";
  out << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_cv(const Options& o, std::ostream& out) {
  const RunConfig config = run_config(o);
  const auto dir = prepare_out_dir(o);
  const Dataset data = load_dataset(config);
  CrossValidationOptions opts;
  opts.log = [&out](const std::string& line) { out << line << "\n"; };
  const auto cv = crossvalidate(config, data, opts);
  const std::string model = to_string(config.model.decoder);
  {
    auto txt = open_out(dir / "report.txt");
    write_report_text(txt, model, cv, config);
    auto csv = open_out(dir / "report.csv");
    write_report_csv(csv, model, cv.summary);
  }
  write_manifest(dir, "cv", config);
  out << "report " << (dir / "report.csv").string() << "\n";
  return 0;
}

Dataset checkpoint_data(const RunConfig& config, const Checkpoint& ck) {
  return align_covariates(load_dataset(config), ck.stats.covariates);
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw CliFailure{2, "usage", "--checkpoint is required"};
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig config = checkpoint_config(o, ck);
  const auto dir = prepare_out_dir(o);
  const Dataset data = checkpoint_data(config, ck);
  const auto pdfs = predict(ck, data);
  CrossValidation single;
  FoldResult f;
  f.labels = make_labels(data.samples, ck.discretization);
  f.metrics = evaluate_split(f.labels, pdfs, ck.discretization.bin_width);
  f.history = ck.history;
  f.test.resize(data.size());
  std::iota(f.test.begin(), f.test.end(), 0);
  single.summary = aggregate_folds(std::span<const FoldMetrics>(&f.metrics, 1));
  single.folds.push_back(std::move(f));
  const std::string model = to_string(ck.shape.decoder);
  {
    auto txt = open_out(dir / "report.txt");
    write_report_text(txt, model, single, config);
    auto csv = open_out(dir / "report.csv");
    write_report_csv(csv, model, single.summary);
  }
  out << "report " << (dir / "report.csv").string() << "\n";
  return 0;
}

int cmd_predict(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw CliFailure{2, "usage", "--checkpoint is required"};
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig config = checkpoint_config(o, ck);
  const auto dir = prepare_out_dir(o);
  const Dataset data = checkpoint_data(config, ck);
  const auto pdfs = predict(ck, data);
  const auto ids = subject_ids(data);
  {
    auto table = open_out(dir / "predictions.csv");
    write_pdf_table(table, ids, pdfs, ck.discretization.bin_width, config.data.time_unit);
    auto times = open_out(dir / "predicted_times.csv");
    times << "subject_id,event,predicted_time\n";
    for (std::size_t i = 0; i < pdfs.size(); ++i) {
      for (int k = 1; k <= pdfs[i].events(); ++k) {
        times << ids[i] << ',' << k << ',' << format_double(pdfs[i].predicted_time(k) * ck.discretization.bin_width)
              << '\n';
      }
    }
  }
  out << "subjects " << pdfs.size() << "\n";
  return 0;
}

int cmd_export_plots(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty() || o.sample.empty()) throw CliFailure{2, "usage", "--checkpoint and --sample are required"};
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const RunConfig config = checkpoint_config(o, ck);
  const auto dir = prepare_out_dir(o);
  const Dataset data = checkpoint_data(config, ck);
  std::size_t index = data.size();
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.samples[i].subject_id == o.sample) index = i;
  if (index == data.size()) throw CliFailure{1, "data", "unknown sample '" + o.sample + "'"};
  const std::size_t subjects[] = {index};
  const auto pdf = predict(ck, data, subjects).front();
  for (int k = 1; k <= pdf.events(); ++k) {
    const auto path = dir / (o.sample + "_event" + std::to_string(k) + ".csv");
    auto f = open_out(path);
    f << "# bin_width = " << format_double(ck.discretization.bin_width) << "\n";
    f << "# horizon = " << pdf.horizon() << "\n";
    write_curve(f, pdf, k, ck.discretization.bin_width);
    out << path.string() << "\n";
  }
  return 0;
}

std::string single_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Competing-risks survival modelling with recurrent sequence-to-sequence networks", "survseq"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "Configuration file (INI)");
    sub->add_option("--seed", o.seed, "Override every seed in the configuration");
    sub->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
  };
  auto* generate_cmd = app.add_subcommand("generate", "Draw a synthetic cohort and export it");
  auto* train_cmd = app.add_subcommand("train", "Train one model with early stopping");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
  auto* cv_cmd = app.add_subcommand("cv", "Cross-validate and write the report");
  auto* predict_cmd = app.add_subcommand("predict", "Export PDFs and predicted times");
  auto* plots_cmd = app.add_subcommand("export-plots", "Export one subject's PDF/CDF curves");
  for (auto* sub : {generate_cmd, train_cmd, evaluate_cmd, cv_cmd, predict_cmd, plots_cmd}) add_common(sub);
  for (auto* sub : {evaluate_cmd, predict_cmd, plots_cmd}) sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  plots_cmd->add_option("--sample", o.sample, "Subject id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << single_line(e.what()) << "\n";
    err << app.help();
    return 2;
  }

  try {
    if (*generate_cmd) return cmd_generate(o, out);
    if (*train_cmd) return cmd_train(o, out, err);
    if (*evaluate_cmd) return cmd_evaluate(o, out);
    if (*cv_cmd) return cmd_cv(o, out);
    if (*predict_cmd) return cmd_predict(o, out);
    if (*plots_cmd) return cmd_export_plots(o, out);
  } catch (const CliFailure& f) {
    err << "error: " << f.kind << ": " << single_line(f.message) << "\n";
    if (f.code == 2) err << app.help();
    return f.code;
  } catch (const ConfigError& e) {
    err << "error: config: " << single_line(e.what()) << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "error: data: " << single_line(e.what()) << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    err << "error: checkpoint: " << single_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: runtime: " << single_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}

}  // namespace survseq

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survseq/datamodel.hpp"
#include "survseq/losses.hpp"
#include "survseq/model.hpp"
#include "survseq/optimizer.hpp"
#include "survseq/synthgen.hpp"

namespace survseq {

std::string to_string(DecoderKind kind);
std::string to_string(RankingVariant variant);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string observations;
  std::string labels;
  std::string time_unit = "units";
  /// Negative: one decoder bin width.
  double merge_threshold = -1;
  int max_steps = 60;
  std::vector<std::string> static_covariates;
};

struct ModelConfig {
  int hidden = 64;
  int encoder_layers = 1;
  int decoder_layers = 1;
  DecoderKind decoder = DecoderKind::recurrent;
  /// MLP ablation hidden width; 0 sizes it to the recurrent decoder's
  /// parameter count.
  int mlp_width = 0;
};

struct LossConfig {
  double w_l = 1.0;
  /// Unset: 0.1 / horizon.
  std::optional<double> w_r;
  RankingVariant ranking = RankingVariant::eq5;

  double ranking_weight(int horizon) const { return w_r ? *w_r : 0.1 / horizon; }
};

struct TrainConfig {
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 10;
  double validation_fraction = 0.1;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0;
  std::uint64_t seed = 1;
};

struct RunConfig {
  DataConfig data;
  /// Used when no observations file is configured.
  SyntheticConfig synthetic;
  /// max_event_time <= 0 is filled from the dataset's largest event time.
  DiscretizationSpec discretization{1.0, 0.0};
  ModelConfig model;
  LossConfig loss;
  AdamOptions optimizer;
  TrainConfig train;
  int folds = 5;

  bool uses_synthetic() const { return data.observations.empty(); }
  double merge_threshold() const {
    return data.merge_threshold < 0 ? discretization.bin_width : data.merge_threshold;
  }
  void validate() const;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);
/// Canonical text: fixed section and key order, shortest round-trip numbers.
/// parse_run_config(run_config_to_ini(c)) reproduces c.
std::string run_config_to_ini(const RunConfig& config);

SyntheticConfig parse_synthetic_config(std::istream& in);
SyntheticConfig load_synthetic_config(const std::string& path);
/// The [synthetic] section alone.
std::string synthetic_config_to_ini(const SyntheticConfig& config);

}  // namespace survseq

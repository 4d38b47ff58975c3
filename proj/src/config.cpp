#include "survseq/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace survseq {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  T value{};
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

/// Reads one section, rejecting keys not in `known`.
class Section {
 public:
  Section(const pt::ptree& root, std::string name, std::set<std::string> known) : name_(std::move(name)) {
    auto child = root.get_child_optional(name_);
    if (!child) return;
    for (const auto& [key, node] : *child) {
      if (known.count(key) == 0) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
      values_[key] = node.data();
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) const {
    auto it = values_.find(key);
    if (it == values_.end()) return;
    const std::string full = name_ + "." + key;
    if constexpr (std::is_same_v<T, std::string>) {
      out = trim(it->second);
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      out = split_list(it->second);
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      out.clear();
      for (const auto& item : split_list(it->second)) out.push_back(parse_number<double>(full, item));
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      out.clear();
      for (const auto& item : split_list(it->second)) out.push_back(parse_number<int>(full, item));
    } else if constexpr (std::is_same_v<T, std::optional<double>>) {
      out = parse_number<double>(full, it->second);
    } else {
      out = parse_number<T>(full, it->second);
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string raw(const std::string& key) const { return trim(values_.at(key)); }

 private:
  std::string name_;
  std::map<std::string, std::string> values_;
};

pt::ptree read_tree(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const std::set<std::string> sections{"data",  "synthetic", "discretization", "model", "loss",
                                       "optimizer", "train", "cv", "generated"};
  for (const auto& [name, node] : tree) {
    if (sections.count(name) == 0 || node.empty()) throw ConfigError("unknown config section '" + name + "'");
  }
  return tree;
}

const std::set<std::string> kSyntheticKeys{
    "num_covariates", "n_samples",      "weibull_shape", "weibull_location", "weibull_scale",
    "quadratic_coef", "linear_coef",    "subset1",       "subset2",          "censoring_rate",
    "missing_rate",   "max_event_time", "event_shape",   "scale_min",        "scale_max",
    "scale_factor",   "scale_quantile", "max_steps",     "drift_max",        "nmar_slope",
    "seed"};

SyntheticConfig read_synthetic(const pt::ptree& tree) {
  SyntheticConfig c;
  Section s(tree, "synthetic", kSyntheticKeys);
  s.read("num_covariates", c.num_covariates);
  s.read("n_samples", c.n_samples);
  s.read("weibull_shape", c.weibull_shape);
  s.read("weibull_location", c.weibull_location);
  s.read("weibull_scale", c.weibull_scale);
  s.read("quadratic_coef", c.quadratic_coef);
  s.read("linear_coef", c.linear_coef);
  s.read("subset1", c.subset1);
  s.read("subset2", c.subset2);
  s.read("censoring_rate", c.censoring_rate);
  s.read("missing_rate", c.missing_rate);
  s.read("max_event_time", c.max_event_time);
  s.read("event_shape", c.event_shape);
  s.read("scale_min", c.scale_min);
  s.read("scale_max", c.scale_max);
  s.read("scale_factor", c.scale_factor);
  s.read("scale_quantile", c.scale_quantile);
  s.read("max_steps", c.max_steps);
  s.read("drift_max", c.drift_max);
  s.read("nmar_slope", c.nmar_slope);
  s.read("seed", c.seed);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

}  // namespace

std::string to_string(DecoderKind kind) { return kind == DecoderKind::recurrent ? "recurrent" : "mlp"; }
std::string to_string(RankingVariant variant) { return variant == RankingVariant::eq4 ? "eq4" : "eq5"; }

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (!(discretization.bin_width > 0)) fail("discretization.bin_width must be > 0");
  if (data.max_steps < 1) fail("data.max_steps must be >= 1");
  if (model.hidden < 1 || model.encoder_layers < 1 || model.decoder_layers < 1) fail("model sizes must be >= 1");
  if (model.mlp_width < 0) fail("model.mlp_width must be >= 0");
  if (!(loss.w_l >= 0) || (loss.w_r && !(*loss.w_r >= 0))) fail("loss weights must be >= 0");
  if (loss.w_l == 0 && loss.w_r && *loss.w_r == 0) fail("loss weights must not both be zero");
  if (!(optimizer.learning_rate > 0)) fail("optimizer.lr must be > 0");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1 && optimizer.beta2 >= 0 && optimizer.beta2 < 1))
    fail("optimizer betas must lie in [0, 1)");
  if (!(optimizer.epsilon > 0)) fail("optimizer.epsilon must be > 0");
  if (train.batch_size < 1 || train.max_epochs < 0 || train.patience < 0) fail("invalid train settings");
  if (!(train.validation_fraction >= 0 && train.validation_fraction < 1))
    fail("train.validation_fraction must lie in [0, 1)");
  if (folds < 2) fail("cv.folds must be >= 2");
  if (data.observations.empty() != data.labels.empty()) fail("data.observations and data.labels go together");
}

RunConfig parse_run_config(std::istream& in) {
  const pt::ptree tree = read_tree(in);
  RunConfig c;
  {
    Section s(tree, "data",
              {"observations", "labels", "time_unit", "merge_threshold", "max_steps", "static_covariates"});
    s.read("observations", c.data.observations);
    s.read("labels", c.data.labels);
    s.read("time_unit", c.data.time_unit);
    s.read("merge_threshold", c.data.merge_threshold);
    s.read("max_steps", c.data.max_steps);
    s.read("static_covariates", c.data.static_covariates);
  }
  if (tree.get_child_optional("synthetic")) c.synthetic = read_synthetic(tree);
  {
    Section s(tree, "discretization", {"bin_width", "max_event_time"});
    s.read("bin_width", c.discretization.bin_width);
    s.read("max_event_time", c.discretization.max_event_time);
  }
  {
    Section s(tree, "model", {"hidden", "encoder_layers", "decoder_layers", "kind", "mlp_width"});
    s.read("hidden", c.model.hidden);
    s.read("encoder_layers", c.model.encoder_layers);
    s.read("decoder_layers", c.model.decoder_layers);
    if (s.has("kind")) {
      const auto k = s.raw("kind");
      if (k == "recurrent") c.model.decoder = DecoderKind::recurrent;
      else if (k == "mlp") c.model.decoder = DecoderKind::mlp;
      else throw ConfigError("model.kind must be 'recurrent' or 'mlp'");
    }
    s.read("mlp_width", c.model.mlp_width);
  }
  {
    Section s(tree, "loss", {"w_l", "w_r", "ranking_variant"});
    s.read("w_l", c.loss.w_l);
    s.read("w_r", c.loss.w_r);
    if (s.has("ranking_variant")) {
      const auto v = s.raw("ranking_variant");
      if (v == "eq4") c.loss.ranking = RankingVariant::eq4;
      else if (v == "eq5") c.loss.ranking = RankingVariant::eq5;
      else throw ConfigError("loss.ranking_variant must be 'eq4' or 'eq5'");
    }
  }
  {
    Section s(tree, "optimizer", {"lr", "beta1", "beta2", "epsilon"});
    s.read("lr", c.optimizer.learning_rate);
    s.read("beta1", c.optimizer.beta1);
    s.read("beta2", c.optimizer.beta2);
    s.read("epsilon", c.optimizer.epsilon);
  }
  {
    Section s(tree, "train", {"batch_size", "max_epochs", "patience", "validation_fraction", "clip_norm", "seed"});
    s.read("batch_size", c.train.batch_size);
    s.read("max_epochs", c.train.max_epochs);
    s.read("patience", c.train.patience);
    s.read("validation_fraction", c.train.validation_fraction);
    s.read("clip_norm", c.train.clip_norm);
    s.read("seed", c.train.seed);
  }
  {
    Section s(tree, "cv", {"folds"});
    s.read("folds", c.folds);
  }
  Section(tree, "generated",
          {"subjects", "observation_rows", "censored_fraction", "missing_fraction", "nmar_offset"});
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(in);
}

std::string synthetic_config_to_ini(const SyntheticConfig& c) {
  std::ostringstream out;
  out << "[synthetic]\n";
  out << "num_covariates = " << c.num_covariates << "\n";
  out << "n_samples = " << c.n_samples << "\n";
  out << "weibull_shape = " << join(c.weibull_shape) << "\n";
  out << "weibull_location = " << join(c.weibull_location) << "\n";
  out << "weibull_scale = " << join(c.weibull_scale) << "\n";
  if (!c.quadratic_coef.empty()) out << "quadratic_coef = " << join(c.quadratic_coef) << "\n";
  if (!c.linear_coef.empty()) out << "linear_coef = " << join(c.linear_coef) << "\n";
  if (!c.subset1.empty()) out << "subset1 = " << join(c.subset1) << "\n";
  if (!c.subset2.empty()) out << "subset2 = " << join(c.subset2) << "\n";
  out << "censoring_rate = " << format_double(c.censoring_rate) << "\n";
  out << "missing_rate = " << format_double(c.missing_rate) << "\n";
  out << "max_event_time = " << format_double(c.max_event_time) << "\n";
  out << "event_shape = " << format_double(c.event_shape) << "\n";
  out << "scale_min = " << format_double(c.scale_min) << "\n";
  out << "scale_max = " << format_double(c.scale_max) << "\n";
  out << "scale_factor = " << format_double(c.scale_factor) << "\n";
  out << "scale_quantile = " << format_double(c.scale_quantile) << "\n";
  out << "max_steps = " << c.max_steps << "\n";
  out << "drift_max = " << format_double(c.drift_max) << "\n";
  out << "nmar_slope = " << format_double(c.nmar_slope) << "\n";
  out << "seed = " << c.seed << "\n";
  return out.str();
}

std::string run_config_to_ini(const RunConfig& c) {
  std::ostringstream out;
  out << "[data]\n";
  if (!c.data.observations.empty()) out << "observations = " << c.data.observations << "\n";
  if (!c.data.labels.empty()) out << "labels = " << c.data.labels << "\n";
  out << "time_unit = " << c.data.time_unit << "\n";
  out << "merge_threshold = " << format_double(c.data.merge_threshold) << "\n";
  out << "max_steps = " << c.data.max_steps << "\n";
  if (!c.data.static_covariates.empty()) out << "static_covariates = " << join(c.data.static_covariates) << "\n";
  out << "\n" << synthetic_config_to_ini(c.synthetic) << "\n";
  out << "[discretization]\n";
  out << "bin_width = " << format_double(c.discretization.bin_width) << "\n";
  out << "max_event_time = " << format_double(c.discretization.max_event_time) << "\n\n";
  out << "[model]\n";
  out << "hidden = " << c.model.hidden << "\n";
  out << "encoder_layers = " << c.model.encoder_layers << "\n";
  out << "decoder_layers = " << c.model.decoder_layers << "\n";
  out << "kind = " << to_string(c.model.decoder) << "\n";
  out << "mlp_width = " << c.model.mlp_width << "\n\n";
  out << "[loss]\n";
  out << "w_l = " << format_double(c.loss.w_l) << "\n";
  if (c.loss.w_r) out << "w_r = " << format_double(*c.loss.w_r) << "\n";
  out << "ranking_variant = " << to_string(c.loss.ranking) << "\n\n";
  out << "[optimizer]\n";
  out << "lr = " << format_double(c.optimizer.learning_rate) << "\n";
  out << "beta1 = " << format_double(c.optimizer.beta1) << "\n";
  out << "beta2 = " << format_double(c.optimizer.beta2) << "\n";
  out << "epsilon = " << format_double(c.optimizer.epsilon) << "\n\n";
  out << "[train]\n";
  out << "batch_size = " << c.train.batch_size << "\n";
  out << "max_epochs = " << c.train.max_epochs << "\n";
  out << "patience = " << c.train.patience << "\n";
  out << "validation_fraction = " << format_double(c.train.validation_fraction) << "\n";
  out << "clip_norm = " << format_double(c.train.clip_norm) << "\n";
  out << "seed = " << c.train.seed << "\n\n";
  out << "[cv]\n";
  out << "folds = " << c.folds << "\n";
  return out.str();
}

SyntheticConfig parse_synthetic_config(std::istream& in) {
  const pt::ptree tree = read_tree(in);
  return read_synthetic(tree);
}

SyntheticConfig load_synthetic_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_synthetic_config(in);
}

}  // namespace survseq

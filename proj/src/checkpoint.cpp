#include "survseq/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace survseq {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'U', 'R', 'V', 'S', 'E', 'Q', '\0'};
// Guards against absurd lengths from a corrupt file before allocating.
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <typename U>
  void uint(U v) {
    std::array<char, sizeof(U)> bytes;
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out_.write(bytes.data(), bytes.size());
  }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    uint<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensors(const ParameterSet<float>& set) {
    uint<std::uint64_t>(set.size());
    for (const auto& e : set) {
      str(e.name);
      i64(e.value.rows());
      i64(e.value.cols());
      for (Index i = 0; i < e.value.size(); ++i) f32(e.value.data()[i]);
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename U>
  U uint() {
    std::array<unsigned char, sizeof(U)> bytes;
    in_.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in_) throw CheckpointError("checkpoint truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(uint<std::uint64_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  std::uint64_t length() {
    const auto n = uint<std::uint64_t>();
    if (n > kMaxLength) throw CheckpointError("checkpoint corrupt: implausible length");
    return n;
  }
  std::string str() {
    std::string s(length(), '\0');
    in_.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in_) throw CheckpointError("checkpoint truncated");
    return s;
  }
  ParameterSet<float> tensors() {
    ParameterSet<float> set;
    const auto n = length();
    for (std::uint64_t k = 0; k < n; ++k) {
      std::string name = str();
      const auto rows = i64(), cols = i64();
      if (rows < 0 || cols < 0 || static_cast<std::uint64_t>(rows * cols) > kMaxLength) {
        throw CheckpointError("checkpoint corrupt: bad shape for '" + name + "'");
      }
      Tensor<float> t(rows, cols);
      for (Index i = 0; i < t.size(); ++i) t.data()[i] = f32();
      set.add(std::move(name), std::move(t));
    }
    return set;
  }

 private:
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const Checkpoint& c, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  Writer w(out);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.str(c.config_text);

  w.uint<std::uint64_t>(c.stats.covariates.size());
  for (std::size_t d = 0; d < c.stats.covariates.size(); ++d) {
    w.str(c.stats.covariates[d]);
    w.f64(c.stats.mean[d]);
    w.f64(c.stats.stddev[d]);
    w.uint<std::uint8_t>(c.stats.constant[d] ? 1 : 0);
  }
  w.f64(c.stats.delta_scale);

  w.f64(c.discretization.bin_width);
  w.f64(c.discretization.max_event_time);

  const auto& s = c.shape;
  w.i64(s.covariates);
  w.i64(s.events);
  w.i64(s.horizon);
  w.i64(s.hidden);
  w.i64(s.encoder_layers);
  w.i64(s.decoder_layers);
  w.i64(s.decoder == DecoderKind::recurrent ? 0 : 1);
  w.i64(s.mlp_width);

  w.tensors(c.params);

  w.uint<std::uint8_t>(c.optimizer ? 1 : 0);
  if (c.optimizer) {
    const auto& o = *c.optimizer;
    w.i64(o.step);
    w.f64(o.options.learning_rate);
    w.f64(o.options.beta1);
    w.f64(o.options.beta2);
    w.f64(o.options.epsilon);
    w.tensors(o.first_moment);
    w.tensors(o.second_moment);
  }

  w.uint<std::uint64_t>(c.history.epochs.size());
  for (const auto& e : c.history.epochs) {
    w.i64(e.epoch);
    w.f64(e.train_loss);
    w.f64(e.validation_loss);
  }
  w.i64(c.history.best_epoch);
  w.str(c.history.stop_reason);
  if (!out) throw CheckpointError("failed writing checkpoint");
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  save_checkpoint(c, out);
}

Checkpoint load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError("not a checkpoint file");
  Reader r(in);
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.config_text = r.str();

  const auto d = r.length();
  for (std::uint64_t i = 0; i < d; ++i) {
    c.stats.covariates.push_back(r.str());
    c.stats.mean.push_back(r.f64());
    c.stats.stddev.push_back(r.f64());
    c.stats.constant.push_back(r.uint<std::uint8_t>() != 0);
  }
  c.stats.delta_scale = r.f64();

  c.discretization.bin_width = r.f64();
  c.discretization.max_event_time = r.f64();

  auto& s = c.shape;
  s.covariates = r.i64();
  s.events = static_cast<int>(r.i64());
  s.horizon = r.i64();
  s.hidden = r.i64();
  s.encoder_layers = static_cast<int>(r.i64());
  s.decoder_layers = static_cast<int>(r.i64());
  s.decoder = r.i64() == 0 ? DecoderKind::recurrent : DecoderKind::mlp;
  s.mlp_width = r.i64();

  c.params = r.tensors();
  const bool plausible = s.covariates >= 1 && s.events >= 1 && s.horizon >= 1 && s.hidden >= 1 &&
                         s.encoder_layers >= 1 && s.decoder_layers >= 1 && s.mlp_width >= 0;
  if (!plausible || !model_parameter_layout<float>(s).same_layout(c.params)) {
    throw CheckpointError("checkpoint tensors do not match the stored model shape");
  }
  if (static_cast<Index>(c.stats.covariates.size()) != s.covariates) {
    throw CheckpointError("checkpoint statistics cover a different covariate count than the model");
  }

  if (r.uint<std::uint8_t>() != 0) {
    AdamState<float> o;
    o.step = r.i64();
    o.options.learning_rate = r.f64();
    o.options.beta1 = r.f64();
    o.options.beta2 = r.f64();
    o.options.epsilon = r.f64();
    o.first_moment = r.tensors();
    o.second_moment = r.tensors();
    if (!c.params.same_layout(o.first_moment) || !c.params.same_layout(o.second_moment)) {
      throw CheckpointError("checkpoint optimizer state does not match the parameters");
    }
    c.optimizer = std::move(o);
  }

  const auto epochs = r.length();
  for (std::uint64_t i = 0; i < epochs; ++i) {
    EpochRecord e;
    e.epoch = static_cast<int>(r.i64());
    e.train_loss = r.f64();
    e.validation_loss = r.f64();
    c.history.epochs.push_back(e);
  }
  c.history.best_epoch = static_cast<int>(r.i64());
  c.history.stop_reason = r.str();
  return c;
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace survseq

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survseq/datamodel.hpp"
#include "survseq/model.hpp"
#include "survseq/optimizer.hpp"

namespace survseq {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double validation_loss = 0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  std::string stop_reason;

  bool operator==(const TrainingHistory&) const = default;
};

/// Everything needed to reproduce predictions: the run configuration text,
/// normalization statistics, the model shape and its float32 weights, plus
/// optional optimizer state and the training history.
struct Checkpoint {
  std::string config_text;
  DatasetStats stats;
  DiscretizationSpec discretization;
  ModelShape shape;
  ParameterSet<float> params;
  std::optional<AdamState<float>> optimizer;
  TrainingHistory history;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout: "SURVSEQ\0" magic, u32 version, then length-prefixed
/// sections. Integers and floats are little-endian; tensors are float32.
void save_checkpoint(const Checkpoint& c, std::ostream& out);
void save_checkpoint(const Checkpoint& c, const std::string& path);
/// Validates that the tensor table matches the stored model shape.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace survseq

#pragma once

#include <filesystem>
#include <string>

#include "mixface/trainer.hpp"

namespace mixface {

struct Checkpoint {
  Encoder encoder;
  ClassWeightMatrix weights;
  TrainHeader header;
};

/// One JSON line naming the tensors and their shapes, then every tensor as
/// row-major little-endian float64, in header order. Throws Io on failure.
void write_checkpoint(const TrainResult& result, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// JSON-lines metric log: a header object (loss, scales, batch statistics)
/// then one object per epoch {epoch, lr, mean_loss, q1.., wall_ms}.
std::string metrics_header_line(const TrainHeader& header);
std::string epoch_line(const EpochLog& log);
void write_metrics(const TrainResult& result, const std::filesystem::path& path);

}  // namespace mixface

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mixface/encoder.hpp"
#include "mixface/gradients.hpp"
#include "mixface/synth_conditions.hpp"

namespace mixface {

enum class SamplerKind { Uniform, PositivePair };

std::string_view to_string(SamplerKind k);
SamplerKind parse_sampler_kind(std::string_view name);

/// Classification losses sample uniformly; pair-based ones draw positive pairs.
SamplerKind default_sampler(LossKind loss);

struct TrainConfig {
  int batch_size = 512;
  int epochs = 20;
  int warmup_epochs = 3;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;

  LossKind loss = LossKind::ArcFace;
  MarginConfig margins;
  /// When set, s1 and s2 are derived from it at the start of training.
  std::optional<double> epsilon;
  std::optional<SamplerKind> sampler;
  std::uint64_t seed = 0;

  int hidden_dim = 64;
  int embedding_dim = 16;

  SamplerKind sampler_kind() const { return sampler.value_or(default_sampler(loss)); }
  void validate() const;

  /// Recipe above with a batch size and network small enough for a laptop.
  static TrainConfig desk();
};

/// MixFace scale setting used at desk scale: large derived scales (small
/// epsilon) destabilize the small encoder.
inline constexpr double kDeskMixFaceEpsilon = 0.1;

/// Linear warmup to lr0, then half-cosine decay to zero. `progress` is the
/// fraction of the whole run completed, in [0, 1].
double lr_schedule(double progress, const TrainConfig& cfg);

/// Draws batches of positions into a training set.
class BatchSampler {
 public:
  /// `labels[k]` is the class of training item k.
  BatchSampler(std::vector<int> labels, int batch_size, SamplerKind kind);

  std::vector<std::size_t> next(std::mt19937_64& rng) const;

  int batch_size() const { return batch_size_; }
  /// Expected number of negative pairs per batch.
  double expected_negatives() const;

 private:
  std::vector<int> labels_;
  int batch_size_;
  SamplerKind kind_;
  std::vector<std::vector<std::size_t>> by_class_;  // classes with >= 2 items
};

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  std::vector<double> accuracies;  // one per evaluation set
  double wall_ms = 0.0;
};

/// Scale factors and batch statistics fixed for the run.
struct TrainHeader {
  LossKind loss = LossKind::ArcFace;
  SamplerKind sampler = SamplerKind::Uniform;
  MarginConfig margins;
  std::optional<double> epsilon;
  long long num_classes = 0;
  long long expected_negatives = 0;
  int batch_size = 0;
  int steps_per_epoch = 0;
};

struct TrainResult {
  Encoder encoder;
  ClassWeightMatrix weights;
  TrainHeader header;
  std::vector<EpochLog> log;
};

/// What a training run reads: a sample store, the training subset, and the
/// pair sets evaluated after every epoch. Labels are sample identities.
struct TrainingView {
  std::span<const Sample> samples;
  std::span<const std::size_t> train;
  int num_classes = 0;
  std::vector<std::span<const VerificationPair>> eval_sets;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(const TrainingView& view, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Trains on T_row (1-based) and evaluates on Q1..Q4 each epoch.
TrainResult train(const DatasetSplit& split, int train_row, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Embeds every sample (one output row per sample).
Matrix embed_samples(const Encoder& encoder, std::span<const Sample> samples);

}  // namespace mixface

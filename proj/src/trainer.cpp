#include "mixface/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

#include "mixface/error.hpp"
#include "mixface/evaluator.hpp"

namespace mixface {

std::string_view to_string(SamplerKind k) {
  return k == SamplerKind::Uniform ? "uniform" : "positive_pair";
}

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "uniform") return SamplerKind::Uniform;
  if (name == "positive_pair" || name == "positive-pair") return SamplerKind::PositivePair;
  throw Error(Errc::InvalidConfig, "unknown sampler '" + std::string(name) + "'");
}

SamplerKind default_sampler(LossKind loss) {
  return uses_pairs(loss) ? SamplerKind::PositivePair : SamplerKind::Uniform;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error(Errc::InvalidConfig, "batch_size must be >= 2");
  if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) {
    throw Error(Errc::InvalidConfig, "warmup_epochs must lie in [0, epochs)");
  }
  if (!(lr0 > 0.0)) throw Error(Errc::InvalidConfig, "lr0 must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(Errc::InvalidConfig, "momentum must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw Error(Errc::InvalidConfig, "weight_decay must be >= 0");
  if (hidden_dim < 1 || embedding_dim < 2) {
    throw Error(Errc::InvalidConfig, "hidden_dim >= 1 and embedding_dim >= 2 required");
  }
  if (epsilon) {
    derive_unified_scale(*epsilon, 2, 1, margins.m);
  } else {
    margins.validate();
  }
  if (sampler_kind() == SamplerKind::PositivePair && batch_size % 2 != 0) {
    throw Error(Errc::InvalidConfig, "positive_pair sampling needs an even batch size");
  }
}

TrainConfig TrainConfig::desk() {
  TrainConfig cfg;
  cfg.batch_size = 64;
  return cfg;
}

double lr_schedule(double progress, const TrainConfig& cfg) {
  const double p = std::clamp(progress, 0.0, 1.0);
  const double warm = static_cast<double>(cfg.warmup_epochs) / cfg.epochs;
  if (p < warm) return cfg.lr0 * p / warm;
  const double t = warm < 1.0 ? (p - warm) / (1.0 - warm) : 1.0;
  return cfg.lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

BatchSampler::BatchSampler(std::vector<int> labels, int batch_size, SamplerKind kind)
    : labels_(std::move(labels)), batch_size_(batch_size), kind_(kind) {
  if (labels_.empty()) throw Error(Errc::InsufficientSamples, "training set is empty");
  if (batch_size_ < 2) throw Error(Errc::InvalidConfig, "batch_size must be >= 2");
  if (kind_ == SamplerKind::Uniform) {
    batch_size_ = std::min<int>(batch_size_, static_cast<int>(labels_.size()));
    return;
  }
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < labels_.size(); ++k) groups[labels_[k]].push_back(k);
  for (auto& [label, members] : groups) {
    if (members.size() < 2) {
      throw Error(Errc::InsufficientSamples,
                  "identity " + std::to_string(label) + " has fewer than 2 samples");
    }
    by_class_.push_back(std::move(members));
  }
  if (static_cast<std::size_t>(batch_size_ / 2) > by_class_.size()) {
    throw Error(Errc::InsufficientSamples, "positive_pair batch of " +
                                               std::to_string(batch_size_) + " needs " +
                                               std::to_string(batch_size_ / 2) + " identities, have " +
                                               std::to_string(by_class_.size()));
  }
}

std::vector<std::size_t> BatchSampler::next(std::mt19937_64& rng) const {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size_));
  if (kind_ == SamplerKind::Uniform) {
    std::vector<std::size_t> all(labels_.size());
    std::iota(all.begin(), all.end(), 0);
    std::sample(all.begin(), all.end(), std::back_inserter(out),
                static_cast<std::size_t>(batch_size_), rng);
    std::shuffle(out.begin(), out.end(), rng);
    return out;
  }
  std::vector<std::size_t> classes(by_class_.size());
  std::iota(classes.begin(), classes.end(), 0);
  std::vector<std::size_t> picked;
  std::sample(classes.begin(), classes.end(), std::back_inserter(picked),
              static_cast<std::size_t>(batch_size_ / 2), rng);
  for (std::size_t c : picked) {
    const auto& members = by_class_[c];
    std::sample(members.begin(), members.end(), std::back_inserter(out), 2, rng);
  }
  return out;
}

double BatchSampler::expected_negatives() const {
  const double n = batch_size_;
  const double all_pairs = n * (n - 1.0) / 2.0;
  if (kind_ == SamplerKind::PositivePair) return all_pairs - n / 2.0;
  // Uniform: a random pair shares a class with probability sum_c p_c^2.
  std::map<int, double> counts;
  for (int y : labels_) counts[y] += 1.0;
  double collide = 0.0;
  const double total = static_cast<double>(labels_.size());
  for (const auto& [label, c] : counts) collide += (c / total) * (c / total);
  return all_pairs * (1.0 - collide);
}

Matrix embed_samples(const Encoder& encoder, std::span<const Sample> samples) {
  Matrix x(static_cast<Eigen::Index>(samples.size()), encoder.input_dim());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].features.size() != encoder.input_dim()) {
      throw Error(Errc::DimensionMismatch, "sample feature size does not match the encoder");
    }
    x.row(static_cast<Eigen::Index>(i)) = samples[i].features.transpose();
  }
  return encoder.forward(x);
}

TrainResult train(const TrainingView& view, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (view.num_classes < 2) throw Error(Errc::InvalidConfig, "need at least two classes");
  if (view.samples.empty() || view.train.empty()) {
    throw Error(Errc::InsufficientSamples, "training set is empty");
  }
  const auto input_dim = static_cast<int>(view.samples[view.train.front()].features.size());

  std::vector<int> labels;
  labels.reserve(view.train.size());
  for (std::size_t idx : view.train) {
    const int y = view.samples[idx].identity;
    if (y < 0 || y >= view.num_classes) {
      throw Error(Errc::InvalidLabel, "training sample with identity " + std::to_string(y));
    }
    labels.push_back(y);
  }
  const BatchSampler sampler(labels, cfg.batch_size, cfg.sampler_kind());

  TrainResult result;
  TrainHeader& header = result.header;
  header.loss = cfg.loss;
  header.sampler = cfg.sampler_kind();
  header.num_classes = view.num_classes;
  header.batch_size = sampler.batch_size();
  header.expected_negatives = std::max<long long>(1, std::llround(sampler.expected_negatives()));
  header.steps_per_epoch =
      std::max(1, static_cast<int>(view.train.size()) / sampler.batch_size());
  header.margins = cfg.margins;
  header.epsilon = cfg.epsilon;
  if (cfg.epsilon) {
    const UnifiedScale u = derive_unified_scale(*cfg.epsilon, view.num_classes,
                                                header.expected_negatives, cfg.margins.m);
    header.margins.s1 = u.s1;
    header.margins.s2 = u.s2;
  }
  const MarginConfig margins = header.margins;

  std::mt19937_64 rng(cfg.seed);
  result.encoder = Encoder::init(input_dim, cfg.hidden_dim, cfg.embedding_dim, rng);
  {
    Matrix w(view.num_classes, cfg.embedding_dim);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
    result.weights.weights = normalize_rows(w);
  }
  const bool with_weights = uses_class_weights(cfg.loss);

  // Momentum buffers: four encoder tensors, then class weights.
  std::array<Matrix, 5> velocity;
  {
    auto params = result.encoder.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) velocity[k] = Matrix::Zero(params[k]->rows(), params[k]->cols());
    velocity[4] = Matrix::Zero(result.weights.weights.rows(), result.weights.weights.cols());
  }
  auto sgd_update = [&](Matrix& param, const Matrix& grad, Matrix& v, double lr) {
    v = cfg.momentum * v + grad + cfg.weight_decay * param;
    param -= lr * v;
  };

  const long total_steps = static_cast<long>(header.steps_per_epoch) * cfg.epochs;
  long step = 0;
  Encoder::Cache cache;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    double lr = 0.0;
    for (int s = 0; s < header.steps_per_epoch; ++s, ++step) {
      const auto picks = sampler.next(rng);
      Matrix x(static_cast<Eigen::Index>(picks.size()), input_dim);
      EmbeddingBatch batch;
      batch.labels.reserve(picks.size());
      for (std::size_t r = 0; r < picks.size(); ++r) {
        const Sample& sample = view.samples[view.train[picks[r]]];
        x.row(static_cast<Eigen::Index>(r)) = sample.features.transpose();
        batch.labels.push_back(labels[picks[r]]);
      }
      batch.vectors = result.encoder.forward(x, cache);

      LossResult lr_out;
      try {
        lr_out = backward(cfg.loss, batch, with_weights ? &result.weights : nullptr, margins);
      } catch (const Error& e) {
        if (e.code() == Errc::ZeroVector) {
          throw Error(Errc::NonFiniteLoss, "step " + std::to_string(step) + ": " + e.what());
        }
        throw;
      }
      if (!std::isfinite(lr_out.value) || !lr_out.grad_embeddings.allFinite() ||
          (lr_out.grad_weights && !lr_out.grad_weights->allFinite())) {
        throw Error(Errc::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(step));
      }
      loss_sum += lr_out.value;

      lr = lr_schedule((static_cast<double>(step) + 0.5) / static_cast<double>(total_steps), cfg);
      const auto grads = result.encoder.backward(cache, lr_out.grad_embeddings);
      auto params = result.encoder.parameters();
      for (std::size_t k = 0; k < params.size(); ++k) sgd_update(*params[k], grads[k], velocity[k], lr);
      if (lr_out.grad_weights) {
        sgd_update(result.weights.weights, *lr_out.grad_weights, velocity[4], lr);
        result.weights.weights = normalize_rows(result.weights.weights);
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.mean_loss = loss_sum / header.steps_per_epoch;
    if (!view.eval_sets.empty()) {
      const Matrix emb = embed_samples(result.encoder, view.samples);
      for (const auto& pairs : view.eval_sets) {
        entry.accuracies.push_back(verify_embedded(emb, pairs).accuracy);
      }
    }
    entry.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(entry);
    result.log.push_back(std::move(entry));
  }
  return result;
}

TrainResult train(const DatasetSplit& split, int train_row, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (train_row < 1 || train_row > kNumRows) {
    throw Error(Errc::InvalidConfig, "train row must be 1..4");
  }
  TrainingView view;
  view.samples = split.samples;
  view.train = split.train_sets[static_cast<std::size_t>(train_row - 1)];
  view.num_classes = split.num_classes();
  for (const auto& q : split.test_sets) view.eval_sets.emplace_back(q);
  return train(view, cfg, on_epoch);
}

}  // namespace mixface

#pragma once

#include <span>
#include <vector>

#include "mixface/encoder.hpp"
#include "mixface/synth_conditions.hpp"

namespace mixface {

struct TrainConfig;

struct ScoredPair {
  double similarity = 0.0;
  bool same = false;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct VerificationReport {
  double accuracy = 0.0;
  /// Pairs with similarity strictly above the threshold are called "same".
  double threshold = 0.0;
  std::size_t n_pairs = 0;
  std::size_t n_positive = 0;
  /// Empty when only one class of pair is present.
  std::vector<RocPoint> roc;
  double auc = 0.0;

  bool roc_defined() const { return !roc.empty(); }
};

/// Best-threshold verification over similarities in [-1, 1]. Candidate
/// thresholds are -1, +1 and the midpoints of adjacent distinct similarities;
/// ties go to the smallest threshold. Throws EmptyPairs on empty input. With
/// a single pair class the ROC is left empty and auc is NaN.
VerificationReport verify_scores(std::span<const ScoredPair> pairs);

/// Embeds every sample referenced by `pairs` and scores pair cosines.
VerificationReport verify(const Encoder& encoder, std::span<const Sample> samples,
                          std::span<const VerificationPair> pairs);

/// Same, with embeddings precomputed (one row per sample).
VerificationReport verify_embedded(const Matrix& embeddings,
                                   std::span<const VerificationPair> pairs);

/// Accuracy at (train row i, test row j), 0-based.
struct HeatmapGrid {
  Matrix cells = Matrix::Zero(kNumRows, kNumRows);
};

/// Cell means where train variance is below (under), equal to (balanced)
/// or above (over) test variance, i.e. i < j, i == j, i > j.
struct PartitionMeans {
  double under = 0.0;
  double balanced = 0.0;
  double over = 0.0;
};

PartitionMeans partition_means(const Matrix& grid);

/// Trains one model per T row and scores it on every Q row.
HeatmapGrid heatmap(const DatasetSplit& split, const TrainConfig& cfg, int threads = 1);

struct SingleConditionReport {
  Attribute attribute = Attribute::Lux;
  std::vector<int> values;
  Matrix cells;  // (train value, test value)
  double mean_diagonal = 0.0;
  double mean_off_diagonal = 0.0;

  double gap() const { return mean_diagonal - mean_off_diagonal; }
};

SingleConditionReport single_condition_report(const SingleConditionGrid& grid,
                                              const TrainConfig& cfg, int threads = 1);

}  // namespace mixface

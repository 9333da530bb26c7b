#pragma once

#include <span>
#include <vector>

#include "mixface/geometry.hpp"

namespace mixface {

/// How the margin enters the target-class logit of a cosine softmax.
enum class MarginKind {
  None,            // s * cos(theta)              (normalized softmax / fixed-scale cosine)
  AdditiveCosine,  // s * (cos(theta) - m)        (CosFace)
  AdditiveAngle,   // s * cos(theta + m)          (ArcFace)
};

struct MarginConfig {
  double s1 = 16.0;  // classification scale
  double s2 = 16.0;  // pair (metric) scale
  double m = 0.25;   // margin, radians for the angular variant

  /// Throws InvalidConfig on non-positive scales, InvalidMargin unless 0 <= m < pi/2.
  void validate() const;
};

/// Cosine similarities of the positive and negative pairs in a batch.
struct PairSet {
  std::vector<double> positives;
  std::vector<double> negatives;

  std::size_t K() const { return positives.size(); }
  std::size_t L() const { return negatives.size(); }
};

/// Scales derived from a single tolerance epsilon.
struct UnifiedScale {
  double epsilon = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
};

/// Mean cross-entropy over raw inner-product logits w_j . x_i.
double softmax_loss(const EmbeddingBatch& batch, const ClassWeightMatrix& weights);

/// Logit of the target class given its cosine.
double target_logit(double cos_target, double s, double m, MarginKind kind);

/// Mean cross-entropy over scaled cosine logits with a margin on the target
/// class. Embeddings and weights are normalized internally.
double cosine_softmax_loss(const EmbeddingBatch& batch, const ClassWeightMatrix& weights,
                           double s, double m, MarginKind kind);

/// Splits the strict upper triangle of `sim` into same-label (positive) and
/// different-label (negative) entries, in row-major order.
PairSet extract_pairs(const Matrix& sim, std::span<const int> labels);

/// (1/K) sum_k log(1 + sum_l exp(s*n_l - s*p_k)).
/// Throws NoPositives / NoNegatives on an empty side.
double sn_pair_loss(const PairSet& pairs, double s2);

/// The same loss written as a softmax of each positive against all
/// negatives. Costs O(K*L); used to cross-check sn_pair_loss.
double sn_pair_loss_softmax_form(const PairSet& pairs, double s2);

/// SN-pair over the cosine similarities of a batch.
double sn_pair_loss(const EmbeddingBatch& batch, double s2);

/// N-pair loss: the pair form above over raw inner products x_j . x_i with
/// no scale factor.
double n_pair_loss(const EmbeddingBatch& batch);
double n_pair_loss(const PairSet& inner_products);

/// ArcFace with (s1, m) plus SN-pair with s2.
double mixface_loss(const EmbeddingBatch& batch, const ClassWeightMatrix& weights,
                    const MarginConfig& cfg);

/// Solves e^{s1 cos m} / (e^{s1 cos m} + C - 1) = 1 - eps and
/// e^{s2} / (e^{s2} + L) = 1 - eps for s1 and s2 (natural log).
UnifiedScale derive_unified_scale(double epsilon, long long num_classes, long long num_negatives,
                                  double m);

}  // namespace mixface

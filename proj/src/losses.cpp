#include "mixface/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "mixface/error.hpp"

namespace mixface {

namespace {

void check_scale(double s, const char* name) {
  if (!(s > 0.0) || !std::isfinite(s)) {
    throw Error(Errc::InvalidConfig, std::string(name) + " must be a positive finite scale");
  }
}

void check_classification_inputs(const EmbeddingBatch& batch, const ClassWeightMatrix& weights) {
  weights.validate();
  if (batch.dim() != weights.dim()) {
    throw Error(Errc::DimensionMismatch, "embedding dim " + std::to_string(batch.dim()) +
                                             " vs weight dim " + std::to_string(weights.dim()));
  }
  batch.validate(static_cast<int>(weights.num_classes()));
}

void check_pairs(const PairSet& pairs) {
  if (pairs.positives.empty()) throw Error(Errc::NoPositives, "pair set has no positive pairs");
  if (pairs.negatives.empty()) throw Error(Errc::NoNegatives, "pair set has no negative pairs");
}

// Cross-entropy of one row of logits against `target`.
double row_cross_entropy(std::span<const double> logits, int target) {
  return log_sum_exp(logits) - logits[static_cast<std::size_t>(target)];
}

double pair_loss(const PairSet& pairs, double scale) {
  check_pairs(pairs);
  std::vector<double> scaled(pairs.negatives.size());
  for (std::size_t l = 0; l < scaled.size(); ++l) scaled[l] = scale * pairs.negatives[l];
  const double lse_neg = log_sum_exp(scaled);
  double acc = 0.0;
  for (double p : pairs.positives) acc += softplus(lse_neg - scale * p);
  return acc / static_cast<double>(pairs.positives.size());
}

}  // namespace

void MarginConfig::validate() const {
  check_scale(s1, "s1");
  check_scale(s2, "s2");
  if (!(m >= 0.0 && m < std::numbers::pi / 2)) {
    throw Error(Errc::InvalidMargin, "margin " + std::to_string(m) + " outside [0, pi/2)");
  }
}

double softmax_loss(const EmbeddingBatch& batch, const ClassWeightMatrix& weights) {
  check_classification_inputs(batch, weights);
  const Matrix logits = batch.vectors * weights.weights.transpose();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    acc += row_cross_entropy({logits.row(i).data(), static_cast<std::size_t>(logits.cols())},
                             batch.labels[static_cast<std::size_t>(i)]);
  }
  return acc / static_cast<double>(batch.size());
}

double target_logit(double cos_target, double s, double m, MarginKind kind) {
  switch (kind) {
    case MarginKind::None: return s * cos_target;
    case MarginKind::AdditiveCosine: return s * (cos_target - m);
    case MarginKind::AdditiveAngle: return s * std::cos(safe_arccos(cos_target) + m);
  }
  return s * cos_target;
}

double cosine_softmax_loss(const EmbeddingBatch& batch, const ClassWeightMatrix& weights, double s,
                           double m, MarginKind kind) {
  check_scale(s, "s");
  if (!(m >= 0.0)) throw Error(Errc::InvalidMargin, "margin must be non-negative");
  if (kind == MarginKind::AdditiveAngle && !(m < std::numbers::pi / 2)) {
    throw Error(Errc::InvalidMargin, "angular margin must be below pi/2");
  }
  check_classification_inputs(batch, weights);

  const Matrix cos = cosine_matrix(batch, weights);
  Matrix logits = s * cos;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < cos.rows(); ++i) {
    const int y = batch.labels[static_cast<std::size_t>(i)];
    logits(i, y) = target_logit(cos(i, y), s, m, kind);
    acc += row_cross_entropy({logits.row(i).data(), static_cast<std::size_t>(logits.cols())}, y);
  }
  return acc / static_cast<double>(batch.size());
}

PairSet extract_pairs(const Matrix& sim, std::span<const int> labels) {
  if (sim.rows() != sim.cols() || sim.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw Error(Errc::DimensionMismatch, "similarity matrix must be N x N with N labels");
  }
  PairSet out;
  const auto n = static_cast<std::size_t>(sim.rows());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      (labels[i] == labels[j] ? out.positives : out.negatives).push_back(v);
    }
  }
  return out;
}

double sn_pair_loss(const PairSet& pairs, double s2) {
  check_scale(s2, "s2");
  return pair_loss(pairs, s2);
}

double sn_pair_loss_softmax_form(const PairSet& pairs, double s2) {
  check_scale(s2, "s2");
  check_pairs(pairs);
  std::vector<double> logits(pairs.L() + 1);
  for (std::size_t l = 0; l < pairs.L(); ++l) logits[l + 1] = s2 * pairs.negatives[l];
  double acc = 0.0;
  for (double p : pairs.positives) {
    logits[0] = s2 * p;
    acc += log_sum_exp(logits) - logits[0];
  }
  return acc / static_cast<double>(pairs.K());
}

double sn_pair_loss(const EmbeddingBatch& batch, double s2) {
  batch.validate();
  return sn_pair_loss(extract_pairs(cosine_matrix(batch, batch), batch.labels), s2);
}

double n_pair_loss(const PairSet& inner_products) { return pair_loss(inner_products, 1.0); }

double n_pair_loss(const EmbeddingBatch& batch) {
  batch.validate();
  const Matrix gram = batch.vectors * batch.vectors.transpose();
  return n_pair_loss(extract_pairs(gram, batch.labels));
}

double mixface_loss(const EmbeddingBatch& batch, const ClassWeightMatrix& weights,
                    const MarginConfig& cfg) {
  cfg.validate();
  const double arc = cosine_softmax_loss(batch, weights, cfg.s1, cfg.m, MarginKind::AdditiveAngle);
  const double sn = sn_pair_loss(batch, cfg.s2);
  return arc + sn;
}

UnifiedScale derive_unified_scale(double epsilon, long long num_classes, long long num_negatives,
                                  double m) {
  // eps = 0.5 is admitted: it is the point where both scales collapse to zero.
  if (!(epsilon > 0.0 && epsilon <= 0.5)) {
    throw Error(Errc::InvalidEpsilon, "epsilon must lie in (0, 0.5]");
  }
  if (!(m >= 0.0 && m < std::numbers::pi / 2)) {
    throw Error(Errc::InvalidMargin, "margin must lie in [0, pi/2)");
  }
  if (num_classes < 2) throw Error(Errc::InvalidConfig, "need at least two classes");
  if (num_negatives < 1) throw Error(Errc::InvalidConfig, "need at least one negative pair");

  const double log_odds = std::log1p(-epsilon) - std::log(epsilon);
  UnifiedScale out;
  out.epsilon = epsilon;
  out.s1 = (log_odds + std::log(static_cast<double>(num_classes - 1))) / std::cos(m);
  out.s2 = log_odds + std::log(static_cast<double>(num_negatives));
  return out;
}

}  // namespace mixface

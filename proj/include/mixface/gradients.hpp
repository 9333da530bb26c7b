#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "mixface/geometry.hpp"
#include "mixface/losses.hpp"

namespace mixface {

enum class LossKind {
  Softmax,
  NormSoftmax,
  CosFace,
  ArcFace,
  NPair,
  SNPair,
  MixFace,
};

inline constexpr LossKind kAllLossKinds[] = {
    LossKind::Softmax, LossKind::NormSoftmax, LossKind::CosFace, LossKind::ArcFace,
    LossKind::NPair,   LossKind::SNPair,      LossKind::MixFace,
};

std::string_view to_string(LossKind kind);
/// Accepts the names printed by to_string ("arcface", "snpair", ...) and a
/// few hyphenated spellings. Throws InvalidConfig for anything else.
LossKind parse_loss_kind(std::string_view name);

/// True for losses that read a ClassWeightMatrix.
bool uses_class_weights(LossKind kind);
/// True for losses built on pairs within the batch.
bool uses_pairs(LossKind kind);

struct LossResult {
  double value = 0.0;
  Matrix grad_embeddings;
  std::optional<Matrix> grad_weights;
};

/// Forward value of `kind`. `weights` may be null for pair-only losses.
double evaluate_loss(LossKind kind, const EmbeddingBatch& batch, const ClassWeightMatrix* weights,
                     const MarginConfig& cfg);

/// Loss value plus analytic gradients. `value` is the result of
/// evaluate_loss on the same inputs.
LossResult backward(LossKind kind, const EmbeddingBatch& batch, const ClassWeightMatrix* weights,
                    const MarginConfig& cfg);

/// True when some cosine that `kind` reads sits within `tol` of +-1, where
/// the arccos clamp makes the loss non-differentiable.
bool near_clamp_boundary(LossKind kind, const EmbeddingBatch& batch,
                         const ClassWeightMatrix* weights, double tol = 1e-5);

/// Per-coordinate central-difference step: h_scale * (1 + |x|).
inline constexpr double kDefaultStepScale = 1e-5;

/// max_i |analytic_i - numeric_i| / max(1, |analytic_i|, |numeric_i|) for a
/// scalar function of a flat parameter vector.
double max_relative_error(const std::function<double(std::span<const double>)>& f,
                          std::span<const double> x, std::span<const double> analytic,
                          double h_scale = kDefaultStepScale);

/// Compares backward() with central differences of evaluate_loss() over
/// every embedding coordinate and, when used, every weight coordinate.
/// Throws PerturbationOutOfDomain if a perturbed forward fails.
double finite_difference_check(LossKind kind, const EmbeddingBatch& batch,
                               const ClassWeightMatrix* weights, const MarginConfig& cfg,
                               double h_scale = kDefaultStepScale);

}  // namespace mixface

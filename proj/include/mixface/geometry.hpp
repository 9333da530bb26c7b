#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mixface {

/// Row-major so that one sample / one class weight is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Rows of a matrix whose norm is at or below this are treated as zero.
inline constexpr double kMinRowNorm = 1e-12;
/// Clamp half-width used before arccos.
inline constexpr double kArccosClamp = 1e-7;

/// N feature vectors with their class labels.
struct EmbeddingBatch {
  Matrix vectors;
  std::vector<int> labels;

  Eigen::Index size() const { return vectors.rows(); }
  Eigen::Index dim() const { return vectors.cols(); }

  /// Checks shape, finiteness and, when `num_classes > 0`, label range.
  void validate(int num_classes = 0) const;
};

/// C class weight vectors, one per row.
struct ClassWeightMatrix {
  Matrix weights;

  Eigen::Index num_classes() const { return weights.rows(); }
  Eigen::Index dim() const { return weights.cols(); }

  void validate() const;
};

/// Scales each row to unit L2 norm. Throws ZeroVector when a row norm is
/// at or below kMinRowNorm.
Matrix normalize_rows(const Matrix& m);

/// Row norms, checked against kMinRowNorm.
Vector row_norms(const Matrix& m);

/// Entry (i, j) is the cosine of the angle between a.row(i) and b.row(j),
/// clamped to [-1, 1].
Matrix cosine_matrix(const Matrix& a, const Matrix& b);
Matrix cosine_matrix(const EmbeddingBatch& a, const ClassWeightMatrix& b);
Matrix cosine_matrix(const EmbeddingBatch& a, const EmbeddingBatch& b);

/// arccos(clamp(c, -1 + kArccosClamp, 1 - kArccosClamp)).
double safe_arccos(double c);

/// True when `c` lies strictly inside the arccos clamp window, i.e. where
/// safe_arccos has a nonzero derivative.
bool inside_arccos_clamp(double c);

/// Max-shifted log(sum(exp(v))). Throws EmptyInput on an empty span.
double log_sum_exp(std::span<const double> v);

/// log(1 + e^x) without overflow.
double softplus(double x);

}  // namespace mixface

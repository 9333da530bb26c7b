#include "mixface/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mixface/error.hpp"

namespace mixface {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InvalidLabel: return "InvalidLabel";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::InvalidMargin: return "InvalidMargin";
    case Errc::InvalidEpsilon: return "InvalidEpsilon";
    case Errc::NoPositives: return "NoPositives";
    case Errc::NoNegatives: return "NoNegatives";
    case Errc::PerturbationOutOfDomain: return "PerturbationOutOfDomain";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyPairs: return "EmptyPairs";
    case Errc::OneClassOnly: return "OneClassOnly";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

void EmbeddingBatch::validate(int num_classes) const {
  if (vectors.rows() < 1) throw Error(Errc::EmptyInput, "batch has no samples");
  if (vectors.cols() < 2) throw Error(Errc::DimensionMismatch, "embedding dimension must be >= 2");
  if (static_cast<Eigen::Index>(labels.size()) != vectors.rows()) {
    throw Error(Errc::DimensionMismatch, "label count " + std::to_string(labels.size()) +
                                             " != sample count " + std::to_string(vectors.rows()));
  }
  if (!vectors.allFinite()) throw Error(Errc::InvalidConfig, "batch contains non-finite entries");
  if (num_classes > 0) {
    for (int y : labels) {
      if (y < 0 || y >= num_classes) {
        throw Error(Errc::InvalidLabel, "label " + std::to_string(y) + " outside [0, " +
                                            std::to_string(num_classes) + ")");
      }
    }
  }
}

void ClassWeightMatrix::validate() const {
  if (weights.rows() < 2) throw Error(Errc::InvalidConfig, "need at least two classes");
  row_norms(weights);
}

Vector row_norms(const Matrix& m) {
  Vector norms = m.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!(norms[i] > kMinRowNorm)) {
      throw Error(Errc::ZeroVector, "row " + std::to_string(i) + " has norm " +
                                        std::to_string(norms[i]));
    }
  }
  return norms;
}

Matrix normalize_rows(const Matrix& m) {
  const Vector norms = row_norms(m);
  return norms.cwiseInverse().asDiagonal() * m;
}

Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(Errc::DimensionMismatch, "dimension " + std::to_string(a.cols()) + " vs " +
                                             std::to_string(b.cols()));
  }
  Matrix c = normalize_rows(a) * normalize_rows(b).transpose();
  return c.cwiseMax(-1.0).cwiseMin(1.0);
}

Matrix cosine_matrix(const EmbeddingBatch& a, const ClassWeightMatrix& b) {
  return cosine_matrix(a.vectors, b.weights);
}

Matrix cosine_matrix(const EmbeddingBatch& a, const EmbeddingBatch& b) {
  return cosine_matrix(a.vectors, b.vectors);
}

double safe_arccos(double c) {
  return std::acos(std::clamp(c, -1.0 + kArccosClamp, 1.0 - kArccosClamp));
}

bool inside_arccos_clamp(double c) {
  return c > -1.0 + kArccosClamp && c < 1.0 - kArccosClamp;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw Error(Errc::EmptyInput, "log_sum_exp of an empty vector");
  const double hi = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace mixface

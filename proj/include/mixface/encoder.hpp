#pragma once

#include <array>
#include <random>

#include "mixface/geometry.hpp"

namespace mixface {

/// Two affine layers with a ReLU between: D_in -> hidden -> d.
/// Embeddings are left unnormalized; the losses normalize as needed.
struct Encoder {
  Matrix w1;  // hidden x D_in
  Matrix b1;  // 1 x hidden
  Matrix w2;  // d x hidden
  Matrix b2;  // 1 x d

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index output_dim() const { return w2.rows(); }

  /// Glorot-uniform weights, zero biases.
  static Encoder init(int input_dim, int hidden_dim, int output_dim, std::mt19937_64& rng);

  struct Cache {
    Matrix input;
    Matrix pre_activation;
    Matrix hidden;
  };

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& cache) const;

  /// Parameter gradients, in the order of parameters().
  std::array<Matrix, 4> backward(const Cache& cache, const Matrix& grad_output) const;

  std::array<Matrix*, 4> parameters() { return {&w1, &b1, &w2, &b2}; }
  std::array<const Matrix*, 4> parameters() const { return {&w1, &b1, &w2, &b2}; }
};

}  // namespace mixface

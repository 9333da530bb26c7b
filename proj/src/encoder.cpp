#include "mixface/encoder.hpp"

#include <cmath>

namespace mixface {

namespace {

Matrix glorot(int rows, int cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

}  // namespace

Encoder Encoder::init(int input_dim, int hidden_dim, int output_dim, std::mt19937_64& rng) {
  Encoder e;
  e.w1 = glorot(hidden_dim, input_dim, rng);
  e.b1 = Matrix::Zero(1, hidden_dim);
  e.w2 = glorot(output_dim, hidden_dim, rng);
  e.b2 = Matrix::Zero(1, output_dim);
  return e;
}

Matrix Encoder::forward(const Matrix& x) const {
  Cache scratch;
  return forward(x, scratch);
}

Matrix Encoder::forward(const Matrix& x, Cache& cache) const {
  cache.input = x;
  cache.pre_activation = (x * w1.transpose()).rowwise() + b1.row(0);
  cache.hidden = cache.pre_activation.cwiseMax(0.0);
  return (cache.hidden * w2.transpose()).rowwise() + b2.row(0);
}

std::array<Matrix, 4> Encoder::backward(const Cache& cache, const Matrix& grad_output) const {
  const Matrix grad_hidden = grad_output * w2;
  const Matrix grad_pre =
      grad_hidden.cwiseProduct((cache.pre_activation.array() > 0.0).cast<double>().matrix());
  return {grad_pre.transpose() * cache.input, grad_pre.colwise().sum(),
          grad_output.transpose() * cache.hidden, grad_output.colwise().sum()};
}

}  // namespace mixface

#include <cmath>
#include <vector>

#include <doctest.h>

#include "mixface/error.hpp"
#include "mixface/gradients.hpp"
#include "test_support.hpp"

using namespace mixface;

namespace {

const MarginConfig kCfg{16.0, 16.0, 0.25};

const ClassWeightMatrix* weights_for(LossKind kind, const ClassWeightMatrix& w) {
  return uses_class_weights(kind) ? &w : nullptr;
}

}  // namespace

TEST_CASE("finite-difference oracle is exact on a quadratic") {
  const std::vector<double> x{0.3, -0.7, 0.4, 1e-3, -0.25};
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] = 2.0 * x[i];
  auto f = [](std::span<const double> v) {
    double acc = 0.0;
    for (double e : v) acc += e * e;
    return acc;
  };
  CHECK(max_relative_error(f, x, grad) < 1e-10);

  // A wrong gradient must be caught.
  grad[2] += 0.5;
  CHECK(max_relative_error(f, x, grad) > 1e-2);
}

TEST_CASE("softmax gradient has the closed form p - onehot") {
  EmbeddingBatch b{Matrix(1, 2), {0}};
  b.vectors << 5.0, 0.0;
  ClassWeightMatrix w{Matrix::Identity(2, 2)};
  const LossResult r = backward(LossKind::Softmax, b, &w, kCfg);
  const double p_target = 1.0 / (1.0 + std::exp(-5.0));
  // With W = I the embedding gradient equals the logit gradient.
  CHECK(r.grad_embeddings(0, 0) == doctest::Approx(p_target - 1.0).epsilon(1e-14));
  CHECK(r.grad_embeddings(0, 1) == doctest::Approx(1.0 - p_target).epsilon(1e-14));
  REQUIRE(r.grad_weights.has_value());
}

TEST_CASE("backward value is the forward value") {
  for (LossKind kind : kAllLossKinds) {
    const auto b = testing::random_batch(16, 8, 5, 42);
    const auto w = testing::random_weights(5, 8, 42);
    const LossResult r = backward(kind, b, weights_for(kind, w), kCfg);
    CHECK(r.value == evaluate_loss(kind, b, weights_for(kind, w), kCfg));
    CHECK(r.grad_embeddings.allFinite());
    CHECK(r.grad_weights.has_value() == uses_class_weights(kind));
  }
}

TEST_CASE("random instance gradients match finite differences") {
  const auto b = testing::random_batch(16, 8, 5, 1234);
  const auto w = testing::random_weights(5, 8, 1234);
  for (LossKind kind : kAllLossKinds) {
    CAPTURE(to_string(kind));
    REQUIRE_FALSE(near_clamp_boundary(kind, b, weights_for(kind, w)));
    const double err = finite_difference_check(kind, b, weights_for(kind, w), kCfg);
    CHECK(err < 1e-4);
    if (kind == LossKind::Softmax) CHECK(err < 1e-6);
  }
}

TEST_CASE("identical inputs give identical gradient rows") {
  EmbeddingBatch b{Matrix(6, 4), {0, 1, 2, 0, 1, 2}};
  for (Eigen::Index i = 0; i < 6; ++i) b.vectors.row(i) << 0.3, -1.2, 0.8, 0.5;
  ClassWeightMatrix w{Matrix(3, 4)};
  for (Eigen::Index j = 0; j < 3; ++j) w.weights.row(j) << 1.0, 0.2, -0.4, 0.7;
  for (LossKind kind : kAllLossKinds) {
    CAPTURE(to_string(kind));
    const LossResult r = backward(kind, b, weights_for(kind, w), kCfg);
    for (Eigen::Index i = 1; i < 6; ++i) {
      CHECK((r.grad_embeddings.row(i) - r.grad_embeddings.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("sn-pair gradient is tangent to unit embeddings") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto b = testing::random_batch(12, 6, 4, seed);
    b.vectors = normalize_rows(b.vectors);
    const LossResult r = backward(LossKind::SNPair, b, nullptr, kCfg);
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      CHECK(std::abs(r.grad_embeddings.row(i).dot(b.vectors.row(i))) < 1e-8);
    }
  }
}

TEST_CASE("mixface gradient is the sum of its parts") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = testing::random_batch(16, 8, 5, seed);
    const auto w = testing::random_weights(5, 8, seed);
    const LossResult mix = backward(LossKind::MixFace, b, &w, kCfg);
    const LossResult arc = backward(LossKind::ArcFace, b, &w, kCfg);
    const LossResult sn = backward(LossKind::SNPair, b, nullptr, kCfg);
    CHECK((mix.grad_embeddings - arc.grad_embeddings - sn.grad_embeddings).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK((*mix.grad_weights - *arc.grad_weights).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("perturbation that leaves the domain is reported") {
  // Row (x, 0) with x equal to its own step: the downward probe is the zero vector.
  const double x = 1e-5 / (1.0 - 1e-5);
  EmbeddingBatch b{Matrix(4, 2), {0, 0, 1, 1}};
  b.vectors << x, 0.0, 0.3, 0.9, -0.5, 0.2, 0.1, -0.8;
  try {
    finite_difference_check(LossKind::SNPair, b, nullptr, kCfg);
    FAIL("expected PerturbationOutOfDomain");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::PerturbationOutOfDomain);
  }
}

TEST_CASE("loss names round trip") {
  for (LossKind kind : kAllLossKinds) CHECK(parse_loss_kind(to_string(kind)) == kind);
  CHECK(parse_loss_kind("SN-pair") == LossKind::SNPair);
  CHECK(parse_loss_kind("norm_softmax") == LossKind::NormSoftmax);
  CHECK_THROWS_AS(parse_loss_kind("sphereface"), Error);
}

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include <doctest.h>

#include "mixface/error.hpp"
#include "mixface/losses.hpp"
#include "test_support.hpp"

using namespace mixface;
using testing::code_of;

namespace {

// Straight-line evaluation of ArcFace plus SN-pair with plain loops and
// direct exponentials. Shares nothing with the library beyond the inputs.
double naive_mixface(const EmbeddingBatch& b, const ClassWeightMatrix& w, double s1, double s2,
                     double m) {
  const auto n = static_cast<std::size_t>(b.vectors.rows());
  const auto d = static_cast<std::size_t>(b.vectors.cols());
  const auto c = static_cast<std::size_t>(w.weights.rows());
  auto cosine = [d](const double* u, const double* v) {
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t k = 0; k < d; ++k) {
      dot += u[k] * v[k];
      nu += u[k] * u[k];
      nv += v[k] * v[k];
    }
    return dot / std::sqrt(nu * nv);
  };
  double arc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(b.labels[i]);
    const double* x = b.vectors.row(static_cast<Eigen::Index>(i)).data();
    double cy = cosine(x, w.weights.row(static_cast<Eigen::Index>(y)).data());
    cy = std::min(std::max(cy, -1.0 + 1e-7), 1.0 - 1e-7);
    const double target = std::exp(s1 * std::cos(std::acos(cy) + m));
    double denom = target;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == y) continue;
      denom += std::exp(s1 * cosine(x, w.weights.row(static_cast<Eigen::Index>(j)).data()));
    }
    arc -= std::log(target / denom);
  }
  arc /= static_cast<double>(n);

  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double cij = cosine(b.vectors.row(static_cast<Eigen::Index>(i)).data(),
                                b.vectors.row(static_cast<Eigen::Index>(j)).data());
      (b.labels[i] == b.labels[j] ? pos : neg).push_back(cij);
    }
  }
  double sn = 0.0;
  for (double p : pos) {
    double denom = std::exp(s2 * p);
    for (double q : neg) denom += std::exp(s2 * q);
    sn -= std::log(std::exp(s2 * p) / denom);
  }
  sn /= static_cast<double>(pos.size());
  return arc + sn;
}

PairSet random_pairs(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(1, 40);
  std::uniform_real_distribution<double> cos(-1.0, 1.0);
  PairSet p;
  p.positives.resize(static_cast<std::size_t>(count(rng)));
  p.negatives.resize(static_cast<std::size_t>(count(rng)));
  for (double& v : p.positives) v = cos(rng);
  for (double& v : p.negatives) v = cos(rng);
  return p;
}

EmbeddingBatch permuted(const EmbeddingBatch& b, std::mt19937_64& rng) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(b.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  EmbeddingBatch out{Matrix(b.vectors.rows(), b.vectors.cols()), b.labels};
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.vectors.row(static_cast<Eigen::Index>(i)) = b.vectors.row(order[i]);
    out.labels[i] = b.labels[static_cast<std::size_t>(order[i])];
  }
  return out;
}

}  // namespace

TEST_CASE("softmax_loss scalar cases") {
  // x orthogonal to every class weight: uniform softmax over 4 classes.
  EmbeddingBatch b{Matrix(1, 5), {2}};
  b.vectors << 0, 0, 0, 0, 1;
  ClassWeightMatrix w{Matrix::Zero(4, 5)};
  for (int j = 0; j < 4; ++j) w.weights(j, j) = 1.0 + j;
  CHECK(softmax_loss(b, w) == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  // Target logit 5, other 0.
  EmbeddingBatch b2{Matrix(1, 2), {0}};
  b2.vectors << 5, 0;
  ClassWeightMatrix w2{Matrix::Identity(2, 2)};
  CHECK(softmax_loss(b2, w2) == doctest::Approx(0.0067153484891179).epsilon(1e-12));

  EmbeddingBatch dup{Matrix(2, 2), {0, 0}};
  dup.vectors << 5, 0, 5, 0;
  CHECK(softmax_loss(dup, w2) == doctest::Approx(softmax_loss(b2, w2)).epsilon(1e-15));

  ClassWeightMatrix wrong{Matrix::Identity(3, 3)};
  CHECK(code_of([&] { softmax_loss(b2, wrong); }) == Errc::DimensionMismatch);
}

TEST_CASE("cosine_softmax_loss scalar cases") {
  EmbeddingBatch b{Matrix(1, 2), {0}};
  b.vectors << 1, 0;
  ClassWeightMatrix w{Matrix::Identity(2, 2)};
  CHECK(cosine_softmax_loss(b, w, 16.0, 0.0, MarginKind::None) ==
        doctest::Approx(1.1253516838717682e-07).epsilon(1e-9));

  // cos(theta_target) = 1 sits on the clamp; the margin is added to the
  // clamped angle acos(1 - 1e-7).
  const double theta = std::acos(1.0 - 1e-7);
  const double expected = std::log(1.0 + std::exp(-16.0 * std::cos(theta + 0.25)));
  CHECK(cosine_softmax_loss(b, w, 16.0, 0.25, MarginKind::AdditiveAngle) ==
        doctest::Approx(expected).epsilon(1e-12));

  CHECK(code_of([&] {
          cosine_softmax_loss(b, w, 16.0, std::numbers::pi / 2, MarginKind::AdditiveAngle);
        }) == Errc::InvalidMargin);
  CHECK(code_of([&] { cosine_softmax_loss(b, w, 16.0, -0.1, MarginKind::AdditiveCosine); }) ==
        Errc::InvalidMargin);
}

TEST_CASE("zero margin reduces every variant to the plain cosine softmax") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto b = testing::random_batch(12, 6, 4, seed);
    const auto w = testing::random_weights(4, 6, seed);
    const double none = cosine_softmax_loss(b, w, 16.0, 0.0, MarginKind::None);
    CHECK(std::abs(cosine_softmax_loss(b, w, 16.0, 0.0, MarginKind::AdditiveAngle) - none) < 1e-9);
    CHECK(std::abs(cosine_softmax_loss(b, w, 16.0, 0.0, MarginKind::AdditiveCosine) - none) < 1e-9);
    CHECK(none >= 0.0);
  }
}

TEST_CASE("arcface loss is non-decreasing in the margin") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = testing::random_batch(10, 5, 3, seed);
    const auto w = testing::random_weights(3, 5, seed);
    const Matrix cos = cosine_matrix(b, w);
    double max_theta = 0.0;
    for (Eigen::Index i = 0; i < cos.rows(); ++i) {
      max_theta = std::max(max_theta, safe_arccos(cos(i, b.labels[static_cast<std::size_t>(i)])));
    }
    const double upper = std::numbers::pi / 2 - max_theta;
    if (upper <= 0.0) continue;
    double prev = -1.0;
    for (int k = 0; k < 25; ++k) {
      const double m = upper * k / 25.0;
      const double v = cosine_softmax_loss(b, w, 16.0, m, MarginKind::AdditiveAngle);
      CHECK(v >= prev - 1e-12);
      prev = v;
    }
  }
}

TEST_CASE("extract_pairs enumerates the upper triangle") {
  Matrix s = Matrix::Identity(3, 3);
  s(0, 1) = s(1, 0) = 0.3;
  s(0, 2) = s(2, 0) = -0.2;
  s(1, 2) = s(2, 1) = 0.7;
  const std::vector<int> labels{0, 0, 1};
  const PairSet p = extract_pairs(s, labels);
  CHECK(p.positives == std::vector<double>{0.3});
  CHECK(p.negatives == std::vector<double>{-0.2, 0.7});

  const Matrix ones = Matrix::Ones(4, 4);
  const PairSet same = extract_pairs(ones, std::vector<int>{1, 1, 1, 1});
  CHECK(same.K() == 6);
  CHECK(same.L() == 0);

  const Matrix five = Matrix::Ones(5, 5);
  const PairSet distinct = extract_pairs(five, std::vector<int>{0, 1, 2, 3, 4});
  CHECK(distinct.K() == 0);
  CHECK(distinct.L() == 10);
}

TEST_CASE("sn_pair_loss scalar cases and errors") {
  CHECK(sn_pair_loss(PairSet{{1.0}, {0.0}}, 1.0) ==
        doctest::Approx(0.31326168751822).epsilon(1e-12));
  for (double s : {0.5, 16.0, 64.0}) {
    CHECK(sn_pair_loss(PairSet{{0.4}, {0.4}}, s) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  CHECK(code_of([] { sn_pair_loss(PairSet{{}, {0.1}}, 1.0); }) == Errc::NoPositives);
  CHECK(code_of([] { sn_pair_loss(PairSet{{0.1}, {}}, 1.0); }) == Errc::NoNegatives);
}

TEST_CASE("sn_pair_loss two algebraic forms agree") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const PairSet p = random_pairs(rng);
    const double s = std::uniform_real_distribution<double>(0.1, 64.0)(rng);
    const double f1 = sn_pair_loss(p, s);
    CHECK(f1 > 0.0);
    CHECK(std::abs(f1 - sn_pair_loss_softmax_form(p, s)) < 1e-9);
  }
}

TEST_CASE("n_pair_loss uses raw inner products") {
  CHECK(n_pair_loss(PairSet{{1.0}, {0.0}}) == doctest::Approx(0.31326168751822).epsilon(1e-12));
  CHECK(n_pair_loss(PairSet{{2.5}, {2.5}}) == doctest::Approx(std::log(2.0)));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = testing::random_batch(10, 6, 3, seed);
    EmbeddingBatch scaled = b;
    scaled.vectors *= 2.0;
    CHECK(std::abs(sn_pair_loss(scaled, 16.0) - sn_pair_loss(b, 16.0)) < 1e-9);
    CHECK(std::abs(n_pair_loss(scaled) - n_pair_loss(b)) > 1e-6);
  }
}

TEST_CASE("sn_pair_loss invariant to per-row rescaling") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> scale(0.05, 20.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = testing::random_batch(12, 5, 4, seed);
    EmbeddingBatch scaled = b;
    for (Eigen::Index i = 0; i < scaled.size(); ++i) scaled.vectors.row(i) *= scale(rng);
    CHECK(std::abs(sn_pair_loss(scaled, 16.0) - sn_pair_loss(b, 16.0)) < 1e-9);
  }
}

TEST_CASE("mixface is the exact sum of its parts") {
  const MarginConfig cfg{16.0, 16.0, 0.25};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto b = testing::random_batch(8, 4, 3, seed);
    const auto w = testing::random_weights(3, 4, seed);
    const double arc = cosine_softmax_loss(b, w, cfg.s1, cfg.m, MarginKind::AdditiveAngle);
    const double sn = sn_pair_loss(extract_pairs(cosine_matrix(b, b), b.labels), cfg.s2);
    CHECK(mixface_loss(b, w, cfg) == arc + sn);
  }
}

TEST_CASE("mixface matches an independent evaluation") {
  const MarginConfig cfg{16.0, 16.0, 0.25};
  const auto b = testing::random_batch(8, 4, 3, 7);
  const auto w = testing::random_weights(3, 4, 7);
  const double ref = naive_mixface(b, w, cfg.s1, cfg.s2, cfg.m);
  CHECK(mixface_loss(b, w, cfg) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("mixface rejects a batch without negatives") {
  EmbeddingBatch b = testing::random_batch(6, 4, 1, 3);
  const auto w = testing::random_weights(2, 4, 3);
  CHECK(code_of([&] { mixface_loss(b, w, MarginConfig{}); }) == Errc::NoNegatives);
}

TEST_CASE("losses are invariant to sample order") {
  const MarginConfig cfg{16.0, 16.0, 0.25};
  std::mt19937_64 rng(1);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = testing::random_batch(12, 6, 4, seed);
    const auto w = testing::random_weights(4, 6, seed);
    const auto p = permuted(b, rng);
    CHECK(std::abs(softmax_loss(p, w) - softmax_loss(b, w)) < 1e-12);
    CHECK(std::abs(mixface_loss(p, w, cfg) - mixface_loss(b, w, cfg)) < 1e-12);
    CHECK(std::abs(n_pair_loss(p) - n_pair_loss(b)) < 1e-12);
    CHECK(std::abs(sn_pair_loss(p, 16.0) - sn_pair_loss(b, 16.0)) < 1e-12);
  }
}

TEST_CASE("derive_unified_scale reproduces the reported scale pairs") {
  const UnifiedScale a = derive_unified_scale(1e-2, 370, 130816, 0.25);
  CHECK(std::abs(a.s1 - 10.84) <= 0.01);
  CHECK(std::abs(a.s2 - 16.37) <= 0.01);
  const UnifiedScale b = derive_unified_scale(1e-22, 370, 130816, 0.25);
  CHECK(std::abs(b.s2 - 62.43) <= 0.01);
  // Eq. 7 with these inputs gives ~58.38 for s1, not the reported 58.83.
  CHECK(b.s1 == doctest::Approx(58.38).epsilon(1e-3));

  const UnifiedScale zero = derive_unified_scale(0.5, 2, 1, 0.0);
  CHECK(std::abs(zero.s1) < 1e-15);
  CHECK(std::abs(zero.s2) < 1e-15);
}

TEST_CASE("derive_unified_scale round trip") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> log_eps(-20.0, std::log10(0.5));
  std::uniform_int_distribution<long long> classes(2, 100000);
  std::uniform_int_distribution<long long> negatives(1, 1000000);
  std::uniform_real_distribution<double> margin(0.0, 1.5);
  for (int trial = 0; trial < 200; ++trial) {
    const double eps = std::pow(10.0, log_eps(rng));
    const long long c = classes(rng);
    const long long l = negatives(rng);
    const double m = margin(rng);
    const UnifiedScale u = derive_unified_scale(eps, c, l, m);
    // p = 1 / (1 + k e^{-z}), evaluated via the complement to keep 1e-9 meaningful.
    const double miss1 = (c - 1) * std::exp(-u.s1 * std::cos(m));
    const double miss2 = static_cast<double>(l) * std::exp(-u.s2);
    CHECK(std::abs(1.0 / (1.0 + miss1) - (1.0 - eps)) < 1e-9);
    CHECK(std::abs(1.0 / (1.0 + miss2) - (1.0 - eps)) < 1e-9);
  }
}

TEST_CASE("derive_unified_scale domain errors") {
  CHECK(code_of([] { derive_unified_scale(0.0, 10, 10, 0.1); }) == Errc::InvalidEpsilon);
  CHECK(code_of([] { derive_unified_scale(0.6, 10, 10, 0.1); }) == Errc::InvalidEpsilon);
  CHECK(code_of([] { derive_unified_scale(0.1, 10, 10, 2.0); }) == Errc::InvalidMargin);
  CHECK(code_of([] { derive_unified_scale(0.1, 1, 10, 0.1); }) == Errc::InvalidConfig);
  CHECK(code_of([] { derive_unified_scale(0.1, 10, 0, 0.1); }) == Errc::InvalidConfig);
}

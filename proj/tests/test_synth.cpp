#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include <doctest.h>

#include "mixface/synth_conditions.hpp"
#include "test_support.hpp"

using namespace mixface;
using testing::code_of;

namespace {

double cosine(const Vector& a, const Vector& b) { return a.dot(b) / (a.norm() * b.norm()); }

const DatasetSplit& default_split() {
  static const DatasetSplit split = build_splits(generate_dataset(GeneratorConfig{}), SplitConfig{});
  return split;
}

}  // namespace

TEST_CASE("lux ladder") {
  const auto& ladder = lux_ladder();
  CHECK(ladder.front() == doctest::Approx(40.0));
  CHECK(ladder.back() == 1000.0);
  CHECK(ladder[14] == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(std::is_sorted(ladder.begin(), ladder.end()));
  for (int k = 0; k < kNumLuxLevels; ++k) CHECK(nearest_lux_index(ladder[static_cast<std::size_t>(k)]) == k);
  CHECK(nearest_lux_index(1e6) == kNumLuxLevels - 1);
  CHECK(nearest_lux_index(1.0) == 0);
}

TEST_CASE("row specs nest and T1 is the narrowest") {
  const ConditionSpec t1 = row_spec(1);
  CHECK(t1.accessories == std::vector<int>{1});
  CHECK(t1.lux_levels == std::vector<int>{kNumLuxLevels - 1});
  CHECK(t1.expressions == std::vector<int>{1});
  CHECK(t1.poses == std::vector<int>{4, 5, 6, 7, 8, 9, 10});
  CHECK(row_spec(3).lux_levels.front() == 14);  // 200 lux
  for (int r = 1; r < kNumRows; ++r) {
    CHECK(row_spec(r).subset_of(row_spec(r + 1)));
    CHECK_FALSE(row_spec(r + 1).subset_of(row_spec(r)));
  }
  CHECK(row_spec(4).lattice_size() == 6u * 29u * 3u * 20u);
  CHECK(code_of([] { row_spec(5); }) == Errc::InvalidConfig);
}

TEST_CASE("lattice enumeration covers each condition once") {
  const ConditionSpec s = row_spec(3);
  std::set<Condition> seen;
  for (std::size_t k = 0; k < s.lattice_size(); ++k) {
    const Condition c = s.at(k);
    CHECK(s.contains(c));
    seen.insert(c);
  }
  CHECK(seen.size() == s.lattice_size());
}

TEST_CASE("config validation") {
  GeneratorConfig g;
  g.n_train_ids = 1;
  CHECK(code_of([&] { generate_dataset(g); }) == Errc::InvalidConfig);
  g = {};
  g.accessory_mask_size = g.input_dim;
  CHECK(code_of([&] { generate_dataset(g); }) == Errc::InvalidConfig);
  g = {};
  g.spec.poses = {3, 2};
  CHECK(code_of([&] { generate_dataset(g); }) == Errc::InvalidConfig);
  SplitConfig s;
  s.pair_scaling = 0.0;
  CHECK(code_of([&] { s.validate(); }) == Errc::InvalidConfig);
}

TEST_CASE("features are a pure function of the seed and inputs") {
  const Universe a(GeneratorConfig{});
  const Universe b(GeneratorConfig{});
  GeneratorConfig other;
  other.seed = 1;
  const Universe c(other);
  const Condition cond{3, 10, 2, 15};
  CHECK(a.features(5, cond, 0) == b.features(5, cond, 0));
  CHECK(a.features(5, cond, 0) != a.features(5, cond, 1));
  CHECK(a.features(5, cond, 0) != c.features(5, cond, 0));
  CHECK(a.features(5, cond).size() == 32);
}

TEST_CASE("repeat draws of one condition stay close") {
  // Unit prototypes with sigma 0.05 in 32 dims: E[cos] is about 1 / (1 + 32 * 0.05^2).
  const Universe u(GeneratorConfig{});
  const Condition cond{1, kNumLuxLevels - 1, 1, 7};
  double sum = 0, lowest = 1;
  for (int id = 0; id < u.num_identities(); ++id) {
    const double c = cosine(u.features(id, cond, 0), u.features(id, cond, 1));
    sum += c;
    lowest = std::min(lowest, c);
  }
  CHECK(sum / u.num_identities() > 0.9);
  CHECK(lowest > 0.85);
}

TEST_CASE("dim light is noisier than bright light") {
  const Universe u(GeneratorConfig{});
  double bright = 0, dark = 0;
  for (int id = 0; id < 40; ++id) {
    const Condition hi{1, kNumLuxLevels - 1, 1, 7}, lo{1, 0, 1, 7};
    bright += cosine(u.features(id, hi, 0), u.features(id, hi, 1));
    dark += cosine(u.features(id, lo, 0), u.features(id, lo, 1));
  }
  CHECK(dark < bright);
}

TEST_CASE("conditions move identities") {
  // Changing any attribute changes the clean vector of an identity.
  GeneratorConfig g;
  g.noise_sigma = 0.0;
  const Universe u(g);
  const Condition base{1, kNumLuxLevels - 1, 1, 7};
  const Vector v = u.features(0, base);
  for (Condition c : {Condition{2, 28, 1, 7}, Condition{1, 0, 1, 7}, Condition{1, 28, 3, 7},
                      Condition{1, 28, 1, 20}}) {
    const double cs = cosine(v, u.features(0, c));
    CHECK(cs < 1.0 - 1e-6);
    CHECK(cs > 0.0);
  }
}

TEST_CASE("split: pair counts and balance") {
  const DatasetSplit& s = default_split();
  const long expected[] = {10, 1000, 1000, 1000};
  for (int r = 0; r < kNumRows; ++r) {
    const auto& pairs = s.test_sets[static_cast<std::size_t>(r)];
    CHECK(static_cast<long>(pairs.size()) == expected[r]);
    CHECK(scaled_pair_count(r + 1, 0.01) == expected[r]);
    const auto pos = std::count_if(pairs.begin(), pairs.end(), [](auto& p) { return p.same; });
    CHECK(2 * pos == static_cast<long>(pairs.size()));
  }
}

TEST_CASE("split: pairs are unique, labelled correctly and inside their row") {
  const DatasetSplit& s = default_split();
  for (int r = 0; r < kNumRows; ++r) {
    const ConditionSpec spec = row_spec(r + 1);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& p : s.test_sets[static_cast<std::size_t>(r)]) {
      CHECK(p.a != p.b);
      CHECK(seen.insert(std::minmax(p.a, p.b)).second);
      const Sample& a = s.samples[p.a];
      const Sample& b = s.samples[p.b];
      CHECK(p.same == (a.identity == b.identity));
      CHECK(spec.contains(a.condition));
      CHECK(spec.contains(b.condition));
    }
  }
}

TEST_CASE("split: identities are disjoint and train rows respect their spec") {
  const DatasetSplit& s = default_split();
  const Universe u(s.generator);
  for (int r = 0; r < kNumRows; ++r) {
    const ConditionSpec spec = row_spec(r + 1);
    std::set<int> ids;
    for (std::size_t idx : s.train_sets[static_cast<std::size_t>(r)]) {
      CHECK(u.is_train_identity(s.samples[idx].identity));
      CHECK(spec.contains(s.samples[idx].condition));
      ids.insert(s.samples[idx].identity);
    }
    CHECK(static_cast<int>(ids.size()) == s.generator.n_train_ids);
    for (const auto& p : s.test_sets[static_cast<std::size_t>(r)]) {
      CHECK_FALSE(u.is_train_identity(s.samples[p.a].identity));
      CHECK_FALSE(u.is_train_identity(s.samples[p.b].identity));
    }
  }
  // T1 has only 7 conditions, so every identity contributes all of them.
  CHECK(s.train_sets[0].size() == static_cast<std::size_t>(7 * s.generator.n_train_ids));
  CHECK(s.train_sets[3].size() == static_cast<std::size_t>(48 * s.generator.n_train_ids));
}

TEST_CASE("split: stored features match the generator") {
  const DatasetSplit& s = default_split();
  const Universe u(s.generator);
  for (std::size_t k = 0; k < s.samples.size(); k += 97) {
    const Sample& x = s.samples[k];
    CHECK(x.features == u.features(x.identity, x.condition, x.repeat));
  }
}

TEST_CASE("split: deterministic") {
  const DatasetSplit again = build_splits(generate_dataset(GeneratorConfig{}), SplitConfig{});
  const DatasetSplit& s = default_split();
  REQUIRE(again.samples.size() == s.samples.size());
  for (int r = 0; r < kNumRows; ++r) {
    CHECK(again.train_sets[static_cast<std::size_t>(r)] == s.train_sets[static_cast<std::size_t>(r)]);
    const auto& p = again.test_sets[static_cast<std::size_t>(r)];
    const auto& q = s.test_sets[static_cast<std::size_t>(r)];
    REQUIRE(p.size() == q.size());
    for (std::size_t k = 0; k < p.size(); ++k) {
      CHECK(p[k].a == q[k].a);
      CHECK(p[k].b == q[k].b);
    }
  }
}

TEST_CASE("split: asking for too many pairs") {
  SplitConfig cfg;
  cfg.pair_scaling = 1.0;  // 1000 pairs on T1's 7 conditions x 6 identities
  CHECK(code_of([&] { build_splits(generate_dataset(GeneratorConfig{}), cfg); }) ==
        Errc::InsufficientSamples);
}

TEST_CASE("single-condition grid") {
  const Universe u(GeneratorConfig{});
  const auto values = default_attribute_values(Attribute::Lux);
  CHECK(values == std::vector<int>{28, 21, 14, 7, 0});
  const auto grid = single_condition_grid(u, Attribute::Lux, Condition{}, values, 100);
  REQUIRE(grid.size() == 5);
  CHECK(grid.num_classes == 74);
  for (std::size_t v = 0; v < grid.size(); ++v) {
    CHECK(grid.train_sets[v].size() == 74u * 20u);
    for (std::size_t idx : grid.train_sets[v]) CHECK(grid.samples[idx].condition.lux == values[v]);
    const auto& test = grid.test_sets[v];
    CHECK(test.size() == 100);
    const auto pos = std::count_if(test.begin(), test.end(), [](auto& p) { return p.same; });
    CHECK(pos == 50);
    // the same abstract pairs are rendered under every value
    for (std::size_t k = 0; k < test.size(); ++k) {
      const Sample& a = grid.samples[test[k].a];
      const Sample& a0 = grid.samples[grid.test_sets[0][k].a];
      CHECK(a.identity == a0.identity);
      CHECK(a.condition.pose == a0.condition.pose);
      CHECK(a.condition.lux == values[v]);
      CHECK_FALSE(u.is_train_identity(a.identity));
    }
  }
  CHECK(parse_attribute(to_string(Attribute::Expression)) == Attribute::Expression);
}

#include "mixface/synth_conditions.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <tuple>

#include "mixface/error.hpp"

namespace mixface {

namespace {

// Stream tags keep every random draw of the generator independent.
enum StreamTag : std::uint32_t {
  kPrototype = 1,
  kExpression = 2,
  kPoseBasis = 3,
  kPoseRates = 4,
  kAccessoryMask = 5,
  kNoise = 6,
  kTrainPick = 7,
  kTestPool = 8,
  kTestPairs = 9,
  kGridPairs = 10,
  kLuxSpectrum = 11,
};

std::mt19937_64 stream(std::uint64_t seed, std::initializer_list<std::uint32_t> parts) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed),
                                   static_cast<std::uint32_t>(seed >> 32)};
  words.insert(words.end(), parts.begin(), parts.end());
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

Vector gaussian(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

std::vector<int> range_inclusive(int lo, int hi) {
  std::vector<int> out(static_cast<std::size_t>(hi - lo + 1));
  std::iota(out.begin(), out.end(), lo);
  return out;
}

std::vector<int> lux_at_least(double lo) {
  std::vector<int> out;
  for (int k = 0; k < kNumLuxLevels; ++k) {
    if (lux_ladder()[static_cast<std::size_t>(k)] >= lo - 1e-9) out.push_back(k);
  }
  return out;
}

bool within(const std::vector<int>& values, int v) {
  return std::binary_search(values.begin(), values.end(), v);
}

void check_set(const std::vector<int>& values, int lo, int hi, const char* name) {
  if (values.empty()) throw Error(Errc::InvalidConfig, std::string(name) + " set is empty");
  if (!std::is_sorted(values.begin(), values.end()) ||
      std::adjacent_find(values.begin(), values.end()) != values.end()) {
    throw Error(Errc::InvalidConfig, std::string(name) + " set must be strictly increasing");
  }
  if (values.front() < lo || values.back() > hi) {
    throw Error(Errc::InvalidConfig, std::string(name) + " value outside its domain");
  }
}

int& attribute_slot(Condition& c, Attribute a) {
  switch (a) {
    case Attribute::Accessory: return c.accessory;
    case Attribute::Lux: return c.lux;
    case Attribute::Expression: return c.expression;
  }
  return c.lux;
}

std::pair<int, int> attribute_domain(Attribute a) {
  switch (a) {
    case Attribute::Accessory: return {1, kNumAccessories};
    case Attribute::Lux: return {0, kNumLuxLevels - 1};
    case Attribute::Expression: return {1, kNumExpressions};
  }
  return {0, 0};
}

// Deduplicating sample store keyed by what determines a sample's features.
class SamplePool {
 public:
  explicit SamplePool(const Universe& u) : universe_(u) {}

  std::size_t get(int identity, const Condition& c, int repeat = 0) {
    const auto key = std::make_tuple(identity, c, repeat);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    samples_.push_back(universe_.sample(identity, c, repeat));
    index_.emplace(key, samples_.size() - 1);
    return samples_.size() - 1;
  }

  std::vector<Sample> take() { return std::move(samples_); }

 private:
  const Universe& universe_;
  std::vector<Sample> samples_;
  std::map<std::tuple<int, Condition, int>, std::size_t> index_;
};

// Draws `count` distinct lattice conditions (all of them if the lattice is
// smaller), in lattice order.
std::vector<Condition> pick_conditions(const ConditionSpec& spec, int count,
                                       std::mt19937_64& rng) {
  const std::size_t n = spec.lattice_size();
  const std::size_t k = std::min(n, static_cast<std::size_t>(count));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), k, rng);
  std::vector<Condition> out;
  out.reserve(k);
  for (std::size_t idx : chosen) out.push_back(spec.at(idx));
  return out;
}

template <typename T>
std::vector<T> choose(const std::vector<T>& candidates, std::size_t count, std::mt19937_64& rng,
                      const std::string& what) {
  if (count > candidates.size()) {
    throw Error(Errc::InsufficientSamples, what + ": requested " + std::to_string(count) +
                                               " unique pairs, only " +
                                               std::to_string(candidates.size()) + " available");
  }
  std::vector<T> out;
  out.reserve(count);
  std::sample(candidates.begin(), candidates.end(), std::back_inserter(out), count, rng);
  return out;
}

}  // namespace

const std::array<double, kNumLuxLevels>& lux_ladder() {
  static const std::array<double, kNumLuxLevels> ladder = [] {
    std::array<double, kNumLuxLevels> out{};
    for (int k = 0; k < kNumLuxLevels; ++k) {
      out[static_cast<std::size_t>(k)] = 40.0 * std::pow(25.0, k / double(kNumLuxLevels - 1));
    }
    out.back() = 1000.0;
    return out;
  }();
  return ladder;
}

int nearest_lux_index(double lux) {
  const auto& ladder = lux_ladder();
  int best = 0;
  for (int k = 1; k < kNumLuxLevels; ++k) {
    if (std::abs(std::log(ladder[static_cast<std::size_t>(k)] / lux)) <
        std::abs(std::log(ladder[static_cast<std::size_t>(best)] / lux))) {
      best = k;
    }
  }
  return best;
}

void ConditionSpec::validate() const {
  check_set(accessories, 1, kNumAccessories, "accessory");
  check_set(lux_levels, 0, kNumLuxLevels - 1, "lux");
  check_set(expressions, 1, kNumExpressions, "expression");
  check_set(poses, 1, kNumPoses, "pose");
}

bool ConditionSpec::contains(const Condition& c) const {
  return within(accessories, c.accessory) && within(lux_levels, c.lux) &&
         within(expressions, c.expression) && within(poses, c.pose);
}

bool ConditionSpec::subset_of(const ConditionSpec& other) const {
  auto sub = [](const std::vector<int>& a, const std::vector<int>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  return sub(accessories, other.accessories) && sub(lux_levels, other.lux_levels) &&
         sub(expressions, other.expressions) && sub(poses, other.poses);
}

std::size_t ConditionSpec::lattice_size() const {
  return accessories.size() * lux_levels.size() * expressions.size() * poses.size();
}

Condition ConditionSpec::at(std::size_t k) const {
  Condition c;
  c.pose = poses[k % poses.size()];
  k /= poses.size();
  c.expression = expressions[k % expressions.size()];
  k /= expressions.size();
  c.lux = lux_levels[k % lux_levels.size()];
  k /= lux_levels.size();
  c.accessory = accessories[k % accessories.size()];
  return c;
}

ConditionSpec ConditionSpec::full() {
  return {range_inclusive(1, kNumAccessories), range_inclusive(0, kNumLuxLevels - 1),
          range_inclusive(1, kNumExpressions), range_inclusive(1, kNumPoses)};
}

ConditionSpec row_spec(int row) {
  switch (row) {
    case 1: return {{1}, lux_at_least(1000.0), {1}, range_inclusive(4, 10)};
    case 2: return {range_inclusive(1, 2), lux_at_least(400.0), {1}, range_inclusive(4, 10)};
    case 3: return {range_inclusive(1, 4), lux_at_least(200.0), {1, 2}, range_inclusive(4, 13)};
    case 4: return ConditionSpec::full();
    default: throw Error(Errc::InvalidConfig, "row must be 1..4, got " + std::to_string(row));
  }
}

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::Accessory: return "accessory";
    case Attribute::Lux: return "lux";
    case Attribute::Expression: return "expression";
  }
  return "unknown";
}

Attribute parse_attribute(std::string_view name) {
  for (Attribute a : {Attribute::Accessory, Attribute::Lux, Attribute::Expression}) {
    if (name == to_string(a)) return a;
  }
  if (name == "illumination") return Attribute::Lux;
  throw Error(Errc::InvalidConfig, "unknown attribute '" + std::string(name) + "'");
}

void GeneratorConfig::validate() const {
  if (n_train_ids < 2) throw Error(Errc::InvalidConfig, "need at least 2 training identities");
  if (n_test_ids < 2) throw Error(Errc::InvalidConfig, "need at least 2 test identities");
  if (input_dim < 2) throw Error(Errc::InvalidConfig, "input_dim must be >= 2");
  if (!(noise_sigma >= 0.0)) throw Error(Errc::InvalidConfig, "noise_sigma must be >= 0");
  if (!(pose_rate >= 0.0) || !(expression_scale >= 0.0) || !(lux_gain_exponent >= 0.0) ||
      !(lux_noise_factor >= 0.0)) {
    throw Error(Errc::InvalidConfig, "condition effect strengths must be >= 0");
  }
  if (accessory_mask_size < 0 || accessory_mask_size >= input_dim) {
    throw Error(Errc::InvalidConfig, "accessory_mask_size must lie in [0, input_dim)");
  }
  spec.validate();
}

Universe::Universe(GeneratorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const Eigen::Index d = cfg_.input_dim;

  prototypes_.resize(num_identities(), d);
  for (int id = 0; id < num_identities(); ++id) {
    auto rng = stream(cfg_.seed, {kPrototype, static_cast<std::uint32_t>(id)});
    const Vector v = gaussian(d, rng);
    prototypes_.row(id) = v.normalized().transpose();
  }

  expression_offsets_.resize(kNumExpressions, d);
  for (int e = 0; e < kNumExpressions; ++e) {
    auto rng = stream(cfg_.seed, {kExpression, static_cast<std::uint32_t>(e)});
    expression_offsets_.row(e) = cfg_.expression_scale * gaussian(d, rng).normalized().transpose();
  }

  {
    auto rng = stream(cfg_.seed, {kPoseBasis});
    Matrix g(d, d);
    for (Eigen::Index i = 0; i < d; ++i) g.row(i) = gaussian(d, rng).transpose();
    pose_basis_ = Eigen::HouseholderQR<Matrix>(g).householderQ();
  }
  {
    auto rng = stream(cfg_.seed, {kPoseRates});
    std::uniform_real_distribution<double> rate(0.0, cfg_.pose_rate);
    pose_plane_rates_.resize(d / 2);
    for (Eigen::Index k = 0; k < pose_plane_rates_.size(); ++k) pose_plane_rates_[k] = rate(rng);
  }

  {
    auto rng = stream(cfg_.seed, {kLuxSpectrum});
    std::uniform_real_distribution<double> spread(0.0, 2.0);
    lux_exponents_.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) lux_exponents_[k] = cfg_.lux_gain_exponent * spread(rng);
  }

  masks_.assign(kNumAccessories + 1, {});
  for (int a = 2; a <= kNumAccessories; ++a) {
    auto rng = stream(cfg_.seed, {kAccessoryMask, static_cast<std::uint32_t>(a)});
    std::vector<int> coords(static_cast<std::size_t>(d));
    std::iota(coords.begin(), coords.end(), 0);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(cfg_.accessory_mask_size));
    std::sort(coords.begin(), coords.end());
    masks_[static_cast<std::size_t>(a)] = std::move(coords);
  }
}

Vector Universe::features(int identity, const Condition& c, int repeat) const {
  if (identity < 0 || identity >= num_identities()) {
    throw Error(Errc::InvalidConfig, "identity " + std::to_string(identity) + " out of range");
  }
  if (!cfg_.spec.contains(c)) throw Error(Errc::InvalidConfig, "condition outside the universe spec");

  // Pose: rotate planes of a fixed random basis by angle rate_k * (pose - 7).
  Vector v = (prototypes_.row(identity) + expression_offsets_.row(c.expression - 1)).transpose();
  Vector u = pose_basis_.transpose() * v;
  const double t = c.pose - 7;
  for (Eigen::Index k = 0; k < pose_plane_rates_.size(); ++k) {
    const double angle = pose_plane_rates_[k] * t;
    const double cs = std::cos(angle), sn = std::sin(angle);
    const double a = u[2 * k], b = u[2 * k + 1];
    u[2 * k] = cs * a - sn * b;
    u[2 * k + 1] = sn * a + cs * b;
  }
  v = pose_basis_ * u;

  for (int coord : masks_[static_cast<std::size_t>(c.accessory)]) v[coord] = 0.0;

  const double lux = c.lux_value();
  const double log_ratio = std::log(lux / 1000.0);
  v.array() *= (lux_exponents_.array() * log_ratio).exp();
  const double darkness = std::log(1000.0 / lux) / std::log(25.0);
  const double sigma = cfg_.noise_sigma * (1.0 + cfg_.lux_noise_factor * darkness);

  auto rng = stream(cfg_.seed, {kNoise, static_cast<std::uint32_t>(identity),
                                static_cast<std::uint32_t>(c.accessory),
                                static_cast<std::uint32_t>(c.lux),
                                static_cast<std::uint32_t>(c.expression),
                                static_cast<std::uint32_t>(c.pose),
                                static_cast<std::uint32_t>(repeat)});
  return v + sigma * gaussian(v.size(), rng);
}

Sample Universe::sample(int identity, const Condition& c, int repeat) const {
  return {identity, c, repeat, features(identity, c, repeat)};
}

Universe generate_dataset(const GeneratorConfig& cfg) { return Universe(cfg); }

void SplitConfig::validate() const {
  if (!(pair_scaling > 0.0)) throw Error(Errc::InvalidConfig, "pair_scaling must be positive");
  if (train_per_identity < 1) throw Error(Errc::InvalidConfig, "train_per_identity must be >= 1");
  if (test_pool_per_identity < 2) {
    throw Error(Errc::InvalidConfig, "test_pool_per_identity must be >= 2");
  }
}

long scaled_pair_count(int row, double scaling) {
  if (row < 1 || row > kNumRows) throw Error(Errc::InvalidConfig, "row must be 1..4");
  const long n = std::lround(static_cast<double>(kRowPairCounts[static_cast<std::size_t>(row - 1)]) *
                             scaling);
  if (n < 2) throw Error(Errc::InvalidConfig, "pair scaling leaves fewer than 2 pairs");
  return n;
}

DatasetSplit build_splits(const Universe& universe, const SplitConfig& cfg) {
  cfg.validate();
  const GeneratorConfig& gen = universe.config();
  if (!row_spec(kNumRows).subset_of(gen.spec)) {
    throw Error(Errc::InvalidConfig, "universe does not cover the full condition lattice");
  }

  SamplePool pool(universe);
  DatasetSplit out;
  out.generator = gen;
  out.split = cfg;

  for (int row = 1; row <= kNumRows; ++row) {
    const ConditionSpec spec = row_spec(row);
    const auto r = static_cast<std::uint32_t>(row);

    auto& train = out.train_sets[static_cast<std::size_t>(row - 1)];
    for (int id = 0; id < gen.n_train_ids; ++id) {
      auto rng = stream(gen.seed, {kTrainPick, r, static_cast<std::uint32_t>(id)});
      for (const Condition& c : pick_conditions(spec, cfg.train_per_identity, rng)) {
        train.push_back(pool.get(id, c));
      }
    }

    // Per test identity, a pool of conditions; pairs are drawn among them.
    std::vector<std::vector<std::size_t>> by_identity;
    for (int id = gen.n_train_ids; id < universe.num_identities(); ++id) {
      auto rng = stream(gen.seed, {kTestPool, r, static_cast<std::uint32_t>(id)});
      std::vector<std::size_t> members;
      for (const Condition& c : pick_conditions(spec, cfg.test_pool_per_identity, rng)) {
        members.push_back(pool.get(id, c));
      }
      std::sort(members.begin(), members.end());
      by_identity.push_back(std::move(members));
    }

    std::vector<VerificationPair> positives, negatives;
    for (std::size_t p = 0; p < by_identity.size(); ++p) {
      const auto& mine = by_identity[p];
      for (std::size_t i = 0; i < mine.size(); ++i) {
        for (std::size_t j = i + 1; j < mine.size(); ++j) positives.push_back({mine[i], mine[j], true});
      }
      for (std::size_t q = p + 1; q < by_identity.size(); ++q) {
        for (std::size_t a : mine) {
          for (std::size_t b : by_identity[q]) {
            negatives.push_back({std::min(a, b), std::max(a, b), false});
          }
        }
      }
    }

    const long n = scaled_pair_count(row, cfg.pair_scaling);
    const auto n_pos = static_cast<std::size_t>(n / 2);
    const auto n_neg = static_cast<std::size_t>(n) - n_pos;
    auto rng = stream(gen.seed, {kTestPairs, r});
    const std::string label = "Q" + std::to_string(row);
    auto& test = out.test_sets[static_cast<std::size_t>(row - 1)];
    test = choose(positives, n_pos, rng, label + " positives");
    const auto neg = choose(negatives, n_neg, rng, label + " negatives");
    test.insert(test.end(), neg.begin(), neg.end());
    std::shuffle(test.begin(), test.end(), rng);
  }

  out.samples = pool.take();
  return out;
}

std::vector<int> default_attribute_values(Attribute a) {
  switch (a) {
    case Attribute::Accessory: return range_inclusive(1, kNumAccessories);
    case Attribute::Lux: return {kNumLuxLevels - 1, 21, 14, 7, 0};
    case Attribute::Expression: return range_inclusive(1, kNumExpressions);
  }
  return {};
}

SingleConditionGrid single_condition_grid(const Universe& universe, Attribute attribute,
                                          const Condition& base, std::vector<int> values,
                                          int pair_budget) {
  const GeneratorConfig& gen = universe.config();
  if (values.empty()) throw Error(Errc::InvalidConfig, "attribute value list is empty");
  const auto [lo, hi] = attribute_domain(attribute);
  for (int v : values) {
    if (v < lo || v > hi) throw Error(Errc::InvalidConfig, "attribute value out of range");
  }
  if (pair_budget < 2) throw Error(Errc::InvalidConfig, "pair budget must be >= 2");

  SamplePool pool(universe);
  SingleConditionGrid grid;
  grid.attribute = attribute;
  grid.values = values;
  grid.num_classes = gen.n_train_ids;

  auto at_value = [&](int pose, int value) {
    Condition c = base;
    c.pose = pose;
    attribute_slot(c, attribute) = value;
    return c;
  };

  for (int v : values) {
    std::vector<std::size_t> train;
    for (int id = 0; id < gen.n_train_ids; ++id) {
      for (int pose = 1; pose <= kNumPoses; ++pose) train.push_back(pool.get(id, at_value(pose, v)));
    }
    grid.train_sets.push_back(std::move(train));
  }

  // Pairs are drawn once as (identity, pose) endpoints, then rendered at each
  // test value.
  struct Endpoint {
    int identity;
    int pose;
  };
  struct AbstractPair {
    Endpoint a, b;
    bool same;
  };
  std::vector<AbstractPair> positives, negatives;
  const int first_test = gen.n_train_ids;
  const int last_test = universe.num_identities();
  for (int ia = first_test; ia < last_test; ++ia) {
    for (int pa = 1; pa <= kNumPoses; ++pa) {
      for (int pb = pa + 1; pb <= kNumPoses; ++pb) positives.push_back({{ia, pa}, {ia, pb}, true});
    }
    for (int ib = ia + 1; ib < last_test; ++ib) {
      for (int pa = 1; pa <= kNumPoses; ++pa) {
        for (int pb = 1; pb <= kNumPoses; ++pb) negatives.push_back({{ia, pa}, {ib, pb}, false});
      }
    }
  }
  auto rng = stream(gen.seed, {kGridPairs, static_cast<std::uint32_t>(attribute)});
  const auto n_pos = static_cast<std::size_t>(pair_budget / 2);
  const auto n_neg = static_cast<std::size_t>(pair_budget) - n_pos;
  auto chosen = choose(positives, n_pos, rng, "grid positives");
  const auto neg = choose(negatives, n_neg, rng, "grid negatives");
  chosen.insert(chosen.end(), neg.begin(), neg.end());
  std::shuffle(chosen.begin(), chosen.end(), rng);

  for (int v : values) {
    std::vector<VerificationPair> test;
    test.reserve(chosen.size());
    for (const AbstractPair& p : chosen) {
      test.push_back({pool.get(p.a.identity, at_value(p.a.pose, v)),
                      pool.get(p.b.identity, at_value(p.b.pose, v)), p.same});
    }
    grid.test_sets.push_back(std::move(test));
  }
  grid.samples = pool.take();
  return grid;
}

}  // namespace mixface

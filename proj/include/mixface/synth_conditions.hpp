#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mixface/geometry.hpp"

namespace mixface {

inline constexpr int kNumAccessories = 6;
inline constexpr int kNumLuxLevels = 29;
inline constexpr int kNumExpressions = 3;
inline constexpr int kNumPoses = 20;
inline constexpr int kNumRows = 4;  // T1..T4 / Q1..Q4

/// 29 log-spaced illumination levels from 40 to 1000 lux.
const std::array<double, kNumLuxLevels>& lux_ladder();
/// Index of the ladder level closest to `lux`.
int nearest_lux_index(double lux);

/// One capture condition. Accessory, expression and pose are 1-based codes
/// (A1.., E1.., C1..); lux is an index into lux_ladder().
struct Condition {
  int accessory = 1;
  int lux = kNumLuxLevels - 1;
  int expression = 1;
  int pose = 1;

  double lux_value() const { return lux_ladder()[static_cast<std::size_t>(lux)]; }
  auto operator<=>(const Condition&) const = default;
};

/// A rectangular set of conditions: the product of four attribute value sets.
struct ConditionSpec {
  std::vector<int> accessories;
  std::vector<int> lux_levels;
  std::vector<int> expressions;
  std::vector<int> poses;

  /// Throws InvalidConfig if a set is empty, unsorted, or leaves its domain.
  void validate() const;
  bool contains(const Condition& c) const;
  bool subset_of(const ConditionSpec& other) const;
  std::size_t lattice_size() const;
  /// k-th condition of the lattice in mixed-radix order (pose fastest).
  Condition at(std::size_t k) const;

  static ConditionSpec full();
};

/// Condition spec of row 1..4 of the train/test construction table.
ConditionSpec row_spec(int row);

enum class Attribute { Accessory, Lux, Expression };
std::string_view to_string(Attribute a);
Attribute parse_attribute(std::string_view name);

struct GeneratorConfig {
  int n_train_ids = 74;
  int n_test_ids = 6;
  int input_dim = 32;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  /// Largest rotation angle per pose step; each pose rotates a set of random
  /// planes by (pose - 7) times a per-plane rate in [0, pose_rate].
  double pose_rate = 0.12;
  /// Norm of each expression's additive offset (E1 included).
  double expression_scale = 0.25;
  /// Coordinates zeroed by each accessory other than A1.
  int accessory_mask_size = 8;
  /// Per-coordinate gain (lux / 1000)^g_k with fixed random exponents g_k
  /// spread uniformly over [0, 2 * lux_gain_exponent].
  double lux_gain_exponent = 1.0;
  /// Noise sigma grows to noise_sigma * (1 + lux_noise_factor) at 40 lux,
  /// linearly in log(lux).
  double lux_noise_factor = 0.5;
  /// Conditions the universe may render.
  ConditionSpec spec = ConditionSpec::full();

  void validate() const;
};

struct Sample {
  int identity = 0;
  Condition condition;
  int repeat = 0;
  Vector features;
};

/// Deterministic generator of identities crossed with conditions.
/// Identities [0, n_train_ids) are training classes; the rest are test-only.
class Universe {
 public:
  explicit Universe(GeneratorConfig cfg);

  const GeneratorConfig& config() const { return cfg_; }
  int num_identities() const { return cfg_.n_train_ids + cfg_.n_test_ids; }
  bool is_train_identity(int id) const { return id >= 0 && id < cfg_.n_train_ids; }

  /// Pure function of (seed, identity, condition, repeat).
  Vector features(int identity, const Condition& c, int repeat = 0) const;
  Sample sample(int identity, const Condition& c, int repeat = 0) const;

 private:
  GeneratorConfig cfg_;
  Matrix prototypes_;                    // identities x D
  Matrix expression_offsets_;            // 3 x D
  Matrix pose_basis_;                    // D x D orthogonal
  Vector pose_plane_rates_;              // D/2 rotation rates
  Vector lux_exponents_;                 // per-coordinate gain exponents
  std::vector<std::vector<int>> masks_;  // per accessory, zeroed coordinates
};

/// generate_dataset: validates the config and builds the universe.
Universe generate_dataset(const GeneratorConfig& cfg);

struct VerificationPair {
  std::size_t a = 0;
  std::size_t b = 0;
  bool same = false;
};

inline constexpr std::array<long, kNumRows> kRowPairCounts{1000, 100000, 100000, 100000};

struct SplitConfig {
  /// Multiplies the Q pair counts (1000, 100000, 100000, 100000).
  double pair_scaling = 0.01;
  /// Conditions drawn per training identity for each T row (capped by the
  /// row's lattice size).
  int train_per_identity = 48;
  /// Conditions drawn per test identity for each Q row's sample pool.
  int test_pool_per_identity = 48;

  void validate() const;
};

/// Materialized T1..T4 / Q1..Q4. Train sets and pairs index into `samples`.
struct DatasetSplit {
  GeneratorConfig generator;
  SplitConfig split;
  std::vector<Sample> samples;
  std::array<std::vector<std::size_t>, kNumRows> train_sets;
  std::array<std::vector<VerificationPair>, kNumRows> test_sets;

  int num_classes() const { return generator.n_train_ids; }
};

/// Throws InsufficientSamples when a Q row asks for more unique pairs than
/// its sample pool offers.
DatasetSplit build_splits(const Universe& universe, const SplitConfig& cfg);

/// Number of pairs requested for Q row `row` (1-based) at `scaling`.
long scaled_pair_count(int row, double scaling);

struct SingleConditionGrid {
  Attribute attribute = Attribute::Lux;
  std::vector<int> values;  // attribute codes (lux: ladder indices)
  std::vector<Sample> samples;
  std::vector<std::vector<std::size_t>> train_sets;        // one per value
  std::vector<std::vector<VerificationPair>> test_sets;    // one per value
  int num_classes = 0;

  std::size_t size() const { return values.size(); }
};

/// Default value ladder used for a single-attribute sweep.
std::vector<int> default_attribute_values(Attribute a);

/// Training sets fixed at each attribute value (all train identities, poses
/// C1..C20, other attributes at `base`), and one set of `pair_budget` unique
/// test pairs re-rendered at each attribute value. `base.pose` is ignored.
SingleConditionGrid single_condition_grid(const Universe& universe, Attribute attribute,
                                          const Condition& base, std::vector<int> values,
                                          int pair_budget = 500);

}  // namespace mixface

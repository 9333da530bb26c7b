#include "mixface/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "mixface/error.hpp"

namespace mixface {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "mixface-dataset";

std::string pairs_file(int row) { return "pairs_Q" + std::to_string(row) + ".csv"; }

[[noreturn]] void io_fail(const fs::path& p, const std::string& what) {
  throw Error(Errc::Io, p.string() + ": " + what);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);  // binary: LF endings everywhere
  if (!out) io_fail(p, "cannot open for writing");
  return out;
}

void close_out(std::ofstream& out, const fs::path& p) {
  out.close();
  if (!out) io_fail(p, "write failed");
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) io_fail(p, "cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) io_fail(p, "empty file");
  return lines;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                     : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view s, const fs::path& p, std::size_t line) {
  T value{};
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size()) {
    io_fail(p, "line " + std::to_string(line + 1) + ": bad number '" + std::string(s) + "'");
  }
  return value;
}

// "A3" -> 3
int parse_code(std::string_view s, char prefix, const fs::path& p, std::size_t line) {
  if (s.size() < 2 || s.front() != prefix) {
    io_fail(p, "line " + std::to_string(line + 1) + ": expected " + prefix + "<n>, got '" +
                   std::string(s) + "'");
  }
  return parse_field<int>(s.substr(1), p, line);
}

json spec_json(const ConditionSpec& s) {
  return {{"accessories", s.accessories},
          {"lux_levels", s.lux_levels},
          {"expressions", s.expressions},
          {"poses", s.poses}};
}

ConditionSpec spec_from(const json& j) {
  return {j.at("accessories").get<std::vector<int>>(), j.at("lux_levels").get<std::vector<int>>(),
          j.at("expressions").get<std::vector<int>>(), j.at("poses").get<std::vector<int>>()};
}

json meta_json(const DatasetSplit& split) {
  const GeneratorConfig& g = split.generator;
  json train_counts = json::array(), pair_counts = json::array(), positives = json::array();
  for (int r = 0; r < kNumRows; ++r) {
    train_counts.push_back(split.train_sets[static_cast<std::size_t>(r)].size());
    const auto& pairs = split.test_sets[static_cast<std::size_t>(r)];
    pair_counts.push_back(pairs.size());
    std::size_t pos = 0;
    for (const auto& p : pairs) pos += p.same ? 1 : 0;
    positives.push_back(pos);
  }
  return {
      {"format", kFormat},
      {"version", 1},
      {"seed", g.seed},
      {"generator",
       {{"n_train_ids", g.n_train_ids},
        {"n_test_ids", g.n_test_ids},
        {"input_dim", g.input_dim},
        {"noise_sigma", g.noise_sigma},
        {"pose_rate", g.pose_rate},
        {"expression_scale", g.expression_scale},
        {"accessory_mask_size", g.accessory_mask_size},
        {"lux_gain_exponent", g.lux_gain_exponent},
        {"lux_noise_factor", g.lux_noise_factor},
        {"spec", spec_json(g.spec)}}},
      {"split",
       {{"pair_scaling", split.split.pair_scaling},
        {"train_per_identity", split.split.train_per_identity},
        {"test_pool_per_identity", split.split.test_pool_per_identity}}},
      {"counts",
       {{"samples", split.samples.size()},
        {"train", train_counts},
        {"test_pairs", pair_counts},
        {"test_positives", positives}}},
  };
}

}  // namespace

const std::vector<std::string>& dataset_file_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out{"meta.json", "samples.csv"};
    for (int r = 1; r <= kNumRows; ++r) out.push_back(pairs_file(r));
    out.push_back("train_index.csv");
    out.push_back("identities.csv");
    return out;
  }();
  return names;
}

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

void write_dataset(const DatasetSplit& split, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) io_fail(dir, "cannot create directory: " + ec.message());

  {
    const fs::path p = dir / "meta.json";
    auto out = open_out(p);
    out << meta_json(split).dump(2) << '\n';
    close_out(out, p);
  }
  {
    const fs::path p = dir / "samples.csv";
    auto out = open_out(p);
    const Eigen::Index d = split.generator.input_dim;
    out << "id,accessory,lux,expression,pose";
    for (Eigen::Index k = 0; k < d; ++k) out << ",f" << k;
    out << '\n';
    for (const Sample& s : split.samples) {
      const Condition& c = s.condition;
      out << s.identity << ",A" << c.accessory << ',' << format_number(c.lux_value()) << ",E"
          << c.expression << ",C" << c.pose;
      for (Eigen::Index k = 0; k < s.features.size(); ++k) out << ',' << format_number(s.features[k]);
      out << '\n';
    }
    close_out(out, p);
  }
  for (int r = 1; r <= kNumRows; ++r) {
    const fs::path p = dir / pairs_file(r);
    auto out = open_out(p);
    out << "idx_a,idx_b,same_flag\n";
    for (const auto& pr : split.test_sets[static_cast<std::size_t>(r - 1)]) {
      out << pr.a << ',' << pr.b << ',' << (pr.same ? 1 : 0) << '\n';
    }
    close_out(out, p);
  }
  {
    const fs::path p = dir / "train_index.csv";
    auto out = open_out(p);
    out << "train_id,sample_idx\n";
    for (int r = 1; r <= kNumRows; ++r) {
      for (std::size_t idx : split.train_sets[static_cast<std::size_t>(r - 1)]) {
        out << 'T' << r << ',' << idx << '\n';
      }
    }
    close_out(out, p);
  }
  {
    const fs::path p = dir / "identities.csv";
    auto out = open_out(p);
    out << "id,role\n";
    const int n = split.generator.n_train_ids + split.generator.n_test_ids;
    for (int id = 0; id < n; ++id) {
      out << id << ',' << (id < split.generator.n_train_ids ? "train" : "test") << '\n';
    }
    close_out(out, p);
  }
}

DatasetSplit read_dataset(const fs::path& dir) {
  DatasetSplit split;
  {
    const fs::path p = dir / "meta.json";
    std::ifstream in(p);
    if (!in) io_fail(p, "cannot open");
    try {
      const json meta = json::parse(in);
      if (meta.at("format") != kFormat) io_fail(p, "not a dataset description");
      const json& g = meta.at("generator");
      GeneratorConfig& gen = split.generator;
      gen.seed = meta.at("seed").get<std::uint64_t>();
      gen.n_train_ids = g.at("n_train_ids");
      gen.n_test_ids = g.at("n_test_ids");
      gen.input_dim = g.at("input_dim");
      gen.noise_sigma = g.at("noise_sigma");
      gen.pose_rate = g.at("pose_rate");
      gen.expression_scale = g.at("expression_scale");
      gen.accessory_mask_size = g.at("accessory_mask_size");
      gen.lux_gain_exponent = g.at("lux_gain_exponent");
      gen.lux_noise_factor = g.at("lux_noise_factor");
      gen.spec = spec_from(g.at("spec"));
      const json& s = meta.at("split");
      split.split.pair_scaling = s.at("pair_scaling");
      split.split.train_per_identity = s.at("train_per_identity");
      split.split.test_pool_per_identity = s.at("test_pool_per_identity");
    } catch (const json::exception& e) {
      io_fail(p, std::string("malformed: ") + e.what());
    }
  }

  const int d = split.generator.input_dim;
  const int n_ids = split.generator.n_train_ids + split.generator.n_test_ids;
  {
    const fs::path p = dir / "samples.csv";
    const auto lines = read_lines(p);
    split.samples.reserve(lines.size() - 1);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_csv(lines[i]);
      if (f.size() != static_cast<std::size_t>(5 + d)) {
        io_fail(p, "line " + std::to_string(i + 1) + ": expected " + std::to_string(5 + d) +
                       " fields");
      }
      Sample s;
      s.identity = parse_field<int>(f[0], p, i);
      if (s.identity < 0 || s.identity >= n_ids) io_fail(p, "identity out of range");
      s.condition.accessory = parse_code(f[1], 'A', p, i);
      s.condition.lux = nearest_lux_index(parse_field<double>(f[2], p, i));
      s.condition.expression = parse_code(f[3], 'E', p, i);
      s.condition.pose = parse_code(f[4], 'C', p, i);
      s.features.resize(d);
      for (int k = 0; k < d; ++k) s.features[k] = parse_field<double>(f[5 + static_cast<std::size_t>(k)], p, i);
      split.samples.push_back(std::move(s));
    }
  }
  const std::size_t n = split.samples.size();
  auto check_index = [&](std::size_t idx, const fs::path& p) {
    if (idx >= n) io_fail(p, "sample index " + std::to_string(idx) + " out of range");
  };
  for (int r = 1; r <= kNumRows; ++r) {
    const fs::path p = dir / pairs_file(r);
    const auto lines = read_lines(p);
    auto& pairs = split.test_sets[static_cast<std::size_t>(r - 1)];
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_csv(lines[i]);
      if (f.size() != 3) io_fail(p, "line " + std::to_string(i + 1) + ": expected 3 fields");
      VerificationPair vp;
      vp.a = parse_field<std::size_t>(f[0], p, i);
      vp.b = parse_field<std::size_t>(f[1], p, i);
      const int flag = parse_field<int>(f[2], p, i);
      if (flag != 0 && flag != 1) io_fail(p, "same_flag must be 0 or 1");
      vp.same = flag == 1;
      check_index(vp.a, p);
      check_index(vp.b, p);
      pairs.push_back(vp);
    }
  }
  {
    const fs::path p = dir / "train_index.csv";
    const auto lines = read_lines(p);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split_csv(lines[i]);
      if (f.size() != 2) io_fail(p, "line " + std::to_string(i + 1) + ": expected 2 fields");
      const int row = parse_code(f[0], 'T', p, i);
      if (row < 1 || row > kNumRows) io_fail(p, "train_id must be T1..T4");
      const auto idx = parse_field<std::size_t>(f[1], p, i);
      check_index(idx, p);
      split.train_sets[static_cast<std::size_t>(row - 1)].push_back(idx);
    }
  }
  {
    const fs::path p = dir / "identities.csv";
    const auto lines = read_lines(p);
    if (lines.size() != static_cast<std::size_t>(n_ids) + 1) io_fail(p, "identity count mismatch");
  }
  return split;
}

}  // namespace mixface

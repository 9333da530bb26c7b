// mixface: generate the synthetic dataset, train, evaluate, run grids.
//
// Exit codes: 0 ok, 2 usage or config, 3 I/O, 4 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "mixface/checkpoint.hpp"
#include "mixface/dataset_io.hpp"
#include "mixface/error.hpp"
#include "mixface/evaluator.hpp"
#include "mixface/losses.hpp"
#include "mixface/trainer.hpp"

namespace fs = std::filesystem;
namespace pt = boost::property_tree;
using namespace mixface;

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scale settings for one layer (built-in, file, flags). A layer that names
// epsilon replaces lower-layer s1/s2 and the other way round.
struct ScaleLayer {
  std::optional<double> s1, s2, epsilon;

  void over(ScaleLayer& base, const char* where) const {
    if (epsilon && (s1 || s2)) {
      throw UsageError(std::string(where) + ": give either s1/s2 or epsilon, not both");
    }
    if (epsilon) {
      base = {std::nullopt, std::nullopt, epsilon};
    } else if (s1 || s2) {
      base.epsilon.reset();
      if (s1) base.s1 = s1;
      if (s2) base.s2 = s2;
    }
  }
};

struct Experiment {
  GeneratorConfig generator;
  SplitConfig split;
  TrainConfig trainer = TrainConfig::desk();
  std::string loss = "arcface";
  ScaleLayer scales{std::nullopt, std::nullopt, kDeskMixFaceEpsilon};
  std::string out_dir = "out";
  std::string dataset_dir;  // empty: <out_dir>/dataset
  int threads = 1;

  fs::path out() const { return out_dir; }
  fs::path dataset() const { return dataset_dir.empty() ? out() / "dataset" : fs::path(dataset_dir); }

  // Epsilon is a MixFace setting; other losses keep explicit scales.
  TrainConfig train_config(LossKind kind) const {
    TrainConfig cfg = trainer;
    cfg.loss = kind;
    cfg.epsilon.reset();
    if (kind == LossKind::MixFace && scales.epsilon) {
      cfg.epsilon = scales.epsilon;
    } else {
      if (scales.s1) cfg.margins.s1 = *scales.s1;
      if (scales.s2) cfg.margins.s2 = *scales.s2;
    }
    cfg.validate();
    return cfg;
  }
};

template <typename T>
void read_key(const pt::ptree& tree, const std::string& key, T& into) {
  if (auto v = tree.get_optional<std::string>(key)) {
    try {
      into = tree.get<T>(key);
    } catch (const pt::ptree_error&) {
      throw UsageError("config key '" + key + "' has a bad value '" + *v + "'");
    }
  }
}

template <typename T>
void read_key(const pt::ptree& tree, const std::string& key, std::optional<T>& into) {
  if (tree.get_optional<std::string>(key)) {
    T v{};
    read_key(tree, key, v);
    into = v;
  }
}

void load_config(const std::string& path, Experiment& ex) {
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    if (!fs::exists(path)) throw Error(Errc::Io, "cannot read config " + path);
    throw UsageError(std::string("config: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "dataset.seed", "dataset.n_train_ids", "dataset.n_test_ids", "dataset.input_dim",
      "dataset.noise_sigma", "dataset.pose_rate", "dataset.expression_scale",
      "dataset.accessory_mask_size", "dataset.lux_gain_exponent", "dataset.lux_noise_factor",
      "dataset.pair_scaling", "dataset.train_per_identity", "dataset.test_pool_per_identity",
      "dataset.dir", "trainer.batch_size", "trainer.epochs", "trainer.warmup_epochs",
      "trainer.lr0", "trainer.momentum", "trainer.weight_decay", "trainer.hidden_dim",
      "trainer.embedding_dim", "trainer.seed", "trainer.sampler", "trainer.threads", "loss.name",
      "loss.s1", "loss.s2", "loss.m", "loss.epsilon", "output.dir"};
  for (const auto& [section, body] : tree) {
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (std::find(known.begin(), known.end(), full) == known.end()) {
        throw UsageError("config: unknown key '" + full + "'");
      }
    }
  }
  GeneratorConfig& g = ex.generator;
  read_key(tree, "dataset.seed", g.seed);
  read_key(tree, "dataset.n_train_ids", g.n_train_ids);
  read_key(tree, "dataset.n_test_ids", g.n_test_ids);
  read_key(tree, "dataset.input_dim", g.input_dim);
  read_key(tree, "dataset.noise_sigma", g.noise_sigma);
  read_key(tree, "dataset.pose_rate", g.pose_rate);
  read_key(tree, "dataset.expression_scale", g.expression_scale);
  read_key(tree, "dataset.accessory_mask_size", g.accessory_mask_size);
  read_key(tree, "dataset.lux_gain_exponent", g.lux_gain_exponent);
  read_key(tree, "dataset.lux_noise_factor", g.lux_noise_factor);
  read_key(tree, "dataset.pair_scaling", ex.split.pair_scaling);
  read_key(tree, "dataset.train_per_identity", ex.split.train_per_identity);
  read_key(tree, "dataset.test_pool_per_identity", ex.split.test_pool_per_identity);
  read_key(tree, "dataset.dir", ex.dataset_dir);

  TrainConfig& t = ex.trainer;
  read_key(tree, "trainer.batch_size", t.batch_size);
  read_key(tree, "trainer.epochs", t.epochs);
  read_key(tree, "trainer.warmup_epochs", t.warmup_epochs);
  read_key(tree, "trainer.lr0", t.lr0);
  read_key(tree, "trainer.momentum", t.momentum);
  read_key(tree, "trainer.weight_decay", t.weight_decay);
  read_key(tree, "trainer.hidden_dim", t.hidden_dim);
  read_key(tree, "trainer.embedding_dim", t.embedding_dim);
  read_key(tree, "trainer.seed", t.seed);
  read_key(tree, "trainer.threads", ex.threads);
  if (auto s = tree.get_optional<std::string>("trainer.sampler")) t.sampler = parse_sampler_kind(*s);

  read_key(tree, "loss.name", ex.loss);
  read_key(tree, "loss.m", t.margins.m);
  ScaleLayer file;
  read_key(tree, "loss.s1", file.s1);
  read_key(tree, "loss.s2", file.s2);
  read_key(tree, "loss.epsilon", file.epsilon);
  file.over(ex.scales, "config");

  read_key(tree, "output.dir", ex.out_dir);
}

LossKind loss_or_usage(const std::string& name) {
  try {
    return parse_loss_kind(name);
  } catch (const Error&) {
    throw UsageError("unknown loss '" + name +
                     "' (softmax, normsoftmax, cosface, arcface, npair, snpair, mixface)");
  }
}

int row_or_usage(const std::string& id, char prefix) {
  if (id.size() == 2 && std::toupper(static_cast<unsigned char>(id[0])) == prefix && id[1] >= '1' &&
      id[1] <= '0' + kNumRows) {
    return id[1] - '0';
  }
  throw UsageError("expected " + std::string(1, prefix) + "1.." + std::string(1, prefix) +
                   std::to_string(kNumRows) + ", got '" + id + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw Error(Errc::Io, "write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::Io, "cannot create " + dir.string() + ": " + ec.message());
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- commands

void cmd_gen(const Experiment& ex) {
  const DatasetSplit split = build_splits(generate_dataset(ex.generator), ex.split);
  write_dataset(split, ex.dataset());
  std::cout << "dataset " << ex.dataset().string() << ": " << split.samples.size() << " samples\n";
  for (int r = 0; r < kNumRows; ++r) {
    const auto& pairs = split.test_sets[static_cast<std::size_t>(r)];
    std::size_t pos = 0;
    for (const auto& p : pairs) pos += p.same;
    std::cout << "T" << r + 1 << " " << split.train_sets[static_cast<std::size_t>(r)].size()
              << " samples   Q" << r + 1 << " " << pairs.size() << " pairs (" << pos
              << " positive)\n";
  }
}

void cmd_train(const Experiment& ex, const std::string& train_id, const std::string& run_name) {
  const int row = row_or_usage(train_id, 'T');
  const LossKind kind = loss_or_usage(ex.loss);
  const TrainConfig cfg = ex.train_config(kind);
  const DatasetSplit split = read_dataset(ex.dataset());

  const fs::path dir = ex.out() / (run_name.empty() ? std::string(to_string(kind)) + "_T" + std::to_string(row)
                                                    : run_name);
  ensure_dir(dir);
  const TrainResult result = train(split, row, cfg, [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " lr " << fixed(e.lr, 5) << " loss " << fixed(e.mean_loss, 4);
    for (std::size_t k = 0; k < e.accuracies.size(); ++k) std::cout << " q" << k + 1 << " " << fixed(e.accuracies[k], 3);
    std::cout << std::endl;
  });
  write_metrics(result, dir / "metrics.jsonl");
  write_checkpoint(result, dir / "checkpoint.bin");
  std::cout << "loss " << to_string(kind) << " s1 " << fixed(result.header.margins.s1, 4) << " s2 "
            << fixed(result.header.margins.s2, 4) << "\ncheckpoint " << (dir / "checkpoint.bin").string()
            << '\n';
}

nlohmann::ordered_json report_json(const VerificationReport& rep, const std::string& test_id,
                                   const Checkpoint& ck) {
  nlohmann::ordered_json j;
  j["test_id"] = test_id;
  j["loss"] = to_string(ck.header.loss);
  j["accuracy"] = rep.accuracy;
  j["threshold"] = rep.threshold;
  j["n_pairs"] = rep.n_pairs;
  j["n_positive"] = rep.n_positive;
  j["auc"] = rep.roc_defined() ? nlohmann::ordered_json(rep.auc) : nlohmann::ordered_json(nullptr);
  auto roc = nlohmann::ordered_json::array();
  for (const RocPoint& p : rep.roc) roc.push_back({p.fpr, p.tpr});
  j["roc"] = roc;
  return j;
}

void cmd_eval(const Experiment& ex, const std::string& checkpoint, const std::string& test_id,
              const std::string& report) {
  const int row = row_or_usage(test_id, 'Q');
  const Checkpoint ck = read_checkpoint(checkpoint);
  const DatasetSplit split = read_dataset(ex.dataset());
  if (ck.encoder.input_dim() != split.generator.input_dim) {
    throw UsageError("checkpoint expects " + std::to_string(ck.encoder.input_dim()) +
                     " input features, dataset has " + std::to_string(split.generator.input_dim));
  }
  const VerificationReport rep =
      verify(ck.encoder, split.samples, split.test_sets[static_cast<std::size_t>(row - 1)]);
  const fs::path path = report.empty() ? fs::path(checkpoint).parent_path() / ("report_Q" + std::to_string(row) + ".json")
                                       : fs::path(report);
  if (!path.parent_path().empty()) ensure_dir(path.parent_path());
  write_text(path, report_json(rep, "Q" + std::to_string(row), ck).dump() + "\n");
  std::cout << "Q" << row << " accuracy " << fixed(rep.accuracy, 4) << " threshold "
            << fixed(rep.threshold, 4) << " pairs " << rep.n_pairs << "\nreport " << path.string() << '\n';
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void cmd_grid(const Experiment& ex, const std::string& losses) {
  const auto names = split_list(losses);
  if (names.empty()) throw UsageError("--losses is empty");
  std::vector<LossKind> kinds;
  for (const auto& n : names) kinds.push_back(loss_or_usage(n));
  const DatasetSplit split = read_dataset(ex.dataset());
  ensure_dir(ex.out());

  std::string summary = "loss,under,balanced,over\n";
  for (LossKind kind : kinds) {
    const HeatmapGrid grid = heatmap(split, ex.train_config(kind), ex.threads);
    std::string csv = "train_id,test_id,accuracy\n";
    for (int i = 0; i < kNumRows; ++i) {
      for (int j = 0; j < kNumRows; ++j) {
        csv += "T" + std::to_string(i + 1) + ",Q" + std::to_string(j + 1) + "," +
               format_number(grid.cells(i, j)) + "\n";
      }
    }
    const fs::path path = ex.out() / ("heatmap_" + std::string(to_string(kind)) + ".csv");
    write_text(path, csv);
    const PartitionMeans pm = partition_means(grid.cells);
    summary += std::string(to_string(kind)) + "," + format_number(pm.under) + "," +
               format_number(pm.balanced) + "," + format_number(pm.over) + "\n";

    std::cout << to_string(kind) << " -> " << path.string() << "\n        Q1     Q2     Q3     Q4\n";
    for (int i = 0; i < kNumRows; ++i) {
      std::cout << "  T" << i + 1;
      for (int j = 0; j < kNumRows; ++j) std::cout << "  " << fixed(grid.cells(i, j), 3);
      std::cout << '\n';
    }
  }
  write_text(ex.out() / "grid_summary.csv", summary);
  std::cout << "\npartition means (train variance under / balanced / over test variance)\n" << summary;
}

void cmd_cond(const Experiment& ex, const std::string& attribute, int pair_budget) {
  Attribute attr;
  try {
    attr = parse_attribute(attribute);
  } catch (const Error&) {
    throw UsageError("unknown attribute '" + attribute + "' (lux, accessory, expression)");
  }
  const LossKind kind = loss_or_usage(ex.loss);
  const Universe universe = generate_dataset(ex.generator);
  const SingleConditionGrid grid =
      single_condition_grid(universe, attr, Condition{}, default_attribute_values(attr), pair_budget);
  const SingleConditionReport rep = single_condition_report(grid, ex.train_config(kind), ex.threads);

  auto label = [&](int v) {
    switch (attr) {
      case Attribute::Lux: return format_number(lux_ladder()[static_cast<std::size_t>(v)]);
      case Attribute::Accessory: return "A" + std::to_string(v);
      case Attribute::Expression: return "E" + std::to_string(v);
    }
    return std::to_string(v);
  };
  std::string csv = "train_value,test_value,accuracy\n";
  for (std::size_t i = 0; i < rep.values.size(); ++i) {
    for (std::size_t j = 0; j < rep.values.size(); ++j) {
      csv += label(rep.values[i]) + "," + label(rep.values[j]) + "," +
             format_number(rep.cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) + "\n";
    }
  }
  ensure_dir(ex.out());
  const fs::path path = ex.out() / ("cond_" + std::string(to_string(attr)) + "_" +
                                    std::string(to_string(kind)) + ".csv");
  write_text(path, csv);
  std::cout << to_string(attr) << " " << to_string(kind) << " diagonal " << fixed(rep.mean_diagonal, 4)
            << " off-diagonal " << fixed(rep.mean_off_diagonal, 4) << " gap " << fixed(rep.gap(), 4)
            << "\n" << path.string() << '\n';
}

int exit_code(Errc code) {
  switch (code) {
    case Errc::Io:
    case Errc::EmptyPairs:
      return kIo;
    case Errc::InvalidConfig:
    case Errc::InvalidEpsilon:
    case Errc::InvalidMargin:
    case Errc::InsufficientSamples:
    case Errc::DimensionMismatch:
    case Errc::InvalidLabel:
      return kUsage;
    default:
      return kNumeric;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MixFace experiments on synthetic condition-controlled data"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path, out_dir, dataset_dir, loss, epsilon_text;
  std::optional<double> s1, s2, epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads, epochs;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "INI experiment config");
    sub->add_option("-o,--out", out_dir, "Output directory (overrides [output] dir)");
    sub->add_option("--dataset", dataset_dir, "Dataset directory (default <out>/dataset)");
  };
  auto training = [&](CLI::App* sub) {
    sub->add_option("--loss", loss, "Loss name");
    sub->add_option("--epsilon", epsilon, "MixFace unified scale setting");
    sub->add_option("--s1", s1, "Classification scale");
    sub->add_option("--s2", s2, "Pair scale");
    sub->add_option("--epochs", epochs, "Training epochs");
    sub->add_option("--threads", threads, "Concurrent training runs");
  };

  auto* gen = app.add_subcommand("gen", "Generate and write the dataset");
  common(gen);
  gen->add_option("--seed", seed, "Dataset seed");

  std::string train_id, run_name;
  auto* tr = app.add_subcommand("train", "Train one model on a T set");
  common(tr);
  training(tr);
  tr->add_option("--train-id", train_id, "T1..T4")->required();
  tr->add_option("--name", run_name, "Run directory name under <out>");
  tr->add_option("--seed", seed, "Training seed");

  std::string checkpoint, test_id, report;
  auto* ev = app.add_subcommand("eval", "Verify a checkpoint on a Q set");
  common(ev);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--test-id", test_id, "Q1..Q4")->required();
  ev->add_option("--report", report, "Report JSON path (default next to the checkpoint)");

  std::string losses = "arcface,snpair,mixface";
  auto* grid = app.add_subcommand("grid", "Train on every T set, score on every Q set");
  common(grid);
  training(grid);
  grid->add_option("--losses", losses, "Comma-separated loss names");
  grid->add_option("--seed", seed, "Training seed");

  std::string attribute = "lux";
  int pair_budget = 500;
  auto* cond = app.add_subcommand("cond", "Single-condition train/test sweep over one attribute");
  common(cond);
  training(cond);
  cond->add_option("--attribute", attribute, "lux, accessory or expression");
  cond->add_option("--pairs", pair_budget, "Test pairs per value");
  cond->add_option("--seed", seed, "Dataset and training seed");

  double sc_eps = 0, sc_m = 0;
  long long sc_classes = 0, sc_negatives = 0;
  auto* scale = app.add_subcommand("scale", "Print (s1, s2) derived from epsilon");
  scale->add_option("--epsilon", sc_eps, "Target probability gap")->required();
  scale->add_option("--classes", sc_classes, "Number of classes C")->required();
  scale->add_option("--negatives", sc_negatives, "Negative pairs per batch L")->required();
  scale->add_option("--margin", sc_m, "Angular margin m")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (scale->parsed()) {
      const UnifiedScale u = derive_unified_scale(sc_eps, sc_classes, sc_negatives, sc_m);
      std::cout << fixed(u.s1, 4) << " " << fixed(u.s2, 4) << '\n';
      return kOk;
    }

    Experiment ex;
    if (!config_path.empty()) load_config(config_path, ex);
    if (!out_dir.empty()) ex.out_dir = out_dir;
    if (!dataset_dir.empty()) ex.dataset_dir = dataset_dir;
    if (!loss.empty()) ex.loss = loss;
    ScaleLayer flags{s1, s2, epsilon};
    flags.over(ex.scales, "flags");
    if (epochs) {
      ex.trainer.epochs = *epochs;
      ex.trainer.warmup_epochs = std::min(ex.trainer.warmup_epochs, *epochs - 1);
    }
    if (threads) ex.threads = *threads;
    if (seed) {
      if (gen->parsed() || cond->parsed()) ex.generator.seed = *seed;
      if (!gen->parsed()) ex.trainer.seed = *seed;
    }
    if (ex.threads < 1) throw UsageError("threads must be >= 1");
    ex.generator.validate();
    ex.split.validate();

    if (gen->parsed()) cmd_gen(ex);
    if (tr->parsed()) cmd_train(ex, train_id, run_name);
    if (ev->parsed()) cmd_eval(ex, checkpoint, test_id, report);
    if (grid->parsed()) cmd_grid(ex, losses);
    if (cond->parsed()) cmd_cond(ex, attribute, pair_budget);
    return kOk;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
}

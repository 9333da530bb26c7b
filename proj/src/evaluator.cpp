#include "mixface/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <string>

#include "mixface/error.hpp"
#include "mixface/trainer.hpp"

namespace mixface {

namespace {

struct Group {
  double value;
  std::size_t pos;
  std::size_t neg;
};

// Distinct similarity values in ascending order with per-class counts.
std::vector<Group> group_scores(std::span<const ScoredPair> pairs) {
  std::vector<ScoredPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.similarity < b.similarity; });
  std::vector<Group> groups;
  for (const ScoredPair& p : sorted) {
    if (groups.empty() || groups.back().value != p.similarity) groups.push_back({p.similarity, 0, 0});
    (p.same ? groups.back().pos : groups.back().neg) += 1;
  }
  return groups;
}

// Runs `jobs` on up to `threads` workers; results keep job order.
template <typename T>
std::vector<T> run_jobs(std::vector<std::function<T()>> jobs, int threads) {
  std::vector<T> out(jobs.size());
  if (threads <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k) out[k] = jobs[k]();
    return out;
  }
  for (std::size_t start = 0; start < jobs.size(); start += static_cast<std::size_t>(threads)) {
    std::vector<std::future<T>> running;
    const std::size_t stop = std::min(jobs.size(), start + static_cast<std::size_t>(threads));
    for (std::size_t k = start; k < stop; ++k) running.push_back(std::async(std::launch::async, jobs[k]));
    for (std::size_t k = start; k < stop; ++k) out[k] = running[k - start].get();
  }
  return out;
}

double mean_final(const TrainResult& r, std::size_t set) { return r.log.back().accuracies.at(set); }

}  // namespace

VerificationReport verify_scores(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw Error(Errc::EmptyPairs, "no pairs to verify");
  const auto groups = group_scores(pairs);

  VerificationReport rep;
  rep.n_pairs = pairs.size();
  for (const Group& g : groups) rep.n_positive += g.pos;
  const std::size_t n_pos = rep.n_positive;
  const std::size_t n_neg = rep.n_pairs - n_pos;

  // correct(t) = negatives at or below t + positives above t.
  std::size_t neg_below = 0, pos_below = 0;
  std::size_t k = 0;
  for (; k < groups.size() && groups[k].value <= -1.0; ++k) {
    neg_below += groups[k].neg;
    pos_below += groups[k].pos;
  }
  std::size_t best = neg_below + (n_pos - pos_below);
  double best_t = -1.0;
  for (; k < groups.size(); ++k) {
    neg_below += groups[k].neg;
    pos_below += groups[k].pos;
    const std::size_t correct = neg_below + (n_pos - pos_below);
    if (correct <= best) continue;
    best = correct;
    best_t = k + 1 < groups.size() ? 0.5 * (groups[k].value + groups[k + 1].value) : 1.0;
  }
  rep.accuracy = static_cast<double>(best) / static_cast<double>(rep.n_pairs);
  rep.threshold = std::clamp(best_t, -1.0, 1.0);

  if (n_pos == 0 || n_neg == 0) {
    rep.auc = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  // Sweep thresholds from high to low; tied similarities enter together.
  rep.roc.push_back({0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  double auc = 0.0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    const RocPoint prev = rep.roc.back();
    tp += it->pos;
    fp += it->neg;
    const RocPoint cur{static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos};
    auc += (cur.fpr - prev.fpr) * 0.5 * (cur.tpr + prev.tpr);
    rep.roc.push_back(cur);
  }
  rep.auc = auc;
  return rep;
}

VerificationReport verify_embedded(const Matrix& embeddings,
                                   std::span<const VerificationPair> pairs) {
  if (pairs.empty()) throw Error(Errc::EmptyPairs, "no pairs to verify");
  const Matrix unit = normalize_rows(embeddings);
  std::vector<ScoredPair> scored;
  scored.reserve(pairs.size());
  for (const VerificationPair& p : pairs) {
    if (p.a >= static_cast<std::size_t>(unit.rows()) || p.b >= static_cast<std::size_t>(unit.rows())) {
      throw Error(Errc::InvalidConfig, "pair references a sample out of range");
    }
    const double c = unit.row(static_cast<Eigen::Index>(p.a)).dot(unit.row(static_cast<Eigen::Index>(p.b)));
    scored.push_back({std::clamp(c, -1.0, 1.0), p.same});
  }
  return verify_scores(scored);
}

VerificationReport verify(const Encoder& encoder, std::span<const Sample> samples,
                          std::span<const VerificationPair> pairs) {
  if (pairs.empty()) throw Error(Errc::EmptyPairs, "no pairs to verify");
  return verify_embedded(embed_samples(encoder, samples), pairs);
}

PartitionMeans partition_means(const Matrix& grid) {
  if (grid.rows() != grid.cols() || grid.rows() < 2) {
    throw Error(Errc::DimensionMismatch, "partition means need a square grid of size >= 2");
  }
  double sum[3] = {0, 0, 0};
  double count[3] = {0, 0, 0};
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.cols(); ++j) {
      const int part = i < j ? 0 : (i == j ? 1 : 2);
      sum[part] += grid(i, j);
      count[part] += 1;
    }
  }
  return {sum[0] / count[0], sum[1] / count[1], sum[2] / count[2]};
}

HeatmapGrid heatmap(const DatasetSplit& split, const TrainConfig& cfg, int threads) {
  std::vector<std::function<TrainResult()>> jobs;
  for (int row = 1; row <= kNumRows; ++row) {
    jobs.push_back([&split, &cfg, row] { return train(split, row, cfg); });
  }
  const auto results = run_jobs(std::move(jobs), threads);
  HeatmapGrid grid;
  for (int i = 0; i < kNumRows; ++i) {
    for (int j = 0; j < kNumRows; ++j) {
      grid.cells(i, j) = mean_final(results[static_cast<std::size_t>(i)], static_cast<std::size_t>(j));
    }
  }
  return grid;
}

SingleConditionReport single_condition_report(const SingleConditionGrid& grid,
                                              const TrainConfig& cfg, int threads) {
  const std::size_t n = grid.size();
  if (n < 2) throw Error(Errc::InvalidConfig, "single-condition grid needs >= 2 values");
  std::vector<std::function<TrainResult()>> jobs;
  for (std::size_t v = 0; v < n; ++v) {
    jobs.push_back([&grid, &cfg, v] {
      TrainingView view;
      view.samples = grid.samples;
      view.train = grid.train_sets[v];
      view.num_classes = grid.num_classes;
      for (const auto& t : grid.test_sets) view.eval_sets.emplace_back(t);
      return train(view, cfg);
    });
  }
  const auto results = run_jobs(std::move(jobs), threads);

  SingleConditionReport rep;
  rep.attribute = grid.attribute;
  rep.values = grid.values;
  rep.cells.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  double diag = 0.0, off = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double acc = mean_final(results[i], j);
      rep.cells(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc;
      (i == j ? diag : off) += acc;
    }
  }
  rep.mean_diagonal = diag / static_cast<double>(n);
  rep.mean_off_diagonal = off / static_cast<double>(n * (n - 1));
  return rep;
}

}  // namespace mixface

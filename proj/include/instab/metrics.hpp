#pragma once

// Corpus-level evaluation: AUC for predicting wrong answers, Spearman rank
// correlation against correctness, equal-size quantile buckets and percentile
// bootstrap intervals. Undefined statistics are returned as std::nullopt.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/numeric.hpp"
#include "instab/parallel.hpp"
#include "instab/rng.hpp"

namespace instab {

inline constexpr std::size_t kDefaultBuckets = 5;
inline constexpr std::size_t kDefaultResamples = 1000;
inline constexpr double kDefaultLevel = 0.95;
inline constexpr std::uint64_t kDefaultBootstrapSeed = 20250101;

// 1-based average ranks (ties share the mean of their positions).
inline std::vector<double> midranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && xs[order[j]] == xs[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1 .. j
    for (std::size_t k = i; k < j; ++k) r[order[k]] = avg;
    i = j;
  }
  return r;
}

inline void check_same_length(std::span<const double> scores, const std::vector<bool>& correct) {
  if (scores.size() != correct.size()) throw UsageError("scores and labels differ in length");
}

// P(score of a random wrong example > score of a random correct example),
// ties credited 1/2 (Mann-Whitney U / (n_wrong * n_correct)).
inline std::optional<double> auc_wrong(std::span<const double> scores, const std::vector<bool>& correct) {
  check_same_length(scores, correct);
  const auto ranks = midranks(scores);
  double rank_sum_wrong = 0.0;
  std::size_t n_wrong = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!correct[i]) {
      rank_sum_wrong += ranks[i];
      ++n_wrong;
    }
  }
  const std::size_t n_correct = scores.size() - n_wrong;
  if (n_wrong == 0 || n_correct == 0) return std::nullopt;
  const double nw = static_cast<double>(n_wrong);
  const double u = rank_sum_wrong - nw * (nw + 1.0) / 2.0;
  return u / (nw * static_cast<double>(n_correct));
}

inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return std::nullopt;
  const double mx = compensated_sum(x) / static_cast<double>(n);
  const double my = compensated_sum(y) / static_cast<double>(n);
  CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (!(sxx.value() > 0.0) || !(syy.value() > 0.0)) return std::nullopt;
  return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

// Spearman correlation between scores and correctness encoded 1 = correct, 0 = wrong.
inline std::optional<double> spearman(std::span<const double> scores, const std::vector<bool>& correct) {
  check_same_length(scores, correct);
  if (scores.size() < 2) return std::nullopt;
  std::vector<double> enc(correct.size());
  for (std::size_t i = 0; i < correct.size(); ++i) enc[i] = correct[i] ? 1.0 : 0.0;
  const auto rs = midranks(scores);
  const auto rc = midranks(enc);
  return pearson(rs, rc);
}

inline std::optional<double> accuracy(const std::vector<bool>& correct) {
  if (correct.empty()) return std::nullopt;
  const auto hits = std::count(correct.begin(), correct.end(), true);
  return static_cast<double>(hits) / static_cast<double>(correct.size());
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
  bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

struct Bucket {
  std::string label;  // "B1" is the lowest-score bucket
  std::size_t n = 0;
  double accuracy = 0.0;
  std::optional<Interval> ci;
};

// Sizes of n_buckets contiguous groups; the first (n mod n_buckets) get one extra.
inline std::vector<std::size_t> bucket_sizes(std::size_t n, std::size_t n_buckets) {
  if (n_buckets < 1) throw UsageError("n_buckets must be >= 1");
  if (n < n_buckets) {
    throw DataError("bucketize needs n >= n_buckets (n=" + std::to_string(n) +
                    ", n_buckets=" + std::to_string(n_buckets) + ")");
  }
  std::vector<std::size_t> sizes(n_buckets, n / n_buckets);
  for (std::size_t b = 0; b < n % n_buckets; ++b) ++sizes[b];
  return sizes;
}

// Example order used for bucketing: score ascending, then id ascending, then position.
inline std::vector<std::size_t> bucket_order(std::span<const double> scores,
                                             std::span<const std::string> ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    if (!ids.empty() && ids[a] != ids[b]) return ids[a] < ids[b];
    return false;
  });
  return order;
}

// `ids` may be empty, in which case ties keep input order.
inline std::vector<Bucket> bucketize(std::span<const double> scores, const std::vector<bool>& correct,
                                     std::span<const std::string> ids = {},
                                     std::size_t n_buckets = kDefaultBuckets) {
  check_same_length(scores, correct);
  if (!ids.empty() && ids.size() != scores.size()) throw UsageError("ids and scores differ in length");
  const auto sizes = bucket_sizes(scores.size(), n_buckets);
  const auto order = bucket_order(scores, ids);
  std::vector<Bucket> out(n_buckets);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < n_buckets; ++b) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sizes[b]; ++i) hits += correct[order[pos++]] ? 1 : 0;
    out[b].label = "B" + std::to_string(b + 1);
    out[b].n = sizes[b];
    out[b].accuracy = static_cast<double>(hits) / static_cast<double>(sizes[b]);
  }
  return out;
}

// Statistic over a resample, given as indices into the full sample.
using IndexStatistic = std::function<std::optional<double>(std::span<const std::size_t>)>;

struct BootstrapOptions {
  std::size_t resamples = kDefaultResamples;
  double level = kDefaultLevel;
  std::uint64_t seed = kDefaultBootstrapSeed;
  std::size_t jobs = 1;
  std::size_t max_redraws = 1000;  // per resample, before giving up
};

struct BootstrapResult {
  Interval ci;
  std::size_t discarded = 0;  // redrawn resamples where the statistic was undefined
};

// Linear-interpolation quantile of sorted values (R type 7).
inline double sorted_quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw UsageError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Percentile bootstrap over examples. Resample b draws n indices with
// replacement from Rng::stream(seed, b); if the statistic is undefined on the
// draw, the same stream draws again. Output is independent of `jobs`.
inline BootstrapResult bootstrap_ci(std::size_t n, const IndexStatistic& statistic,
                                    const BootstrapOptions& opts = {}) {
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw UsageError("bootstrap level must lie in (0,1)");
  if (opts.resamples < 1) throw UsageError("bootstrap resamples must be >= 1");
  if (n == 0) throw DataError("bootstrap on an empty sample");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (!statistic(all)) throw DataError("statistic is undefined on the full sample");

  std::vector<double> values(opts.resamples);
  std::vector<std::size_t> discards(opts.resamples, 0);
  parallel_for(opts.resamples, opts.jobs, [&](std::size_t b) {
    Rng rng = Rng::stream(opts.seed, b);
    std::vector<std::size_t> idx(n);
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > opts.max_redraws) {
        throw DataError("bootstrap statistic undefined on " + std::to_string(opts.max_redraws) +
                        " consecutive resamples");
      }
      for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
      if (auto v = statistic(idx)) {
        values[b] = *v;
        return;
      }
      ++discards[b];
    }
  });
  std::sort(values.begin(), values.end());
  const double alpha = 1.0 - opts.level;
  BootstrapResult r;
  r.ci.lo = sorted_quantile(values, alpha / 2.0);
  r.ci.hi = sorted_quantile(values, 1.0 - alpha / 2.0);
  r.discarded = std::accumulate(discards.begin(), discards.end(), std::size_t{0});
  return r;
}

namespace stats {

namespace detail {
struct Gathered {
  std::vector<double> scores;
  std::vector<bool> correct;
};
inline Gathered gather(std::span<const double> scores, const std::vector<bool>& correct,
                       std::span<const std::size_t> idx) {
  Gathered g;
  g.scores.resize(idx.size());
  g.correct.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    g.scores[i] = scores[idx[i]];
    g.correct[i] = correct[idx[i]];
  }
  return g;
}
}  // namespace detail

// The returned statistics reference the given spans; keep the data alive.
inline IndexStatistic auc_wrong(std::span<const double> scores, const std::vector<bool>& correct) {
  return [=](std::span<const std::size_t> idx) {
    const auto g = detail::gather(scores, correct, idx);
    return instab::auc_wrong(g.scores, g.correct);
  };
}

inline IndexStatistic spearman(std::span<const double> scores, const std::vector<bool>& correct) {
  return [=](std::span<const std::size_t> idx) {
    const auto g = detail::gather(scores, correct, idx);
    return instab::spearman(g.scores, g.correct);
  };
}

inline IndexStatistic accuracy(const std::vector<bool>& correct) {
  return [=](std::span<const std::size_t> idx) -> std::optional<double> {
    if (idx.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (auto i : idx) hits += correct[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(idx.size());
  };
}

inline IndexStatistic bucket_accuracy(std::span<const double> scores, const std::vector<bool>& correct,
                                      std::span<const std::string> ids, std::size_t bucket,
                                      std::size_t n_buckets = kDefaultBuckets) {
  return [=](std::span<const std::size_t> idx) -> std::optional<double> {
    if (idx.size() < n_buckets) return std::nullopt;
    const auto g = detail::gather(scores, correct, idx);
    std::vector<std::string> sub_ids;
    if (!ids.empty()) {
      sub_ids.reserve(idx.size());
      for (auto i : idx) sub_ids.push_back(ids[i]);
    }
    return bucketize(g.scores, g.correct, sub_ids, n_buckets).at(bucket).accuracy;
  };
}

}  // namespace stats

struct EvalOptions {
  std::size_t n_buckets = kDefaultBuckets;
  std::optional<BootstrapOptions> bootstrap;  // no intervals when empty
};

struct EvalReport {
  std::string statistic = "S";
  std::size_t n = 0;
  std::optional<double> accuracy;
  std::optional<double> auc_wrong;
  std::optional<double> spearman;
  std::vector<Bucket> buckets;  // empty when n < n_buckets
  std::optional<double> bucket_slope;  // accuracy(last) - accuracy(first)
  std::optional<Interval> auc_ci;
  std::size_t bootstrap_discarded = 0;
};

inline EvalReport evaluate(std::span<const double> scores, const std::vector<bool>& correct,
                           std::span<const std::string> ids, const EvalOptions& opts = {},
                           std::string statistic_name = "S") {
  check_same_length(scores, correct);
  EvalReport r;
  r.statistic = std::move(statistic_name);
  r.n = scores.size();
  r.accuracy = instab::accuracy(correct);
  r.auc_wrong = instab::auc_wrong(scores, correct);
  r.spearman = instab::spearman(scores, correct);
  if (r.n >= opts.n_buckets && opts.n_buckets >= 1) {
    r.buckets = bucketize(scores, correct, ids, opts.n_buckets);
    r.bucket_slope = r.buckets.back().accuracy - r.buckets.front().accuracy;
  }
  if (opts.bootstrap && r.n > 0) {
    if (r.auc_wrong) {
      const auto res = bootstrap_ci(r.n, stats::auc_wrong(scores, correct), *opts.bootstrap);
      r.auc_ci = res.ci;
      r.bootstrap_discarded += res.discarded;
    }
    for (std::size_t b = 0; b < r.buckets.size(); ++b) {
      const auto res = bootstrap_ci(
          r.n, stats::bucket_accuracy(scores, correct, ids, b, opts.n_buckets), *opts.bootstrap);
      r.buckets[b].ci = res.ci;
    }
  }
  return r;
}

}  // namespace instab

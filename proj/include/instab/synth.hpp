#pragma once

// Synthetic trace corpora with planted structure.
//
// Each trace belongs to one population. Its steps share a baseline
// rank-geometric distribution over k tokens (entropy `baseline_entropy`),
// perturbed per step by Gaussian logit noise. At one step drawn from the
// population's peak window the support is partly replaced by fresh tokens
// (`support_churn`) and the distribution sharpness is solved so that the
// instability at that step equals `peak_height` (plus jitter).
//
// Population sizes and per-population correct counts are allocated exactly
// (largest remainder), so planted structure can be checked against exact
// ground truth. The population of every trace is written to a sidecar file,
// never into the trace itself.

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/rng.hpp"
#include "instab/signal.hpp"
#include "instab/theory.hpp"
#include "instab/trace_io.hpp"
#include "instab/trace_model.hpp"

namespace instab {

struct Population {
  double share = 1.0;
  double correct_rate = 0.5;
  std::size_t peak_lo = 1;  // 1-based peak window, clamped to the trace length
  std::size_t peak_hi = 1;
  double peak_height = 0.0;  // target I at the peak step; <= 0 plants no peak
  double baseline_entropy = 1.0;
  double support_churn = 0.0;  // fraction of the support replaced at the peak
  double step_noise = 0.0;     // logit noise sd on baseline steps
  double height_jitter = 0.0;  // peak target drawn uniformly in height +/- jitter
};

struct SynthConfig {
  std::size_t n_traces = 100;
  std::size_t t_min = 64;
  std::size_t t_max = 128;
  std::size_t k = kDefaultLoggedK;
  std::uint64_t seed = 0;
  double lambda = kDefaultLambda;
  std::vector<Population> populations{Population{}};
  std::string dataset = "synthetic";
  std::string model = "planted";

  void validate() const {
    if (n_traces < 1) throw UsageError("n_traces must be >= 1");
    if (t_min < 1 || t_min > t_max) throw UsageError("T range must satisfy 1 <= min <= max");
    if (t_max > kDefaultMaxNewTokens) {
      throw UsageError("T range max exceeds the " + std::to_string(kDefaultMaxNewTokens) + "-token cap");
    }
    if (k < 2) throw UsageError("k must be >= 2");
    if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
    if (populations.empty()) throw UsageError("at least one population required");
    double total = 0.0;
    const double max_height = kLn2 + lambda * std::log(static_cast<double>(k));
    for (std::size_t i = 0; i < populations.size(); ++i) {
      const auto& p = populations[i];
      const std::string tag = "population " + std::to_string(i) + ": ";
      if (!(p.share >= 0.0)) throw UsageError(tag + "share must be >= 0");
      if (!(p.correct_rate >= 0.0 && p.correct_rate <= 1.0)) throw UsageError(tag + "correct_rate outside [0,1]");
      if (p.peak_lo < 1 || p.peak_lo > p.peak_hi || p.peak_hi > t_max) {
        throw UsageError(tag + "peak window must lie within the T range");
      }
      if (!(p.baseline_entropy >= 0.0 && p.baseline_entropy <= std::log(static_cast<double>(k)))) {
        throw UsageError(tag + "baseline_entropy outside [0, ln k]");
      }
      if (!(p.support_churn >= 0.0 && p.support_churn <= 1.0)) throw UsageError(tag + "support_churn outside [0,1]");
      if (!(p.step_noise >= 0.0) || !(p.height_jitter >= 0.0)) throw UsageError(tag + "noise must be >= 0");
      if (p.peak_height + p.height_jitter > max_height) {
        throw UsageError(tag + "infeasible peak_height: exceeds ln 2 + lambda ln k = " + std::to_string(max_height));
      }
      total += p.share;
    }
    if (std::abs(total - 1.0) > 1e-9) throw UsageError("population shares must sum to 1");
  }
};

struct SynthCorpus {
  std::vector<TraceRecord> traces;
  std::vector<std::size_t> population;  // sidecar: population index per trace
  std::vector<std::size_t> peak_step;   // planted 1-based peak step, 0 when none
};

namespace synth_detail {

// Largest-remainder allocation of `n` items over fractional weights.
inline std::vector<std::size_t> allocate(std::size_t n, const std::vector<double>& weights) {
  std::vector<std::size_t> counts(weights.size());
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    used += counts[i];
    rema.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; used < n; ++j, ++used) ++counts[rema[j % rema.size()].second];
  return counts;
}

// Rank-geometric distribution p_r proportional to exp(-beta r).
inline std::vector<double> geometric_probs(std::size_t k, double beta) {
  std::vector<double> p(k);
  double total = 0.0;
  for (std::size_t r = 0; r < k; ++r) total += (p[r] = std::exp(-beta * static_cast<double>(r)));
  for (auto& x : p) x /= total;
  return p;
}

// Sharpness whose rank-geometric distribution has the given entropy.
inline double beta_for_entropy(std::size_t k, double target) {
  if (target >= std::log(static_cast<double>(k))) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (entropy(geometric_probs(k, hi)) > target && hi < 1e6) hi *= 2.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (entropy(geometric_probs(k, mid)) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Step {
  std::vector<TokenId> ids;  // by rank
  std::vector<double> logits;
};

inline StepDistribution to_distribution(const Step& s) {
  StepDistribution d;
  d.support = s.ids;
  const auto p = softmax(s.logits);
  d.probs = p;
  return d;
}

inline StepRecord to_record(const Step& s, double log_mass) {
  const double zmax = *std::max_element(s.logits.begin(), s.logits.end());
  double total = 0.0;
  for (double z : s.logits) total += std::exp(z - zmax);
  const double lse = zmax + std::log(total);
  StepRecord rec;
  rec.entries.reserve(s.ids.size());
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    rec.entries.push_back({s.ids[i], std::min(0.0, s.logits[i] - lse + log_mass)});
  }
  canonicalize(rec);
  return rec;
}

}  // namespace synth_detail

inline SynthCorpus generate(const SynthConfig& cfg) {
  using namespace synth_detail;
  cfg.validate();
  const std::size_t P = cfg.populations.size();
  std::vector<double> shares;
  for (const auto& p : cfg.populations) shares.push_back(p.share);
  const auto counts = allocate(cfg.n_traces, shares);

  // Population membership and labels, exact per population, randomly interleaved.
  std::vector<std::pair<std::size_t, bool>> slots;
  for (std::size_t i = 0; i < P; ++i) {
    const auto n_correct = allocate(counts[i], {cfg.populations[i].correct_rate,
                                                1.0 - cfg.populations[i].correct_rate})[0];
    for (std::size_t j = 0; j < counts[i]; ++j) slots.emplace_back(i, j < n_correct);
  }
  Rng order_rng = Rng::stream(cfg.seed, std::numeric_limits<std::uint64_t>::max());
  portable_shuffle(slots.begin(), slots.end(), order_rng);

  SynthCorpus out;
  out.traces.resize(cfg.n_traces);
  out.population.resize(cfg.n_traces);
  out.peak_step.resize(cfg.n_traces, 0);

  for (std::size_t n = 0; n < cfg.n_traces; ++n) {
    const auto [pi, correct] = slots[n];
    const Population& pop = cfg.populations[pi];
    Rng rng = Rng::stream(cfg.seed, n);
    const std::size_t T = cfg.t_min + rng.below(cfg.t_max - cfg.t_min + 1);

    // Baseline: token ids in random rank order, fixed sharpness.
    std::vector<TokenId> base_ids(cfg.k);
    std::iota(base_ids.begin(), base_ids.end(), TokenId{0});
    portable_shuffle(base_ids.begin(), base_ids.end(), rng);
    const double beta = beta_for_entropy(cfg.k, pop.baseline_entropy);
    const auto baseline_step = [&] {
      Step s{base_ids, std::vector<double>(cfg.k)};
      for (std::size_t r = 0; r < cfg.k; ++r) {
        s.logits[r] = -beta * static_cast<double>(r) + (pop.step_noise > 0.0 ? pop.step_noise * rng.normal() : 0.0);
      }
      return s;
    };

    std::size_t peak = 0;
    if (pop.peak_height > 0.0) {
      peak = std::min(T, pop.peak_lo + static_cast<std::size_t>(rng.below(pop.peak_hi - pop.peak_lo + 1)));
    }
    const double target = pop.peak_height + pop.height_jitter * rng.uniform(-1.0, 1.0);

    TraceRecord& tr = out.traces[n];
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%06zu", n);
    tr.id = id;
    tr.dataset = cfg.dataset;
    tr.model = cfg.model;
    tr.decoding = {0.0, 1.0, static_cast<std::int64_t>(cfg.seed & 0x7FFFFFFFFFFFFFFFULL)};
    tr.label.correct = correct;
    tr.label.predicted = correct ? "1" : "0";
    tr.label.reference = "1";
    tr.steps.reserve(T);

    std::optional<Step> prev;
    for (std::size_t t = 1; t <= T; ++t) {
      Step s = baseline_step();
      if (t == peak) {
        // Churn: replace a random subset of ranks with tokens outside the baseline support.
        const auto n_churn = static_cast<std::size_t>(std::lround(pop.support_churn * static_cast<double>(cfg.k)));
        std::vector<std::size_t> ranks(cfg.k);
        std::iota(ranks.begin(), ranks.end(), std::size_t{0});
        portable_shuffle(ranks.begin(), ranks.end(), rng);
        for (std::size_t j = 0; j < n_churn; ++j) s.ids[ranks[j]] = static_cast<TokenId>(cfg.k + j);
        const StepDistribution before = prev ? to_distribution(*prev) : to_distribution(s);
        const auto instability = [&](double b) {
          Step c{s.ids, std::vector<double>(cfg.k)};
          for (std::size_t r = 0; r < cfg.k; ++r) c.logits[r] = -b * static_cast<double>(r);
          const auto d = to_distribution(c);
          return (t > 1 ? jsd(d, before) : 0.0) + cfg.lambda * entropy(d);
        };
        // Scan sharpness from uniform to near point mass, then bisect the first crossing.
        std::vector<double> grid{0.0};
        for (double b = 1e-3; b < 60.0; b *= 1.25) grid.push_back(b);
        double best_b = 0.0, best_err = std::numeric_limits<double>::infinity();
        std::optional<std::pair<double, double>> bracket;
        double f_prev = instability(grid[0]) - target;
        for (std::size_t g = 0; g < grid.size(); ++g) {
          const double f = g == 0 ? f_prev : instability(grid[g]) - target;
          if (std::abs(f) < best_err) {
            best_err = std::abs(f);
            best_b = grid[g];
          }
          if (g > 0 && !bracket && ((f_prev > 0.0) != (f > 0.0))) bracket = {grid[g - 1], grid[g]};
          f_prev = f;
        }
        if (bracket) {
          auto [lo, hi] = *bracket;
          const bool lo_positive = instability(lo) - target > 0.0;
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            ((instability(mid) - target > 0.0) == lo_positive ? lo : hi) = mid;
          }
          best_b = 0.5 * (lo + hi);
          best_err = std::abs(instability(best_b) - target);
        }
        if (best_err > 0.05 * std::max(1.0, target)) {
          throw UsageError("population " + std::to_string(pi) + ": peak_height " + std::to_string(target) +
                           " not attainable with support_churn " + std::to_string(pop.support_churn) +
                           " (residual " + std::to_string(best_err) + ")");
        }
        for (std::size_t r = 0; r < cfg.k; ++r) s.logits[r] = -best_b * static_cast<double>(r);
      }
      const double log_mass = std::log(rng.uniform(0.85, 1.0));
      tr.steps.push_back(to_record(s, log_mass));
      prev = std::move(s);
    }
    out.population[n] = pi;
    out.peak_step[n] = peak;
  }
  return out;
}

inline void write_sidecar(std::ostream& out, const SynthCorpus& c) {
  for (std::size_t i = 0; i < c.traces.size(); ++i) {
    out << "{\"id\":" << json_string(c.traces[i].id) << ",\"population\":" << c.population[i]
        << ",\"peak_step\":" << c.peak_step[i] << "}\n";
  }
}

// Named configurations used by the CLI and the test suites.
//   two_population  correct traces peak low and early, wrong traces high and late
//   null            one population, correctness independent of the signal
//   timing          fixed T=100; correct peaks at rho<0.2, half-correct in
//                   [0.3,0.45], wrong at rho>=0.6
//   lambda_contrast every trace has a disjoint-support spike (JSD = ln 2);
//                   only the entropy level separates wrong from correct
//   failure_modes   wrong traces split 20/20/60 into stable, early-collapse
//                   and late-unstable populations
//   constant        identical steps in every trace
inline SynthConfig preset(const std::string& name, std::size_t n_traces, std::uint64_t seed) {
  SynthConfig c;
  c.n_traces = n_traces;
  c.seed = seed;
  if (name == "two_population") {
    c.populations = {
        {0.5, 1.0, 5, 40, 2.0, 1.0, 0.3, 0.3, 0.1},
        {0.5, 0.0, 60, 120, 3.6, 1.0, 0.8, 0.3, 0.1},
    };
  } else if (name == "null") {
    c.populations = {{1.0, 0.5, 5, 120, 2.8, 1.0, 0.5, 0.3, 0.6}};
  } else if (name == "timing") {
    c.t_min = c.t_max = 100;
    c.populations = {
        {0.4, 1.0, 5, 19, 3.0, 1.0, 0.5, 0.3, 0.1},
        {0.3, 0.5, 30, 45, 3.0, 1.0, 0.5, 0.3, 0.1},
        {0.3, 0.0, 60, 100, 3.0, 1.0, 0.5, 0.3, 0.1},
    };
  } else if (name == "lambda_contrast") {
    c.populations = {
        {0.5, 1.0, 10, 60, kLn2 + 0.8, 0.8, 1.0, 0.2, 0.0},
        {0.5, 0.0, 10, 60, kLn2 + 2.0, 2.0, 1.0, 0.2, 0.0},
    };
  } else if (name == "failure_modes") {
    c.populations = {
        {0.5, 1.0, 5, 60, 2.0, 1.0, 0.5, 0.3, 0.1},
        {0.1, 0.0, 1, 1, 0.0, 0.3, 0.0, 0.1, 0.0},
        {0.1, 0.0, 3, 15, 3.5, 1.0, 0.8, 0.3, 0.1},
        {0.3, 0.0, 40, 60, 2.6, 1.0, 0.5, 0.3, 0.1},
    };
  } else if (name == "constant") {
    c.populations = {{1.0, 0.5, 1, 1, 0.0, 1.5, 0.0, 0.0, 0.0}};
  } else {
    throw UsageError("unknown synth preset '" + name + "'");
  }
  return c;
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"two_population", "null", "timing",
                                              "lambda_contrast", "failure_modes", "constant"};
  return names;
}

}  // namespace instab

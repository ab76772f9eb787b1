#pragma once

// Negative controls and ablations: time-structure shuffles, entropy-family
// baselines, lambda ablation, effective-k sweep and early-window sweep.
//
// Shuffles are deterministic per trace id: the permutation is a Fisher-Yates
// pass driven by Rng(stream_key(seed, fnv1a64(id))) (see rng.hpp).

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/metrics.hpp"
#include "instab/pipeline.hpp"
#include "instab/rng.hpp"
#include "instab/signal.hpp"
#include "instab/trace_io.hpp"
#include "instab/trace_model.hpp"

namespace instab {

inline std::vector<std::size_t> id_permutation(std::size_t n, const std::string& trace_id,
                                               std::uint64_t seed = 0) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(stream_key(seed, fnv1a64(trace_id)));
  portable_shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

// Permutes the logged steps; downstream series recompute D on the new order.
inline TraceRecord shuffle_steps(const TraceRecord& trace, std::uint64_t seed = 0) {
  TraceRecord out = trace;
  const auto perm = id_permutation(trace.steps.size(), trace.id, seed);
  for (std::size_t t = 0; t < perm.size(); ++t) out.steps[t] = trace.steps[perm[t]];
  return out;
}

// Permutes I only; H and D are left in place and flagged stale.
inline StepSeries shuffle_series(const StepSeries& series, const std::string& trace_id,
                                 std::uint64_t seed = 0) {
  StepSeries out = series;
  const auto perm = id_permutation(series.I.size(), trace_id, seed);
  for (std::size_t t = 0; t < perm.size(); ++t) out.I[t] = series.I[perm[t]];
  out.hd_stale = out.hd_stale || out.I.size() > 1;
  return out;
}

enum class BaselineKind { SH, SdH, SD };

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::SH: return "S_H";
    case BaselineKind::SdH: return "S_dH";
    case BaselineKind::SD: return "S_D";
  }
  return "?";
}

// max_t H_t, max_t |H_t - H_{t-1}| or max_t D_t, optionally over t <= window.
inline double baseline_statistic(const StepSeries& series, BaselineKind kind,
                                 std::optional<std::size_t> window = std::nullopt) {
  if (series.hd_stale) throw UsageError("baseline statistic on a series with stale H/D");
  const std::size_t T = std::min(series.length(), window.value_or(series.length()));
  if (T == 0) throw DataError("baseline statistic on an empty series");
  double best = 0.0;
  switch (kind) {
    case BaselineKind::SH:
      best = series.H[0];
      for (std::size_t t = 1; t < T; ++t) best = std::max(best, series.H[t]);
      break;
    case BaselineKind::SdH:
      for (std::size_t t = 1; t < T; ++t) best = std::max(best, std::abs(series.H[t] - series.H[t - 1]));
      break;
    case BaselineKind::SD:
      best = series.D[0];
      for (std::size_t t = 1; t < T; ++t) best = std::max(best, series.D[t]);
      break;
  }
  return best;
}

enum class ControlKind {
  shuffle_p,
  shuffle_i,
  baseline_SH,
  baseline_SdH,
  baseline_SD,
  lambda_ablation,
  topk_sweep,
  window_sweep,
};

inline const std::vector<std::pair<ControlKind, std::string>>& control_kind_names() {
  static const std::vector<std::pair<ControlKind, std::string>> names{
      {ControlKind::shuffle_p, "shuffle_p"},
      {ControlKind::shuffle_i, "shuffle_i"},
      {ControlKind::baseline_SH, "baseline_SH"},
      {ControlKind::baseline_SdH, "baseline_SdH"},
      {ControlKind::baseline_SD, "baseline_SD"},
      {ControlKind::lambda_ablation, "lambda_ablation"},
      {ControlKind::topk_sweep, "topk_sweep"},
      {ControlKind::window_sweep, "window_sweep"},
  };
  return names;
}

inline std::string to_string(ControlKind k) {
  for (const auto& [kind, name] : control_kind_names()) {
    if (kind == k) return name;
  }
  return "?";
}

inline ControlKind parse_control_kind(const std::string& s) {
  for (const auto& [kind, name] : control_kind_names()) {
    if (name == s) return kind;
  }
  throw UsageError("unknown control kind '" + s + "'");
}

struct ControlSpec {
  ControlKind kind = ControlKind::shuffle_p;
  double lambda = kDefaultLambda;
  std::vector<double> lambdas;    // lambda_ablation
  std::vector<std::size_t> ks;    // topk_sweep
  std::vector<std::size_t> ws;    // window_sweep
  std::optional<std::size_t> window = kFixedWindow;  // windowed rows for shuffles/baselines
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (!(lambda >= 0.0)) throw UsageError("lambda must be >= 0");
    switch (kind) {
      case ControlKind::lambda_ablation:
        if (lambdas.empty()) throw UsageError("lambda_ablation requires a lambda list");
        for (double l : lambdas) {
          if (!(l >= 0.0)) throw UsageError("lambda values must be >= 0");
        }
        break;
      case ControlKind::topk_sweep:
        if (ks.empty()) throw UsageError("topk_sweep requires a k list");
        for (auto k : ks) {
          if (k < 1) throw UsageError("k values must be >= 1");
        }
        break;
      case ControlKind::window_sweep:
        if (ws.empty()) throw UsageError("window_sweep requires a window list");
        for (auto w : ws) {
          if (w < 1) throw UsageError("window values must be >= 1");
        }
        break;
      default:
        if (window && *window < 1) throw UsageError("window must be >= 1");
        break;
    }
  }
};

// One row of a long-format control table.
struct ControlRow {
  std::string control;
  std::string setting;
  EvalReport report;  // report.statistic names the score
};

struct ControlOptions {
  SeriesOptions series;  // lambda here is overridden by ControlSpec::lambda
  EvalOptions eval;
  std::size_t jobs = 1;
};

namespace detail {

inline std::vector<StepSeries> all_series(const std::vector<TraceRecord>& corpus,
                                          const SeriesOptions& so, std::size_t jobs) {
  std::vector<StepSeries> out(corpus.size());
  parallel_for(corpus.size(), jobs, [&](std::size_t i) { out[i] = step_series(corpus[i], so); });
  return out;
}

inline EvalReport eval_scores(const std::vector<TraceRecord>& corpus, const std::vector<double>& scores,
                              const EvalOptions& eo, std::string name) {
  std::vector<bool> correct;
  std::vector<std::string> ids;
  correct.reserve(corpus.size());
  ids.reserve(corpus.size());
  for (const auto& tr : corpus) {
    correct.push_back(tr.label.correct);
    ids.push_back(tr.id);
  }
  return evaluate(scores, correct, ids, eo, std::move(name));
}

inline std::vector<double> window_max(const std::vector<StepSeries>& series, std::optional<std::size_t> w) {
  std::vector<double> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back(max_prefix(s.I, w.value_or(s.length())));
  return out;
}

inline std::string window_name(std::optional<std::size_t> w) {
  return w ? "S_" + std::to_string(*w) : "S";
}

}  // namespace detail

// Per-trace S_w for every corpus trace under the given series options.
inline std::vector<double> corpus_strength(const std::vector<TraceRecord>& corpus, const SeriesOptions& so,
                                           std::optional<std::size_t> window, std::size_t jobs = 1) {
  return detail::window_max(detail::all_series(corpus, so, jobs), window);
}

inline std::vector<ControlRow> run_control(const std::vector<TraceRecord>& corpus, const ControlSpec& spec,
                                           const ControlOptions& opts = {}) {
  spec.validate();
  SeriesOptions so = opts.series;
  so.lambda = spec.lambda;
  const std::string name = to_string(spec.kind);
  std::vector<ControlRow> rows;
  const auto windows = [&] {
    std::vector<std::optional<std::size_t>> w{std::nullopt};
    if (spec.window) w.push_back(spec.window);
    return w;
  }();

  switch (spec.kind) {
    case ControlKind::shuffle_p:
    case ControlKind::shuffle_i: {
      const auto original = detail::all_series(corpus, so, opts.jobs);
      std::vector<StepSeries> shuffled(corpus.size());
      parallel_for(corpus.size(), opts.jobs, [&](std::size_t i) {
        shuffled[i] = spec.kind == ControlKind::shuffle_p
                          ? step_series(shuffle_steps(corpus[i], spec.shuffle_seed), so)
                          : shuffle_series(original[i], corpus[i].id, spec.shuffle_seed);
      });
      for (const auto& w : windows) {
        rows.push_back({name, "original",
                        detail::eval_scores(corpus, detail::window_max(original, w), opts.eval,
                                            detail::window_name(w))});
        rows.push_back({name, spec.kind == ControlKind::shuffle_p ? "shuffle {p_t}" : "shuffle {I_t}",
                        detail::eval_scores(corpus, detail::window_max(shuffled, w), opts.eval,
                                            detail::window_name(w))});
      }
      break;
    }
    case ControlKind::baseline_SH:
    case ControlKind::baseline_SdH:
    case ControlKind::baseline_SD: {
      const BaselineKind bk = spec.kind == ControlKind::baseline_SH    ? BaselineKind::SH
                              : spec.kind == ControlKind::baseline_SdH ? BaselineKind::SdH
                                                                       : BaselineKind::SD;
      const auto series = detail::all_series(corpus, so, opts.jobs);
      for (const auto& w : windows) {
        rows.push_back({name, "S_I", detail::eval_scores(corpus, detail::window_max(series, w), opts.eval,
                                                         detail::window_name(w))});
        std::vector<double> scores;
        scores.reserve(series.size());
        for (const auto& s : series) scores.push_back(baseline_statistic(s, bk, w));
        rows.push_back({name, to_string(bk),
                        detail::eval_scores(corpus, scores, opts.eval,
                                            w ? to_string(bk) + "@" + std::to_string(*w) : to_string(bk))});
      }
      break;
    }
    case ControlKind::lambda_ablation:
      for (double l : spec.lambdas) {
        SeriesOptions sl = so;
        sl.lambda = l;
        const auto series = detail::all_series(corpus, sl, opts.jobs);
        for (const auto& w : windows) {
          rows.push_back({name, "lambda=" + format_real(l),
                          detail::eval_scores(corpus, detail::window_max(series, w), opts.eval,
                                              detail::window_name(w))});
        }
      }
      break;
    case ControlKind::topk_sweep:
      for (std::size_t k : spec.ks) {
        SeriesOptions sk = so;
        sk.effective_k = k;
        const auto series = detail::all_series(corpus, sk, opts.jobs);
        rows.push_back({name, "k=" + std::to_string(k),
                        detail::eval_scores(corpus, detail::window_max(series, std::nullopt), opts.eval, "S")});
      }
      break;
    case ControlKind::window_sweep: {
      const auto series = detail::all_series(corpus, so, opts.jobs);
      for (std::size_t w : spec.ws) {
        rows.push_back({name, "w=" + std::to_string(w),
                        detail::eval_scores(corpus, detail::window_max(series, w), opts.eval,
                                            detail::window_name(w))});
      }
      break;
    }
  }
  return rows;
}

inline std::vector<ControlRow> lambda_ablation(const std::vector<TraceRecord>& corpus,
                                               std::vector<double> lambdas, const ControlOptions& opts = {}) {
  ControlSpec spec;
  spec.kind = ControlKind::lambda_ablation;
  spec.lambdas = std::move(lambdas);
  return run_control(corpus, spec, opts);
}

// One report per effective k, each recomputed from the raw logged logprobs.
inline std::vector<ControlRow> topk_sweep(const std::vector<TraceRecord>& corpus, std::vector<std::size_t> ks,
                                          double lambda = kDefaultLambda, const ControlOptions& opts = {}) {
  ControlSpec spec;
  spec.kind = ControlKind::topk_sweep;
  spec.ks = std::move(ks);
  spec.lambda = lambda;
  return run_control(corpus, spec, opts);
}

inline std::vector<ControlRow> window_sweep(const std::vector<TraceRecord>& corpus, std::vector<std::size_t> ws,
                                            double lambda = kDefaultLambda, const ControlOptions& opts = {}) {
  ControlSpec spec;
  spec.kind = ControlKind::window_sweep;
  spec.ws = std::move(ws);
  spec.lambda = lambda;
  return run_control(corpus, spec, opts);
}

}  // namespace instab

#pragma once

// Per-step observables (entropy, consecutive-step JSD, instability, curvature
// proxy) and per-trace summary statistics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "instab/error.hpp"
#include "instab/numeric.hpp"
#include "instab/trace_model.hpp"

namespace instab {

inline constexpr double kLn2 = std::numbers::ln2;
inline constexpr double kDefaultLambda = 1.0;
inline constexpr std::size_t kFixedWindow = 50;
inline constexpr std::size_t kDefaultProbeTopM = 10;
// effective_k meaning "every logged entry"; never reported as clamping.
inline constexpr std::size_t kAllLogged = std::numeric_limits<std::size_t>::max();
inline const std::vector<std::size_t> kDefaultWindows{10, 20, 50, 100};

// Shannon entropy in nats over the strictly positive entries.
// A positive epsilon evaluates log(p + epsilon) instead of log(p).
inline double entropy(std::span<const double> probs, double epsilon = 0.0) {
  CompensatedSum h;
  for (double p : probs) {
    if (p > 0.0) h.add(-p * std::log(p + epsilon));
  }
  return std::max(0.0, h.value());
}

inline double entropy(const StepDistribution& p, double epsilon = 0.0) {
  return entropy(std::span<const double>(p.probs), epsilon);
}

// Jensen-Shannon divergence of two aligned vectors, in nats, clamped to [0, ln 2].
inline double jsd_aligned(std::span<const double> p, std::span<const double> q,
                          double epsilon = 0.0) {
  CompensatedSum d;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0.0 ? 0.5 * p[i] * std::log((p[i] + epsilon) / (m + epsilon)) : 0.0;
    const double b = q[i] > 0.0 ? 0.5 * q[i] * std::log((q[i] + epsilon) / (m + epsilon)) : 0.0;
    d.add(a + b);  // a single commutative add keeps jsd(p, q) == jsd(q, p) bitwise
  }
  return std::clamp(d.value(), 0.0, kLn2);
}

inline double jsd(const StepDistribution& p, const StepDistribution& q, double epsilon = 0.0) {
  const AlignedPair a = align_union(p, q);
  return jsd_aligned(a.p, a.q, epsilon);
}

// Smallest eigenvalue of J(p) = diag(p) - p p^T on the subspace orthogonal to
// the all-ones vector.
//
// J(p) is a rank-one downdate of diag(p) with null vector 1, so its spectrum
// interlaces the sorted probabilities: 0 <= d1 <= lambda_2 <= d2 <= ...
// lambda_2 is the root in (d1, d2) of the secular function
//   g(x) = sum_i p_i / (p_i - x),
// which is strictly increasing there; bisection finds it to full precision.
inline double curvature_proxy(std::span<const double> probs) {
  if (probs.size() < 2) return 0.0;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = d1;
  for (double p : probs) {
    if (p < d1) {
      d2 = d1;
      d1 = p;
    } else if (p < d2) {
      d2 = p;
    }
  }
  if (!(d1 > 0.0)) return 0.0;  // zero-padded entry: J is singular along it
  if (d2 <= d1) return d1;      // repeated smallest probability
  const auto g = [&](double x) {
    double s = 0.0;
    for (double p : probs) s += p / (p - x);
    return s;
  };
  double lo = d1;
  double hi = d2;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline double curvature_proxy(const StepDistribution& p) {
  return curvature_proxy(std::span<const double>(p.probs));
}

struct StepSeries {
  std::vector<double> H;  // entropy per step, nats
  std::vector<double> D;  // JSD to previous step; D[0] = 0
  std::vector<double> I;  // D + lambda * H
  std::optional<std::vector<double>> kappa;
  double lambda = kDefaultLambda;
  std::size_t effective_k = kAllLogged;
  bool k_clamped = false;  // effective_k exceeded some step's logged length
  bool hd_stale = false;   // I was permuted independently of H and D

  std::size_t length() const noexcept { return I.size(); }
};

struct SeriesOptions {
  double lambda = kDefaultLambda;
  std::size_t effective_k = kAllLogged;
  bool with_kappa = false;
  double epsilon = 0.0;
};

inline StepSeries step_series(const TraceRecord& trace, const SeriesOptions& opts) {
  if (!(opts.lambda >= 0.0)) throw UsageError("lambda must be >= 0");
  const std::size_t T = trace.steps.size();
  StepSeries s;
  s.lambda = opts.lambda;
  s.effective_k = opts.effective_k;
  s.H.resize(T);
  s.D.assign(T, 0.0);
  s.I.resize(T);
  if (opts.with_kappa) s.kappa.emplace(T);
  StepDistribution prev;
  for (std::size_t t = 0; t < T; ++t) {
    s.k_clamped = s.k_clamped ||
                  (opts.effective_k != kAllLogged && is_clamped(trace.steps[t], opts.effective_k));
    StepDistribution cur = renormalize(trace.steps[t], opts.effective_k);
    s.H[t] = entropy(cur, opts.epsilon);
    if (t > 0) s.D[t] = jsd(cur, prev, opts.epsilon);
    s.I[t] = s.D[t] + opts.lambda * s.H[t];
    if (s.kappa) (*s.kappa)[t] = curvature_proxy(cur);
    prev = std::move(cur);
  }
  return s;
}

inline StepSeries step_series(const TraceRecord& trace, double lambda = kDefaultLambda,
                              std::size_t effective_k = kAllLogged, bool with_kappa = false) {
  return step_series(trace, SeriesOptions{lambda, effective_k, with_kappa, 0.0});
}

// 0-based argmax over the first `limit` entries, smallest index on ties.
inline std::size_t argmax_prefix(std::span<const double> xs, std::size_t limit) {
  const std::size_t n = std::min(limit, xs.size());
  if (n == 0) throw DataError("argmax over an empty series");
  std::size_t best = 0;
  for (std::size_t t = 1; t < n; ++t) {
    if (xs[t] > xs[best]) best = t;
  }
  return best;
}

inline double max_prefix(std::span<const double> xs, std::size_t limit) {
  return xs[argmax_prefix(xs, limit)];
}

struct TraceDiagnostics {
  std::string id;
  bool correct = false;
  std::size_t T = 0;
  double S = 0.0;
  std::vector<std::pair<std::size_t, double>> S_w;  // ascending windows
  std::size_t t_star = 1;                           // 1-based
  double rho = 1.0;
  std::size_t t_star_50 = 1;
  double rho_50 = 0.0;
  std::optional<double> margin_at_peak;  // null when the peak step has a single token
  std::optional<double> margin_before;
  std::optional<double> margin_drop;
  double jaccard_overlap = 1.0;
  double turnover = 0.0;
  bool peak_at_first_step = false;  // probes took their neutral values
  std::optional<double> kappa_at_peak;

  double window_strength(std::size_t w) const {
    for (const auto& [win, v] : S_w) {
      if (win == w) return v;
    }
    throw UsageError("window " + std::to_string(w) + " was not computed");
  }
};

struct SummaryOptions {
  std::vector<std::size_t> windows = kDefaultWindows;
  std::size_t probe_top_m = kDefaultProbeTopM;
  std::size_t fixed_window = kFixedWindow;
};

// log p(1) - log p(2) under the renormalized distribution.
inline std::optional<double> top2_margin(const StepDistribution& p) {
  if (p.size() < 2) return std::nullopt;
  return std::log(p.probs[0]) - std::log(p.probs[1]);
}

inline double top_m_jaccard(const StepDistribution& a, const StepDistribution& b, std::size_t m) {
  const std::size_t ma = std::min(m, a.size());
  const std::size_t mb = std::min(m, b.size());
  std::unordered_set<TokenId> sa(a.support.begin(), a.support.begin() + static_cast<std::ptrdiff_t>(ma));
  std::size_t inter = 0;
  for (std::size_t i = 0; i < mb; ++i) inter += sa.count(b.support[i]);
  const std::size_t uni = ma + mb - inter;
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline TraceDiagnostics summarize(const TraceRecord& trace, const StepSeries& series,
                                  const SummaryOptions& opts = {}) {
  const std::size_t T = series.length();
  if (T == 0 || T != trace.steps.size()) throw DataError("series does not match trace", {}, trace.id);
  if (opts.fixed_window == 0) throw UsageError("fixed window must be >= 1");
  TraceDiagnostics d;
  d.id = trace.id;
  d.correct = trace.label.correct;
  d.T = T;
  const std::span<const double> I(series.I);
  const std::size_t peak = argmax_prefix(I, T);
  d.S = I[peak];
  d.t_star = peak + 1;
  d.rho = static_cast<double>(d.t_star) / static_cast<double>(T);
  const std::size_t peak50 = argmax_prefix(I, opts.fixed_window);
  d.t_star_50 = peak50 + 1;
  d.rho_50 = static_cast<double>(d.t_star_50) / static_cast<double>(opts.fixed_window);

  std::vector<std::size_t> windows = opts.windows;
  std::sort(windows.begin(), windows.end());
  windows.erase(std::unique(windows.begin(), windows.end()), windows.end());
  for (std::size_t w : windows) {
    if (w == 0) throw UsageError("window sizes must be >= 1");
    d.S_w.emplace_back(w, max_prefix(I, w));
  }

  const StepDistribution at_peak = renormalize(trace.steps[peak], series.effective_k);
  d.margin_at_peak = top2_margin(at_peak);
  if (series.kappa) d.kappa_at_peak = (*series.kappa)[peak];
  if (peak == 0) {
    d.peak_at_first_step = true;
    if (d.margin_at_peak) d.margin_drop = 0.0;
    d.jaccard_overlap = 1.0;
  } else {
    const StepDistribution before = renormalize(trace.steps[peak - 1], series.effective_k);
    d.margin_before = top2_margin(before);
    if (d.margin_before && d.margin_at_peak) d.margin_drop = *d.margin_before - *d.margin_at_peak;
    d.jaccard_overlap = top_m_jaccard(at_peak, before, opts.probe_top_m);
  }
  d.turnover = 1.0 - d.jaccard_overlap;
  return d;
}

}  // namespace instab

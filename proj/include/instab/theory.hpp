#pragma once

// Numeric certification of two inequalities relating distribution change to
// logit change:
//
//   Pinsker chain:  JSD(p,q) >= 1/8 |p-q|_1^2 >= 1/8 |p-q|_2^2
//   Logit bound:    JSD(p,q) >= kappa^2 / 8 * |P(z - z')|_2^2
//
// where p = softmax(z), q = softmax(z'), P projects onto the complement of the
// all-ones vector and kappa is the infimum over s in [0,1] of the curvature
// proxy of softmax(z' + s (z - z')).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/parallel.hpp"
#include "instab/rng.hpp"
#include "instab/signal.hpp"

namespace instab {

inline std::vector<double> softmax(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - zmax);
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

inline double projected_norm_sq(std::span<const double> v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s;
}

struct KappaEstimate {
  double kappa = 0.0;
  std::size_t grid_points = 0;
};

// Minimum curvature along the logit segment, on a uniform grid that starts at
// `initial_points` and doubles until the estimate moves by less than `tol`.
inline KappaEstimate trajectory_kappa(std::span<const double> z, std::span<const double> z_prev,
                                      std::size_t initial_points = 200, double tol = 1e-6,
                                      std::size_t max_points = 1u << 14) {
  std::vector<double> zs(z.size());
  const auto grid_min = [&](std::size_t points) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points; ++i) {
      const double s = static_cast<double>(i) / static_cast<double>(points - 1);
      for (std::size_t j = 0; j < z.size(); ++j) zs[j] = z_prev[j] + s * (z[j] - z_prev[j]);
      best = std::min(best, curvature_proxy(softmax(zs)));
    }
    return best;
  };
  std::size_t points = std::max<std::size_t>(initial_points, 2);
  double est = grid_min(points);
  while (points < max_points) {
    const std::size_t finer = 2 * points - 1;  // contains the previous grid
    const double next = grid_min(finer);
    points = finer;
    const double change = std::abs(est - next);
    est = next;
    if (change < tol) break;
  }
  return {est, points};
}

struct LemmaCheck {
  double jsd = 0.0;
  double kappa = 0.0;
  double bound = 0.0;  // kappa^2 / 8 * |P(z - z')|^2
  double slack = 0.0;  // jsd - bound
};

inline LemmaCheck check_logit_bound(std::span<const double> z, std::span<const double> z_prev) {
  if (z.size() != z_prev.size() || z.size() < 2) throw UsageError("logit vectors must share a dim >= 2");
  const auto p = softmax(z);
  const auto q = softmax(z_prev);
  std::vector<double> diff(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) diff[i] = z[i] - z_prev[i];
  LemmaCheck c;
  c.jsd = jsd_aligned(p, q);
  c.kappa = trajectory_kappa(z, z_prev).kappa;
  c.bound = c.kappa * c.kappa / 8.0 * projected_norm_sq(diff);
  c.slack = c.jsd - c.bound;
  return c;
}

struct VerifyReport {
  std::string check;
  std::size_t trials = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::size_t violations = 0;
  double min_slack = 0.0;
  double tolerance = 0.0;
};

inline constexpr double kLemmaTolerance = 1e-9;
inline constexpr double kPinskerTolerance = 1e-12;

// Random logit pairs with entries uniform in [-logit_range, logit_range].
inline VerifyReport verify_lemma_jsd(std::size_t trials, std::size_t dim, std::uint64_t seed,
                                     double logit_range = 5.0, std::size_t jobs = 1) {
  if (trials < 1) throw UsageError("trials >= 1 required");
  if (dim < 2) throw UsageError("dim >= 2 required");
  std::vector<double> slack(trials);
  parallel_for(trials, jobs, [&](std::size_t t) {
    Rng rng = Rng::stream(seed, t);
    std::vector<double> z(dim), zp(dim);
    for (auto& x : z) x = rng.uniform(-logit_range, logit_range);
    for (auto& x : zp) x = rng.uniform(-logit_range, logit_range);
    slack[t] = check_logit_bound(z, zp).slack;
  });
  VerifyReport r{"logit_jsd_bound", trials, dim, seed, 0, std::numeric_limits<double>::infinity(),
                 kLemmaTolerance};
  for (double s : slack) {
    if (s + kLemmaTolerance < 0.0) ++r.violations;
    r.min_slack = std::min(r.min_slack, s);
  }
  return r;
}

struct PinskerCheck {
  double jsd = 0.0;
  double l1_bound = 0.0;  // |p-q|_1^2 / 8
  double l2_bound = 0.0;  // |p-q|_2^2 / 8
  double slack = 0.0;     // min of the two link slacks
};

inline PinskerCheck check_pinsker(std::span<const double> p, std::span<const double> q) {
  double l1 = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    l1 += std::abs(p[i] - q[i]);
    l2 += (p[i] - q[i]) * (p[i] - q[i]);
  }
  PinskerCheck c;
  c.jsd = jsd_aligned(p, q);
  c.l1_bound = l1 * l1 / 8.0;
  c.l2_bound = l2 / 8.0;
  c.slack = std::min(c.jsd - c.l1_bound, c.l1_bound - c.l2_bound);
  return c;
}

// Uniform simplex points; every fourth trial zeroes a random subset of
// coordinates in each vector so partially and fully disjoint supports occur.
inline VerifyReport verify_pinsker_chain(std::size_t trials, std::size_t dim, std::uint64_t seed,
                                         std::size_t jobs = 1) {
  if (trials < 1) throw UsageError("trials >= 1 required");
  if (dim < 2) throw UsageError("dim >= 2 required");
  std::vector<double> slack(trials);
  parallel_for(trials, jobs, [&](std::size_t t) {
    Rng rng = Rng::stream(seed, t);
    const bool sparse = t % 4 == 3;
    const auto draw = [&] {
      std::vector<double> v(dim);
      double total = 0.0;
      for (auto& x : v) {
        x = (sparse && rng.uniform() < 0.5) ? 0.0 : rng.exponential();
        total += x;
      }
      if (total == 0.0) {
        v[rng.below(dim)] = 1.0;
        total = 1.0;
      }
      for (auto& x : v) x /= total;
      return v;
    };
    const auto p = draw();
    const auto q = draw();
    slack[t] = check_pinsker(p, q).slack;
  });
  VerifyReport r{"pinsker_chain", trials, dim, seed, 0, std::numeric_limits<double>::infinity(),
                 kPinskerTolerance};
  for (double s : slack) {
    if (s + kPinskerTolerance < 0.0) ++r.violations;
    r.min_slack = std::min(r.min_slack, s);
  }
  return r;
}

}  // namespace instab

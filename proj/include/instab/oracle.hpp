#pragma once

// Literal-definition reference implementations used for differential testing.
// They share no code path with the production metrics and kernels: AUC by
// pair counting, Spearman via quadratic midranks, JSD through two separate KL
// sums over a map-merged support.

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "instab/trace_model.hpp"

namespace instab::oracle {

inline std::optional<double> auc(std::span<const double> scores, const std::vector<bool>& correct) {
  double credit = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (correct[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (!correct[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        credit += 1.0;
      } else if (scores[i] == scores[j]) {
        credit += 0.5;
      }
    }
  }
  if (pairs == 0.0) return std::nullopt;
  return credit / pairs;
}

inline std::vector<double> quadratic_midranks(std::span<const double> xs) {
  std::vector<double> r(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double less = 0.0, equal = 0.0;
    for (double y : xs) {
      if (y < xs[i]) less += 1.0;
      if (y == xs[i]) equal += 1.0;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline std::optional<double> spearman(std::span<const double> scores, const std::vector<bool>& correct) {
  const std::size_t n = scores.size();
  if (n < 2) return std::nullopt;
  std::vector<double> enc(n);
  for (std::size_t i = 0; i < n; ++i) enc[i] = correct[i] ? 1.0 : 0.0;
  const auto a = quadratic_midranks(scores);
  const auto b = quadratic_midranks(enc);
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0 || vb == 0) return std::nullopt;
  return static_cast<double>(cov / std::sqrt(va * vb));
}

inline double entropy(std::span<const double> probs) {
  long double h = 0;
  for (double p : probs) {
    if (p > 0) h -= p * std::log(static_cast<long double>(p));
  }
  return static_cast<double>(h);
}

inline double kl(std::span<const double> p, std::span<const double> q) {
  long double d = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) d += p[i] * (std::log(static_cast<long double>(p[i])) - std::log(static_cast<long double>(q[i])));
  }
  return static_cast<double>(d);
}

inline double jsd_dense(std::span<const double> p, std::span<const double> q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = (p[i] + q[i]) / 2.0;
  return 0.5 * kl(p, m) + 0.5 * kl(q, m);
}

// JSD between two sparse distributions keyed by token id.
inline double jsd(const StepDistribution& p, const StepDistribution& q) {
  std::map<TokenId, std::pair<double, double>> merged;
  for (std::size_t i = 0; i < p.size(); ++i) merged[p.support[i]].first = p.probs[i];
  for (std::size_t i = 0; i < q.size(); ++i) merged[q.support[i]].second = q.probs[i];
  std::vector<double> a, b;
  for (const auto& [id, pr] : merged) {
    a.push_back(pr.first);
    b.push_back(pr.second);
  }
  return jsd_dense(a, b);
}

}  // namespace instab::oracle

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "instab/oracle.hpp"
#include "instab/rng.hpp"
#include "instab/signal.hpp"
#include "test_util.hpp"

using namespace instab;
using instab::testing::dist;
using instab::testing::make_trace;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t m, bool sparse = false) {
  std::vector<double> p(m);
  double total = 0;
  for (auto& x : p) {
    x = sparse && rng.uniform() < 0.3 ? 0.0 : rng.exponential();
    total += x;
  }
  if (total == 0) {
    p[0] = 1.0;
    return p;
  }
  for (auto& x : p) x /= total;
  return p;
}

// Smallest eigenvalue of diag(p) - pp^T after discarding the null direction.
double eigen_curvature(const std::vector<double>& p) {
  const auto m = static_cast<Eigen::Index>(p.size());
  Eigen::VectorXd v(m);
  for (Eigen::Index i = 0; i < m; ++i) v(i) = p[static_cast<std::size_t>(i)];
  Eigen::MatrixXd J = Eigen::MatrixXd(v.asDiagonal()) - v * v.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double tol = 1e-10 * J.trace();
  // The all-ones null direction yields one eigenvalue near zero.
  Eigen::Index null_at = 0;
  for (Eigen::Index i = 1; i < m; ++i) {
    if (std::abs(ev(i)) < std::abs(ev(null_at))) null_at = i;
  }
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m; ++i) {
    if (i == null_at) continue;
    best = std::min(best, ev(i) < tol ? 0.0 : ev(i));
  }
  return best;
}

}  // namespace

TEST(Entropy, KnownValues) {
  EXPECT_DOUBLE_EQ(entropy(std::vector<double>{1.0}), 0.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.5, 0.5}), kLn2, 1e-15);
  EXPECT_NEAR(entropy(std::vector<double>{0.75, 0.25}), 0.5623351446188083, 1e-15);
  EXPECT_NEAR(entropy(std::vector<double>(8, 0.125)), std::log(8.0), 1e-14);
}

TEST(Entropy, ZeroEntriesIgnored) {
  EXPECT_EQ(entropy(std::vector<double>{0.5, 0.0, 0.5}), entropy(std::vector<double>{0.5, 0.5}));
}

TEST(Entropy, MatchesOracleAndBounds) {
  Rng rng(5);
  for (int n = 0; n < 1000; ++n) {
    const auto m = 1 + rng.below(60);
    const auto p = random_simplex(rng, m, n % 2);
    const double h = entropy(p);
    EXPECT_NEAR(h, oracle::entropy(p), 1e-12);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(static_cast<double>(m)) + 1e-12);
  }
}

TEST(Jsd, KnownValues) {
  EXPECT_NEAR(jsd(dist({1, 2}, {0.5, 0.5}), dist({1}, {1.0})), 0.21576155433883565, 1e-15);
  EXPECT_NEAR(jsd(dist({1}, {1.0}), dist({2}, {1.0})), kLn2, 1e-15);
  const auto p = dist({4, 9}, {0.3, 0.7});
  EXPECT_EQ(jsd(p, p), 0.0);
}

TEST(Jsd, SymmetricBoundedAndMatchesOracle) {
  Rng rng(6);
  for (int n = 0; n < 1000; ++n) {
    const auto random_dist = [&] {
      const auto m = 1 + rng.below(15);
      StepDistribution d;
      d.probs = random_simplex(rng, m);
      for (std::size_t i = 0; i < m; ++i) d.support.push_back(static_cast<TokenId>(rng.below(4) + 4 * i));
      return d;
    };
    const auto p = random_dist();
    const auto q = random_dist();
    const double pq = jsd(p, q);
    EXPECT_EQ(pq, jsd(q, p));
    EXPECT_GE(pq, 0.0);
    EXPECT_LE(pq, kLn2);
    EXPECT_NEAR(pq, oracle::jsd(p, q), 1e-12);
  }
}

TEST(Jsd, EpsilonOnlyMatters) {
  const auto p = dist({1, 2}, {0.9, 0.1});
  const auto q = dist({1, 3}, {0.2, 0.8});
  EXPECT_NEAR(jsd(p, q, 1e-12), jsd(p, q), 1e-9);
}

TEST(StepSeries, ThreeStepTrace) {
  const auto tr = make_trace("x", {{{1, 0.6}, {2, 0.3}, {3, 0.1}}, {{1, 0.5}, {2, 0.25}, {4, 0.25}}, {{5, 1.0}}});
  const auto s = step_series(tr);
  ASSERT_EQ(s.length(), 3u);
  EXPECT_NEAR(s.H[0], 0.8979457248567797, 1e-14);
  EXPECT_NEAR(s.H[1], 1.0397207708399179, 1e-14);
  EXPECT_EQ(s.H[2], 0.0);
  EXPECT_EQ(s.D[0], 0.0);
  EXPECT_NEAR(s.D[1], 0.12471455881670196, 1e-14);
  EXPECT_NEAR(s.D[2], kLn2, 1e-15);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(s.I[t], s.D[t] + s.H[t]);
  EXPECT_FALSE(s.k_clamped);
}

TEST(StepSeries, LambdaZeroIsPureDivergence) {
  const auto tr = make_trace("x", {{{1, 0.6}, {2, 0.4}}, {{1, 0.1}, {3, 0.9}}, {{3, 0.5}, {1, 0.5}}});
  const auto s = step_series(tr, 0.0);
  EXPECT_EQ(s.I, s.D);
}

TEST(StepSeries, NegativeLambdaRejected) {
  const auto tr = make_trace("x", {{{1, 1.0}}});
  EXPECT_THROW(step_series(tr, -0.5), UsageError);
}

TEST(StepSeries, ClampingReportedOnlyForExplicitK) {
  const auto tr = make_trace("x", {{{1, 0.6}, {2, 0.4}}, {{1, 1.0}}});
  EXPECT_FALSE(step_series(tr).k_clamped);
  EXPECT_FALSE(step_series(tr, 1.0, 1).k_clamped);
  EXPECT_TRUE(step_series(tr, 1.0, 2).k_clamped);
}

TEST(StepSeries, TopKTruncationChangesEntropy) {
  const auto tr = make_trace("x", {{{1, 0.6}, {2, 0.2}, {3, 0.1}}});
  EXPECT_NEAR(step_series(tr, 1.0, 2).H[0], 0.5623351446188083, 1e-15);
  EXPECT_EQ(step_series(tr, 1.0, 1).H[0], 0.0);
}

TEST(Curvature, KnownValues) {
  EXPECT_EQ(curvature_proxy(std::vector<double>{1.0}), 0.0);
  EXPECT_NEAR(curvature_proxy(std::vector<double>{0.5, 0.5}), 0.5, 1e-15);
  // two entries: the single non-null eigenvalue is the trace, 2 p1 p2
  EXPECT_NEAR(curvature_proxy(std::vector<double>{1 - 1e-9, 1e-9}), 2 * (1 - 1e-9) * 1e-9, 1e-22);
  EXPECT_NEAR(curvature_proxy(std::vector<double>(4, 0.25)), 0.25, 1e-15);
  EXPECT_NEAR(curvature_proxy(std::vector<double>{0.7, 0.2, 0.1}), 0.125596935, 1e-9);
}

TEST(Curvature, ZeroPaddedEntryGivesZero) {
  EXPECT_EQ(curvature_proxy(std::vector<double>{0.5, 0.5, 0.0}), 0.0);
}

TEST(Curvature, MatchesDenseEigensolver) {
  Rng rng(7);
  for (int n = 0; n < 500; ++n) {
    const auto p = random_simplex(rng, 2 + rng.below(40));
    const double c = curvature_proxy(p);
    EXPECT_NEAR(c, eigen_curvature(p), 1e-12) << "n=" << n;
  }
}

TEST(Curvature, InterlacingAndRayleighBounds) {
  Rng rng(8);
  for (int n = 0; n < 1000; ++n) {
    const auto m = 2 + rng.below(30);
    auto p = random_simplex(rng, m);
    const double c = curvature_proxy(p);
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_GE(c, sorted[0]);
    EXPECT_LE(c, sorted[1]);
    // Rayleigh quotient on the projected coordinate vector e_i - 1/m.
    double bound = std::numeric_limits<double>::infinity();
    const double md = static_cast<double>(m);
    for (double x : p) bound = std::min(bound, x * (1 - x) * md / (md - 1));
    EXPECT_LE(c, bound * (1 + 1e-12));
  }
}

TEST(Curvature, SeriesCarriesKappa) {
  const auto tr = make_trace("x", {{{1, 0.5}, {2, 0.5}}, {{1, 1.0}}});
  const auto s = step_series(tr, 1.0, kAllLogged, true);
  ASSERT_TRUE(s.kappa.has_value());
  EXPECT_NEAR((*s.kappa)[0], 0.5, 1e-15);
  EXPECT_EQ((*s.kappa)[1], 0.0);
  EXPECT_FALSE(step_series(tr).kappa.has_value());
}

TEST(Summarize, PeakTimingAndWindows) {
  const auto tr = make_trace("x", {{{1, 0.6}, {2, 0.3}, {3, 0.1}}, {{1, 0.5}, {2, 0.25}, {4, 0.25}}, {{5, 1.0}}});
  const auto s = step_series(tr);
  const auto d = summarize(tr, s, {{1, 2, 10}, 10, 50});
  // I = [0.898, 1.164, 0.693]
  EXPECT_EQ(d.T, 3u);
  EXPECT_EQ(d.t_star, 2u);
  EXPECT_NEAR(d.rho, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(d.t_star_50, 2u);
  EXPECT_NEAR(d.rho_50, 2.0 / 50.0, 1e-15);
  EXPECT_EQ(d.S, s.I[1]);
  EXPECT_EQ(d.window_strength(1), s.I[0]);
  EXPECT_EQ(d.window_strength(2), s.I[1]);
  EXPECT_EQ(d.window_strength(10), d.S);
  EXPECT_THROW(d.window_strength(20), UsageError);
}

TEST(Summarize, ProbesAtPeak) {
  const auto tr = make_trace("x", {{{1, 0.6}, {2, 0.3}, {3, 0.1}}, {{1, 0.5}, {2, 0.25}, {4, 0.25}}, {{5, 1.0}}});
  const auto d = summarize(tr, step_series(tr));
  EXPECT_NEAR(*d.margin_at_peak, std::log(2.0), 1e-15);
  EXPECT_NEAR(*d.margin_before, std::log(2.0), 1e-15);
  EXPECT_NEAR(*d.margin_drop, 0.0, 1e-15);
  EXPECT_NEAR(d.jaccard_overlap, 0.5, 1e-15);  // {1,2,4} vs {1,2,3}
  EXPECT_NEAR(d.turnover, 0.5, 1e-15);
  EXPECT_FALSE(d.peak_at_first_step);
}

TEST(Summarize, TiesTakeEarliestStep) {
  const auto tr = make_trace("x", {{{1, 0.5}, {2, 0.5}}, {{1, 0.5}, {2, 0.5}}});
  const auto d = summarize(tr, step_series(tr));
  EXPECT_EQ(d.t_star, 1u);
  EXPECT_TRUE(d.peak_at_first_step);
  EXPECT_EQ(*d.margin_drop, 0.0);
  EXPECT_EQ(d.jaccard_overlap, 1.0);
  EXPECT_FALSE(d.margin_before.has_value());
}

TEST(Summarize, SingleTokenPeakHasNullMargin) {
  const auto tr = make_trace("x", {{{1, 0.9}, {2, 0.1}}, {{3, 1.0}}});
  const auto d = summarize(tr, step_series(tr));
  EXPECT_EQ(d.t_star, 2u);
  EXPECT_FALSE(d.margin_at_peak.has_value());
  EXPECT_FALSE(d.margin_drop.has_value());
  EXPECT_TRUE(d.margin_before.has_value());
  EXPECT_EQ(d.jaccard_overlap, 0.0);
}

TEST(Summarize, WindowMonotoneAndBoundedByS) {
  Rng rng(9);
  for (int n = 0; n < 200; ++n) {
    std::vector<instab::testing::Step> steps(1 + rng.below(150));
    for (auto& st : steps) {
      const auto p = random_simplex(rng, 1 + rng.below(8));
      for (std::size_t i = 0; i < p.size(); ++i) st.emplace_back(static_cast<TokenId>(rng.below(3) * 10 + i), std::max(p[i], 1e-12));
    }
    const auto tr = make_trace("r", steps);
    const auto d = summarize(tr, step_series(tr));
    double prev = -1;
    for (const auto& [w, v] : d.S_w) {
      EXPECT_GE(v, prev);
      EXPECT_LE(v, d.S);
      if (w >= d.T) EXPECT_EQ(v, d.S);
      prev = v;
    }
    EXPECT_GE(d.rho, 1.0 / static_cast<double>(d.T));
    EXPECT_LE(d.rho, 1.0);
  }
}

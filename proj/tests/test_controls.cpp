#include <algorithm>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "instab/controls.hpp"
#include "instab/rng.hpp"
#include "test_util.hpp"

using namespace instab;
using instab::testing::make_trace;
using instab::testing::Step;

namespace {

std::vector<TraceRecord> random_corpus(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<TraceRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Step> steps(2 + rng.below(70));
    for (auto& st : steps) {
      const auto k = 1 + rng.below(12);
      double total = 0;
      std::vector<double> w(k);
      for (auto& x : w) total += (x = rng.exponential() + 1e-3);
      for (std::size_t j = 0; j < k; ++j) st.emplace_back(static_cast<TokenId>(rng.below(4) * 20 + j), w[j] / total * 0.9);
    }
    out.push_back(make_trace("t" + std::to_string(i), steps, rng.uniform() < 0.6));
  }
  return out;
}

}  // namespace

TEST(IdPermutation, DeterministicPerIdAndSeed) {
  EXPECT_EQ(id_permutation(30, "abc"), id_permutation(30, "abc"));
  EXPECT_NE(id_permutation(30, "abc"), id_permutation(30, "abd"));
  EXPECT_NE(id_permutation(30, "abc", 0), id_permutation(30, "abc", 1));
  auto p = id_permutation(30, "abc");
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(p[i], i);
}

TEST(ShuffleSeries, PreservesMultisetAndMarksStale) {
  const auto corpus = random_corpus(1, 20);
  for (const auto& tr : corpus) {
    const auto s = step_series(tr);
    const auto sh = shuffle_series(s, tr.id);
    auto a = s.I, b = sh.I;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_EQ(sh.H, s.H);
    EXPECT_TRUE(sh.hd_stale);
    EXPECT_THROW(baseline_statistic(sh, BaselineKind::SH), UsageError);
  }
}

TEST(ShuffleSeries, FullTraceStatisticsBitIdentical) {
  const auto corpus = random_corpus(2, 60);
  ControlSpec spec;
  spec.kind = ControlKind::shuffle_i;
  spec.window = std::nullopt;
  const auto rows = run_control(corpus, spec);
  ASSERT_EQ(rows.size(), 2u);
  const auto& a = rows[0].report;
  const auto& b = rows[1].report;
  EXPECT_EQ(rows[1].setting, "shuffle {I_t}");
  EXPECT_EQ(a.auc_wrong, b.auc_wrong);
  EXPECT_EQ(a.spearman, b.spearman);
  ASSERT_EQ(a.buckets.size(), b.buckets.size());
  for (std::size_t i = 0; i < a.buckets.size(); ++i) EXPECT_EQ(a.buckets[i].accuracy, b.buckets[i].accuracy);
}

TEST(ShuffleSteps, RecomputesDivergenceKeepsEntropyMultiset) {
  const auto corpus = random_corpus(3, 10);
  for (const auto& tr : corpus) {
    const auto sh = shuffle_steps(tr, 5);
    EXPECT_EQ(sh.steps.size(), tr.steps.size());
    auto a = step_series(tr).H, b = step_series(sh).H;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    EXPECT_EQ(step_series(sh).D[0], 0.0);
  }
}

TEST(Baselines, HandComputed) {
  const auto tr = make_trace("x", {{{1, 0.5}, {2, 0.5}}, {{1, 1.0}}, {{3, 0.75}, {4, 0.25}}});
  const auto s = step_series(tr);
  EXPECT_NEAR(baseline_statistic(s, BaselineKind::SH), kLn2, 1e-15);
  EXPECT_NEAR(baseline_statistic(s, BaselineKind::SdH), kLn2, 1e-15);
  EXPECT_NEAR(baseline_statistic(s, BaselineKind::SD), kLn2, 1e-15);
  EXPECT_NEAR(baseline_statistic(s, BaselineKind::SdH, 1), 0.0, 0.0);
  EXPECT_NEAR(baseline_statistic(s, BaselineKind::SD, 1), 0.0, 0.0);
}

TEST(Baselines, RowsAndNames) {
  const auto corpus = random_corpus(4, 30);
  ControlSpec spec;
  spec.kind = ControlKind::baseline_SdH;
  const auto rows = run_control(corpus, spec);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].setting, "S_I");
  EXPECT_EQ(rows[1].setting, "S_dH");
  EXPECT_EQ(rows[2].report.statistic, "S_50");
  EXPECT_EQ(rows[3].report.statistic, "S_dH@50");
}

TEST(ControlKinds, ParseRoundTrip) {
  for (const auto& [kind, name] : control_kind_names()) EXPECT_EQ(parse_control_kind(name), kind);
  EXPECT_THROW(parse_control_kind("nope"), UsageError);
}

TEST(ControlSpec, Validation) {
  ControlSpec s;
  s.kind = ControlKind::lambda_ablation;
  EXPECT_THROW(s.validate(), UsageError);
  s.lambdas = {0, -1};
  EXPECT_THROW(s.validate(), UsageError);
  s.kind = ControlKind::topk_sweep;
  s.ks = {0};
  EXPECT_THROW(s.validate(), UsageError);
  s.kind = ControlKind::window_sweep;
  EXPECT_THROW(s.validate(), UsageError);
  s.ws = {10};
  EXPECT_NO_THROW(s.validate());
}

TEST(LambdaAblation, ZeroLambdaScoresAreDivergenceMaxima) {
  const auto corpus = random_corpus(5, 40);
  const auto s0 = corpus_strength(corpus, SeriesOptions{0.0}, std::nullopt);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto s = step_series(corpus[i], 0.0);
    EXPECT_EQ(s0[i], baseline_statistic(s, BaselineKind::SD));
  }
  const auto rows = lambda_ablation(corpus, {0.0, 0.5, 1.0});
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].setting, "lambda=0");
  EXPECT_EQ(rows[2].setting, "lambda=0.5");
  EXPECT_EQ(rows[4].setting, "lambda=1");
}

TEST(TopkSweep, RecomputesFromRawLogprobs) {
  const auto corpus = random_corpus(6, 40);
  const auto rows = topk_sweep(corpus, {1, 5, 50});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].setting, "k=1");
  // k=1 turns every step into a point mass: H = 0 and I = D.
  const auto s1 = corpus_strength(corpus, SeriesOptions{1.0, 1}, std::nullopt);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto s = step_series(corpus[i], 1.0, 1);
    for (double h : s.H) EXPECT_EQ(h, 0.0);
    EXPECT_EQ(s1[i], *std::max_element(s.D.begin(), s.D.end()));
  }
}

TEST(WindowSweep, MonotoneInWindow) {
  const auto corpus = random_corpus(7, 50);
  const std::vector<std::size_t> ws{1, 5, 10, 20, 50, 100};
  std::vector<std::vector<double>> per_w;
  for (auto w : ws) per_w.push_back(corpus_strength(corpus, {}, w));
  const auto full = corpus_strength(corpus, {}, std::nullopt);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t j = 1; j < ws.size(); ++j) EXPECT_LE(per_w[j - 1][i], per_w[j][i]);
    EXPECT_LE(per_w.back()[i], full[i]);
  }
  const auto rows = window_sweep(corpus, ws);
  ASSERT_EQ(rows.size(), ws.size());
  EXPECT_EQ(rows[2].setting, "w=10");
}

TEST(Controls, JobCountDoesNotChangeResults) {
  const auto corpus = random_corpus(8, 40);
  ControlSpec spec;
  spec.kind = ControlKind::shuffle_p;
  ControlOptions one, four;
  four.jobs = 4;
  const auto a = run_control(corpus, spec, one);
  const auto b = run_control(corpus, spec, four);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].report.auc_wrong, b[i].report.auc_wrong);
    EXPECT_EQ(a[i].report.spearman, b[i].report.spearman);
  }
}

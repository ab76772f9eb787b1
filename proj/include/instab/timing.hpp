#pragma once

// Peak-timing analysis: early/middle/late classification of the relative peak
// position, threshold sweeps, equal-width position bins and the failure-mode
// breakdown of wrong traces.

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/metrics.hpp"
#include "instab/signal.hpp"

namespace instab {

inline constexpr double kDefaultEarly = 0.25;
inline constexpr double kDefaultLate = 0.5;
inline const std::vector<double> kSweepEarly{0.20, 0.25, 0.30};
inline const std::vector<double> kSweepLate{0.45, 0.50, 0.60};

enum class PeakScheme { rho, rho50 };
enum class PeakClass { early, middle, late };

inline std::string to_string(PeakScheme s) { return s == PeakScheme::rho ? "rho" : "rho50"; }
inline std::string to_string(PeakClass c) {
  switch (c) {
    case PeakClass::early: return "early";
    case PeakClass::middle: return "middle";
    case PeakClass::late: return "late";
  }
  return "?";
}

inline double peak_position(const TraceDiagnostics& d, PeakScheme s) {
  return s == PeakScheme::rho ? d.rho : d.rho_50;
}

// Strict inequalities on both sides; middle is the closed remainder.
inline PeakClass classify(double position, double early, double late) {
  if (position < early) return PeakClass::early;
  if (position > late) return PeakClass::late;
  return PeakClass::middle;
}

struct ClassRow {
  PeakClass cls = PeakClass::early;
  std::size_t n = 0;
  double share = 0.0;
  std::optional<double> accuracy;  // null for an empty class
};

struct TimingReport {
  PeakScheme scheme = PeakScheme::rho;
  double early = kDefaultEarly;
  double late = kDefaultLate;
  std::vector<PeakClass> classes;  // one per trace, input order
  std::array<ClassRow, 3> table{};
};

inline void check_thresholds(double early, double late) {
  if (!(early > 0.0 && late < 1.0)) throw UsageError("thresholds must satisfy 0 < early and late < 1");
  if (early > late) throw UsageError("early threshold exceeds late threshold");
}

inline TimingReport classify_peaks(const std::vector<TraceDiagnostics>& diags, double early = kDefaultEarly,
                                   double late = kDefaultLate, PeakScheme scheme = PeakScheme::rho) {
  check_thresholds(early, late);
  TimingReport r;
  r.scheme = scheme;
  r.early = early;
  r.late = late;
  std::array<std::size_t, 3> hits{};
  for (std::size_t c = 0; c < 3; ++c) r.table[c].cls = static_cast<PeakClass>(c);
  r.classes.reserve(diags.size());
  for (const auto& d : diags) {
    const PeakClass c = classify(peak_position(d, scheme), early, late);
    r.classes.push_back(c);
    auto& row = r.table[static_cast<std::size_t>(c)];
    ++row.n;
    hits[static_cast<std::size_t>(c)] += d.correct ? 1 : 0;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    auto& row = r.table[c];
    row.share = diags.empty() ? 0.0 : static_cast<double>(row.n) / static_cast<double>(diags.size());
    if (row.n > 0) row.accuracy = static_cast<double>(hits[c]) / static_cast<double>(row.n);
  }
  return r;
}

struct SweepRow {
  double early = 0.0;
  double late = 0.0;
  std::size_t n_early = 0;
  std::optional<double> acc_early;
  std::size_t n_late = 0;
  std::optional<double> acc_late;
  std::optional<double> gap;  // acc_early - acc_late
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;  // skipped threshold pairs
};

inline SweepResult threshold_sweep(const std::vector<TraceDiagnostics>& diags,
                                   const std::vector<double>& early_list = kSweepEarly,
                                   const std::vector<double>& late_list = kSweepLate,
                                   PeakScheme scheme = PeakScheme::rho) {
  if (early_list.empty() || late_list.empty()) throw UsageError("threshold lists must be nonempty");
  SweepResult out;
  for (double e : early_list) {
    for (double l : late_list) {
      try {
        check_thresholds(e, l);
      } catch (const UsageError& err) {
        out.warnings.push_back("skipping early=" + std::to_string(e) + " late=" + std::to_string(l) +
                               ": " + err.what());
        continue;
      }
      const auto rep = classify_peaks(diags, e, l, scheme);
      SweepRow row;
      row.early = e;
      row.late = l;
      row.n_early = rep.table[0].n;
      row.acc_early = rep.table[0].accuracy;
      row.n_late = rep.table[2].n;
      row.acc_late = rep.table[2].accuracy;
      if (row.acc_early && row.acc_late) row.gap = *row.acc_early - *row.acc_late;
      out.rows.push_back(row);
    }
  }
  return out;
}

struct BinRow {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
  std::optional<double> accuracy;  // null for an empty bin
};

// Bins [i/n, (i+1)/n), last bin closed at 1. Bin membership is computed in
// integer arithmetic from the peak step and the denominator of the position.
inline std::vector<BinRow> rho_bins(const std::vector<TraceDiagnostics>& diags, std::size_t n_bins = 10,
                                    PeakScheme scheme = PeakScheme::rho,
                                    std::size_t fixed_window = kFixedWindow) {
  if (n_bins < 1) throw UsageError("n_bins must be >= 1");
  std::vector<BinRow> bins(n_bins);
  std::vector<std::size_t> hits(n_bins, 0);
  for (std::size_t i = 0; i < n_bins; ++i) {
    bins[i].lo = static_cast<double>(i) / static_cast<double>(n_bins);
    bins[i].hi = static_cast<double>(i + 1) / static_cast<double>(n_bins);
  }
  for (const auto& d : diags) {
    const std::size_t num = scheme == PeakScheme::rho ? d.t_star : d.t_star_50;
    const std::size_t den = scheme == PeakScheme::rho ? d.T : fixed_window;
    const std::size_t b = std::min(num * n_bins / den, n_bins - 1);
    ++bins[b].n;
    hits[b] += d.correct ? 1 : 0;
  }
  for (std::size_t i = 0; i < n_bins; ++i) {
    if (bins[i].n > 0) bins[i].accuracy = static_cast<double>(hits[i]) / static_cast<double>(bins[i].n);
  }
  return bins;
}

enum class FailureMode { stable_wrong, early_collapse, unstable_wrong };

inline std::string to_string(FailureMode m) {
  switch (m) {
    case FailureMode::stable_wrong: return "stable_wrong";
    case FailureMode::early_collapse: return "early_collapse";
    case FailureMode::unstable_wrong: return "unstable_wrong";
  }
  return "?";
}

struct FailureModeBreakdown {
  std::size_t stable_wrong = 0;
  std::size_t early_collapse = 0;
  std::size_t unstable_wrong = 0;
  std::vector<std::pair<std::string, FailureMode>> assignments;  // wrong traces, input order
};

// Quintiles are taken within the wrong traces. Stable-wrong (lowest S
// quintile) takes priority over early-collapse (highest S_20 quintile).
inline FailureModeBreakdown failure_modes(const std::vector<TraceDiagnostics>& diags,
                                          std::size_t early_window = 20) {
  std::vector<const TraceDiagnostics*> wrong;
  for (const auto& d : diags) {
    if (!d.correct) wrong.push_back(&d);
  }
  if (wrong.size() < 5) {
    throw DataError("failure-mode quintiles need at least 5 wrong traces (found " +
                    std::to_string(wrong.size()) + ")");
  }
  const std::size_t n = wrong.size();
  std::vector<double> s(n), s_early(n);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = wrong[i]->S;
    s_early[i] = wrong[i]->window_strength(early_window);
    ids[i] = wrong[i]->id;
  }
  const auto sizes = bucket_sizes(n, 5);
  std::vector<FailureMode> mode(n, FailureMode::unstable_wrong);
  const auto by_s = bucket_order(s, ids);
  const auto by_early = bucket_order(s_early, ids);
  for (std::size_t i = n - sizes.back(); i < n; ++i) mode[by_early[i]] = FailureMode::early_collapse;
  for (std::size_t i = 0; i < sizes.front(); ++i) mode[by_s[i]] = FailureMode::stable_wrong;

  FailureModeBreakdown out;
  for (std::size_t i = 0; i < n; ++i) {
    switch (mode[i]) {
      case FailureMode::stable_wrong: ++out.stable_wrong; break;
      case FailureMode::early_collapse: ++out.early_collapse; break;
      case FailureMode::unstable_wrong: ++out.unstable_wrong; break;
    }
    out.assignments.emplace_back(ids[i], mode[i]);
  }
  return out;
}

}  // namespace instab

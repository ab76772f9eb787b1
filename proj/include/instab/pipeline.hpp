#pragma once

// Corpus analysis: per-trace series and diagnostics, and score extraction for
// the strength statistics evaluated downstream.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/metrics.hpp"
#include "instab/parallel.hpp"
#include "instab/signal.hpp"
#include "instab/trace_model.hpp"

namespace instab {

struct AnalysisOptions {
  SeriesOptions series;
  SummaryOptions summary;
  std::size_t jobs = 1;
  bool keep_series = false;
};

struct CorpusAnalysis {
  std::vector<TraceDiagnostics> diagnostics;  // input order
  std::vector<StepSeries> series;             // filled when keep_series
  bool k_clamped = false;
};

inline CorpusAnalysis analyze_corpus(const std::vector<TraceRecord>& traces,
                                     const AnalysisOptions& opts = {}) {
  CorpusAnalysis out;
  out.diagnostics.resize(traces.size());
  std::vector<StepSeries> series(traces.size());
  parallel_for(traces.size(), opts.jobs, [&](std::size_t i) {
    series[i] = step_series(traces[i], opts.series);
    out.diagnostics[i] = summarize(traces[i], series[i], opts.summary);
  });
  for (const auto& s : series) out.k_clamped = out.k_clamped || s.k_clamped;
  if (opts.keep_series) out.series = std::move(series);
  return out;
}

// A strength statistic: the full-trace maximum S, or a window maximum S_w.
struct Strength {
  std::size_t window = 0;  // 0 selects S

  static Strength full() { return {}; }
  static Strength windowed(std::size_t w) { return {w}; }

  static Strength parse(const std::string& name) {
    if (name == "S") return full();
    if (name.rfind("S_", 0) == 0 && name.size() > 2) {
      try {
        std::size_t used = 0;
        const auto w = std::stoul(name.substr(2), &used);
        if (used == name.size() - 2 && w > 0) return windowed(w);
      } catch (const std::exception&) {
      }
    }
    throw UsageError("unknown strength statistic '" + name + "' (expected S or S_<w>)");
  }

  std::string name() const { return window == 0 ? "S" : "S_" + std::to_string(window); }
};

inline std::vector<double> strength_scores(const std::vector<TraceDiagnostics>& diags, Strength s) {
  std::vector<double> out;
  out.reserve(diags.size());
  for (const auto& d : diags) out.push_back(s.window == 0 ? d.S : d.window_strength(s.window));
  return out;
}

inline std::vector<bool> labels_of(const std::vector<TraceDiagnostics>& diags) {
  std::vector<bool> out;
  out.reserve(diags.size());
  for (const auto& d : diags) out.push_back(d.correct);
  return out;
}

inline std::vector<std::string> ids_of(const std::vector<TraceDiagnostics>& diags) {
  std::vector<std::string> out;
  out.reserve(diags.size());
  for (const auto& d : diags) out.push_back(d.id);
  return out;
}

inline EvalReport evaluate_strength(const std::vector<TraceDiagnostics>& diags, Strength s,
                                    const EvalOptions& opts = {}) {
  const auto scores = strength_scores(diags, s);
  const auto correct = labels_of(diags);
  const auto ids = ids_of(diags);
  return evaluate(scores, correct, ids, opts, s.name());
}

}  // namespace instab

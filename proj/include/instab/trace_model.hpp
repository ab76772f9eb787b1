#pragma once

// Trace data model: logged top-k steps, renormalized step distributions and
// union-support alignment of two distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "instab/error.hpp"
#include "instab/numeric.hpp"

namespace instab {

using TokenId = std::int64_t;

inline constexpr std::size_t kDefaultLoggedK = 50;
inline constexpr std::size_t kDefaultMaxNewTokens = 128;

struct TokenEntry {
  TokenId token_id = 0;
  double logprob = 0.0;  // natural log under the model's full distribution

  friend bool operator==(const TokenEntry&, const TokenEntry&) = default;
};

// Canonical order: logprob descending, then token_id ascending.
inline bool canonical_less(const TokenEntry& a, const TokenEntry& b) noexcept {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.token_id < b.token_id;
}

struct StepRecord {
  std::vector<TokenEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct Decoding {
  double temperature = 0.0;
  double top_p = 1.0;
  std::int64_t seed = 0;

  friend bool operator==(const Decoding&, const Decoding&) = default;
};

struct Label {
  bool correct = false;
  std::optional<std::string> predicted;  // null when no answer could be extracted
  std::string reference;

  friend bool operator==(const Label&, const Label&) = default;
};

struct TraceRecord {
  std::string id;
  std::string dataset;
  std::string model;
  Decoding decoding;
  std::vector<StepRecord> steps;
  Label label;
  std::optional<std::string> output_text;

  std::size_t length() const noexcept { return steps.size(); }
  std::size_t logged_k() const noexcept {
    std::size_t k = 0;
    for (const auto& s : steps) k = std::max(k, s.size());
    return k;
  }
  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

// Renormalized probability vector over a step's retained support.
struct StepDistribution {
  std::vector<TokenId> support;
  std::vector<double> probs;

  std::size_t size() const noexcept { return support.size(); }
};

inline void canonicalize(StepRecord& step) {
  std::stable_sort(step.entries.begin(), step.entries.end(), canonical_less);
}

// Throws DataError naming the trace, step (1-based) and offending field.
inline void validate_step(const StepRecord& step, const std::string& trace_id,
                          std::size_t t) {
  const auto where = [&] {
    return " at trace " + trace_id + " step " + std::to_string(t + 1);
  };
  if (step.entries.empty()) throw DataError("empty top-k list" + where(), std::nullopt, trace_id);
  std::vector<TokenId> ids;
  ids.reserve(step.entries.size());
  for (const auto& e : step.entries) {
    if (!std::isfinite(e.logprob)) {
      throw DataError("non-finite logprob" + where(), std::nullopt, trace_id);
    }
    if (e.logprob > 0.0) throw DataError("logprob > 0" + where(), std::nullopt, trace_id);
    if (e.token_id < 0) throw DataError("token_id < 0" + where(), std::nullopt, trace_id);
    ids.push_back(e.token_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("duplicate token_id" + where(), std::nullopt, trace_id);
  }
  if (!std::is_sorted(step.entries.begin(), step.entries.end(), canonical_less)) {
    throw DataError("entries not in canonical order" + where(), std::nullopt, trace_id);
  }
}

inline void validate_trace(const TraceRecord& trace,
                           std::size_t max_steps = kDefaultMaxNewTokens) {
  if (trace.id.empty()) throw DataError("trace id is empty");
  if (trace.steps.empty()) {
    throw DataError("steps is empty at trace " + trace.id, std::nullopt, trace.id);
  }
  if (max_steps != 0 && trace.steps.size() > max_steps) {
    throw DataError("steps length " + std::to_string(trace.steps.size()) + " exceeds max " +
                        std::to_string(max_steps) + " at trace " + trace.id,
                    std::nullopt, trace.id);
  }
  const auto& d = trace.decoding;
  if (!(d.temperature >= 0.0) || !std::isfinite(d.temperature)) {
    throw DataError("decoding.temperature < 0 at trace " + trace.id, std::nullopt, trace.id);
  }
  if (!(d.top_p > 0.0 && d.top_p <= 1.0)) {
    throw DataError("decoding.top_p outside (0,1] at trace " + trace.id, std::nullopt, trace.id);
  }
  for (std::size_t t = 0; t < trace.steps.size(); ++t) validate_step(trace.steps[t], trace.id, t);
}

// Keeps the first effective_k entries (clamped to the logged length) and
// renormalizes exp(logprob) over them.
inline StepDistribution renormalize(const StepRecord& step, std::size_t effective_k) {
  if (effective_k < 1) throw UsageError("effective_k must be >= 1");
  if (step.entries.empty()) throw DataError("cannot renormalize an empty step");
  const std::size_t k = std::min(effective_k, step.entries.size());
  StepDistribution out;
  out.support.resize(k);
  out.probs.resize(k);
  // Entries are sorted, so entries[0] carries the largest logprob.
  const double shift = step.entries.front().logprob;
  CompensatedSum total;
  for (std::size_t i = 0; i < k; ++i) {
    out.support[i] = step.entries[i].token_id;
    out.probs[i] = std::exp(step.entries[i].logprob - shift);
    total.add(out.probs[i]);
  }
  const double z = total.value();
  for (auto& p : out.probs) p /= z;
  return out;
}

inline bool is_clamped(const StepRecord& step, std::size_t effective_k) noexcept {
  return effective_k > step.entries.size();
}

inline void validate_distribution(const StepDistribution& p, double tol = 1e-9) {
  if (p.support.empty() || p.support.size() != p.probs.size()) {
    throw DataError("distribution support/probs size mismatch or empty");
  }
  CompensatedSum s;
  for (double x : p.probs) {
    if (!(x > 0.0 && x <= 1.0)) throw DataError("distribution probability outside (0,1]");
    s.add(x);
  }
  if (std::abs(s.value() - 1.0) > tol) throw DataError("distribution does not sum to 1");
  std::vector<TokenId> ids = p.support;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw DataError("distribution support has duplicate tokens");
  }
}

struct AlignedPair {
  std::vector<double> p;
  std::vector<double> q;
  std::vector<TokenId> support;  // sorted ascending union
};

// Zero-pads both distributions onto the sorted union of their supports.
inline AlignedPair align_union(const StepDistribution& p, const StepDistribution& q) {
  using Item = std::pair<TokenId, double>;
  const auto sorted_items = [](const StepDistribution& d) {
    std::vector<Item> v(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) v[i] = {d.support[i], d.probs[i]};
    std::sort(v.begin(), v.end(), [](const Item& a, const Item& b) { return a.first < b.first; });
    return v;
  };
  const auto a = sorted_items(p);
  const auto b = sorted_items(q);
  AlignedPair out;
  out.support.reserve(a.size() + b.size());
  out.p.reserve(a.size() + b.size());
  out.q.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
      out.support.push_back(a[i].first);
      out.p.push_back(a[i++].second);
      out.q.push_back(0.0);
    } else if (i == a.size() || b[j].first < a[i].first) {
      out.support.push_back(b[j].first);
      out.p.push_back(0.0);
      out.q.push_back(b[j++].second);
    } else {
      out.support.push_back(a[i].first);
      out.p.push_back(a[i++].second);
      out.q.push_back(b[j++].second);
    }
  }
  return out;
}

}  // namespace instab

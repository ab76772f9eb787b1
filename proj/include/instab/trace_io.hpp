#pragma once

// JSONL trace format.
//
// One trace per line, keys in this fixed order when written:
//   {"id","dataset","model","decoding":{"temperature","top_p","seed"},
//    "steps":[[[token_id,logprob],...],...],
//    "label":{"correct","predicted","reference"},"output_text"}
// Reals are written as the shortest decimal that round-trips to the same
// double, which makes serialize(parse(line)) byte-stable.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "instab/error.hpp"
#include "instab/trace_model.hpp"

namespace instab {

struct ParseOptions {
  std::size_t max_steps = kDefaultMaxNewTokens;  // 0 disables the length cap
};

inline std::string format_real(double x) {
  if (!std::isfinite(x)) throw DataError("cannot serialize non-finite real");
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw DataError("real formatting failed");
  return std::string(buf, ptr);
}

inline std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DataError("missing field '" + std::string(key) + "'" + where);
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw DataError("field '" + std::string(key) + "' must be a string" + where);
  return v.get<std::string>();
}

inline double require_number(const nlohmann::json& v, const std::string& field,
                             const std::string& where) {
  if (!v.is_number()) throw DataError("field '" + field + "' must be a number" + where);
  return v.get<double>();
}

}  // namespace detail

// Parses one JSON line into a canonicalized, validated TraceRecord.
inline TraceRecord parse_trace_json(const nlohmann::json& j, const ParseOptions& opts = {}) {
  if (!j.is_object()) throw DataError("trace line is not a JSON object");
  TraceRecord tr;
  tr.id = detail::require_string(j, "id", "");
  const std::string where = " at trace " + tr.id;
  tr.dataset = detail::require_string(j, "dataset", where);
  tr.model = detail::require_string(j, "model", where);

  const auto& dec = detail::require(j, "decoding", where);
  if (!dec.is_object()) throw DataError("field 'decoding' must be an object" + where, {}, tr.id);
  tr.decoding.temperature =
      detail::require_number(detail::require(dec, "temperature", where), "decoding.temperature", where);
  tr.decoding.top_p =
      detail::require_number(detail::require(dec, "top_p", where), "decoding.top_p", where);
  const auto& seed = detail::require(dec, "seed", where);
  if (!seed.is_number_integer()) throw DataError("field 'decoding.seed' must be an integer" + where, {}, tr.id);
  tr.decoding.seed = seed.get<std::int64_t>();

  const auto& steps = detail::require(j, "steps", where);
  if (!steps.is_array()) throw DataError("field 'steps' must be an array" + where, {}, tr.id);
  tr.steps.reserve(steps.size());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& s = steps[t];
    const std::string at = where + " step " + std::to_string(t + 1);
    if (!s.is_array()) throw DataError("steps[" + std::to_string(t) + "] must be an array" + at, {}, tr.id);
    StepRecord step;
    step.entries.reserve(s.size());
    for (const auto& e : s) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number()) {
        throw DataError("step entry must be [token_id:int, logprob:number]" + at, {}, tr.id);
      }
      step.entries.push_back({e[0].get<TokenId>(), e[1].get<double>()});
    }
    canonicalize(step);
    tr.steps.push_back(std::move(step));
  }

  const auto& label = detail::require(j, "label", where);
  if (!label.is_object()) throw DataError("field 'label' must be an object" + where, {}, tr.id);
  const auto& correct = detail::require(label, "correct", where);
  if (!correct.is_boolean()) throw DataError("field 'label.correct' must be a boolean" + where, {}, tr.id);
  tr.label.correct = correct.get<bool>();
  const auto& predicted = detail::require(label, "predicted", where);
  if (predicted.is_string()) {
    tr.label.predicted = predicted.get<std::string>();
  } else if (!predicted.is_null()) {
    throw DataError("field 'label.predicted' must be a string or null" + where, {}, tr.id);
  }
  tr.label.reference = detail::require_string(label, "reference", where);

  if (auto it = j.find("output_text"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError("field 'output_text' must be a string or null" + where, {}, tr.id);
    tr.output_text = it->get<std::string>();
  }

  validate_trace(tr, opts.max_steps);
  return tr;
}

// Streams a JSONL corpus, attaching 1-based line numbers to every error.
class TraceReader {
 public:
  explicit TraceReader(std::istream& in, ParseOptions opts = {}) : in_(in), opts_(opts) {}

  // Returns false at end of input. Blank lines are skipped.
  bool next(TraceRecord& out) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError("malformed JSON on line " + std::to_string(line_no_) + ": " + e.what(),
                        line_no_);
      }
      try {
        out = parse_trace_json(j, opts_);
      } catch (const DataError& e) {
        throw DataError(std::string(e.what()) + " (line " + std::to_string(line_no_) + ")",
                        line_no_, e.trace_id());
      }
      if (!seen_.insert(out.id).second) {
        throw DataError("duplicate trace id " + out.id + " (line " + std::to_string(line_no_) + ")",
                        line_no_, out.id);
      }
      return true;
    }
    return false;
  }

  std::size_t line() const noexcept { return line_no_; }

 private:
  std::istream& in_;
  ParseOptions opts_;
  std::size_t line_no_ = 0;
  std::unordered_set<std::string> seen_;
};

inline std::vector<TraceRecord> parse_trace_stream(std::istream& in, const ParseOptions& opts = {}) {
  std::vector<TraceRecord> out;
  TraceReader reader(in, opts);
  TraceRecord tr;
  while (reader.next(tr)) out.push_back(std::move(tr));
  return out;
}

inline std::vector<TraceRecord> parse_trace_file(const std::string& path,
                                                 const ParseOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file: " + path);
  return parse_trace_stream(in, opts);
}

// Canonical single-line serialization (no trailing newline).
inline std::string serialize_trace(const TraceRecord& tr) {
  std::string s;
  s.reserve(64 + tr.steps.size() * 32 * (tr.logged_k() + 1));
  s += "{\"id\":" + json_string(tr.id);
  s += ",\"dataset\":" + json_string(tr.dataset);
  s += ",\"model\":" + json_string(tr.model);
  s += ",\"decoding\":{\"temperature\":" + format_real(tr.decoding.temperature);
  s += ",\"top_p\":" + format_real(tr.decoding.top_p);
  s += ",\"seed\":" + std::to_string(tr.decoding.seed) + "}";
  s += ",\"steps\":[";
  for (std::size_t t = 0; t < tr.steps.size(); ++t) {
    if (t) s += ',';
    s += '[';
    const auto& entries = tr.steps[t].entries;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (i) s += ',';
      s += '[';
      s += std::to_string(entries[i].token_id);
      s += ',';
      s += format_real(entries[i].logprob);
      s += ']';
    }
    s += ']';
  }
  s += "],\"label\":{\"correct\":";
  s += tr.label.correct ? "true" : "false";
  s += ",\"predicted\":" + (tr.label.predicted ? json_string(*tr.label.predicted) : std::string("null"));
  s += ",\"reference\":" + json_string(tr.label.reference) + "}";
  s += ",\"output_text\":" + (tr.output_text ? json_string(*tr.output_text) : std::string("null"));
  s += '}';
  return s;
}

inline void write_traces(std::ostream& out, const std::vector<TraceRecord>& traces) {
  for (const auto& tr : traces) out << serialize_trace(tr) << '\n';
}

inline void write_trace_file(const std::string& path, const std::vector<TraceRecord>& traces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output file: " + path);
  write_traces(out, traces);
}

}  // namespace instab

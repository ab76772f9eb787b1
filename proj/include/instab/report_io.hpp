#pragma once

// JSON and CSV renderings of diagnostics and reports. Missing (undefined)
// values are JSON null and empty CSV cells. CSV reals use the shortest
// round-trip representation.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "instab/controls.hpp"
#include "instab/metrics.hpp"
#include "instab/signal.hpp"
#include "instab/theory.hpp"
#include "instab/timing.hpp"
#include "instab/trace_io.hpp"

namespace instab {

using ojson = nlohmann::ordered_json;

inline ojson to_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

inline ojson to_json(const std::optional<Interval>& v) {
  return v ? ojson::array({v->lo, v->hi}) : ojson(nullptr);
}

inline ojson to_json(const TraceDiagnostics& d, const StepSeries* series = nullptr) {
  ojson j;
  j["id"] = d.id;
  j["correct"] = d.correct;
  j["T"] = d.T;
  j["S"] = d.S;
  ojson sw = ojson::object();
  for (const auto& [w, v] : d.S_w) sw[std::to_string(w)] = v;
  j["S_w"] = std::move(sw);
  j["t_star"] = d.t_star;
  j["rho"] = d.rho;
  j["t_star_50"] = d.t_star_50;
  j["rho_50"] = d.rho_50;
  j["margin_at_peak"] = to_json(d.margin_at_peak);
  j["margin_before"] = to_json(d.margin_before);
  j["margin_drop"] = to_json(d.margin_drop);
  j["jaccard_overlap"] = d.jaccard_overlap;
  j["turnover"] = d.turnover;
  j["peak_at_first_step"] = d.peak_at_first_step;
  if (d.kappa_at_peak) j["kappa_at_peak"] = *d.kappa_at_peak;
  if (series) {
    ojson s;
    s["H"] = series->H;
    s["D"] = series->D;
    s["I"] = series->I;
    if (series->kappa) s["kappa"] = *series->kappa;
    j["series"] = std::move(s);
  }
  return j;
}

inline ojson to_json(const EvalReport& r) {
  ojson j;
  j["statistic"] = r.statistic;
  j["n"] = r.n;
  j["accuracy"] = to_json(r.accuracy);
  j["auc_wrong"] = to_json(r.auc_wrong);
  j["spearman"] = to_json(r.spearman);
  ojson buckets = ojson::array();
  for (const auto& b : r.buckets) {
    ojson bj;
    bj["bucket"] = b.label;
    bj["n"] = b.n;
    bj["accuracy"] = b.accuracy;
    bj["ci"] = to_json(b.ci);
    buckets.push_back(std::move(bj));
  }
  j["buckets"] = std::move(buckets);
  j["bucket_slope"] = to_json(r.bucket_slope);
  j["auc_ci"] = to_json(r.auc_ci);
  j["bootstrap_discarded"] = r.bootstrap_discarded;
  return j;
}

inline std::string csv_real(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }

// Quotes a CSV field when it contains a separator, quote or newline.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_bucket_csv(std::ostream& out, const EvalReport& r) {
  out << "bucket,n,accuracy,ci_lo,ci_hi\n";
  for (const auto& b : r.buckets) {
    out << b.label << ',' << b.n << ',' << format_real(b.accuracy) << ','
        << (b.ci ? format_real(b.ci->lo) : "") << ',' << (b.ci ? format_real(b.ci->hi) : "") << '\n';
  }
}

inline void write_control_csv(std::ostream& out, const std::string& corpus, const std::vector<ControlRow>& rows) {
  out << "corpus,control,setting,statistic,n,accuracy,auc_wrong,spearman,bucket_slope\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << csv_field(corpus) << ',' << row.control << ',' << csv_field(row.setting) << ',' << csv_field(r.statistic)
        << ',' << r.n << ',' << csv_real(r.accuracy) << ',' << csv_real(r.auc_wrong) << ','
        << csv_real(r.spearman) << ',' << csv_real(r.bucket_slope) << '\n';
  }
}

inline ojson to_json(const std::vector<ControlRow>& rows) {
  ojson arr = ojson::array();
  for (const auto& row : rows) {
    ojson j;
    j["control"] = row.control;
    j["setting"] = row.setting;
    j["report"] = to_json(row.report);
    arr.push_back(std::move(j));
  }
  return arr;
}

inline ojson to_json(const TimingReport& r) {
  ojson j;
  j["scheme"] = to_string(r.scheme);
  j["early_threshold"] = r.early;
  j["late_threshold"] = r.late;
  ojson table = ojson::array();
  for (const auto& row : r.table) {
    ojson rj;
    rj["class"] = to_string(row.cls);
    rj["n"] = row.n;
    rj["share"] = row.share;
    rj["accuracy"] = to_json(row.accuracy);
    table.push_back(std::move(rj));
  }
  j["classes"] = std::move(table);
  return j;
}

inline void write_class_csv(std::ostream& out, const std::vector<TimingReport>& reports) {
  out << "scheme,class,n,share,accuracy\n";
  for (const auto& r : reports) {
    for (const auto& row : r.table) {
      out << to_string(r.scheme) << ',' << to_string(row.cls) << ',' << row.n << ',' << format_real(row.share)
          << ',' << csv_real(row.accuracy) << '\n';
    }
  }
}

inline void write_sweep_csv(std::ostream& out, PeakScheme scheme, const SweepResult& s, bool header = true) {
  if (header) out << "scheme,early,late,n_early,acc_early,n_late,acc_late,gap\n";
  for (const auto& r : s.rows) {
    out << to_string(scheme) << ',' << format_real(r.early) << ',' << format_real(r.late) << ',' << r.n_early
        << ',' << csv_real(r.acc_early) << ',' << r.n_late << ',' << csv_real(r.acc_late) << ','
        << csv_real(r.gap) << '\n';
  }
}

inline void write_bins_csv(std::ostream& out, PeakScheme scheme, const std::vector<BinRow>& bins,
                           bool header = true) {
  if (header) out << "scheme,bin_lo,bin_hi,n,accuracy\n";
  for (const auto& b : bins) {
    out << to_string(scheme) << ',' << format_real(b.lo) << ',' << format_real(b.hi) << ',' << b.n << ','
        << csv_real(b.accuracy) << '\n';
  }
}

inline ojson to_json(const FailureModeBreakdown& f) {
  ojson j;
  j["stable_wrong"] = f.stable_wrong;
  j["early_collapse"] = f.early_collapse;
  j["unstable_wrong"] = f.unstable_wrong;
  ojson a = ojson::array();
  for (const auto& [id, m] : f.assignments) a.push_back(ojson{{"id", id}, {"mode", to_string(m)}});
  j["assignments"] = std::move(a);
  return j;
}

inline ojson to_json(const VerifyReport& r) {
  ojson j;
  j["check"] = r.check;
  j["trials"] = r.trials;
  j["dim"] = r.dim;
  j["seed"] = r.seed;
  j["violations"] = r.violations;
  j["min_slack"] = r.min_slack;
  j["tolerance"] = r.tolerance;
  return j;
}

}  // namespace instab

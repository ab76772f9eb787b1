// instab: command-line front end for trace instability analysis.
//
// Exit codes: 0 success, 1 data error, 2 usage error. Errors are reported on
// stderr as a single JSON object.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "instab/instab.hpp"

namespace fs = std::filesystem;
using instab::ojson;

namespace {

struct RunConfig {
  std::vector<std::string> inputs;
  std::string out_dir;
  double lambda = instab::kDefaultLambda;
  std::optional<std::size_t> effective_k;  // default: every logged entry
  std::vector<std::size_t> windows = instab::kDefaultWindows;
  std::size_t buckets = instab::kDefaultBuckets;
  std::size_t bootstrap_n = instab::kDefaultResamples;
  double bootstrap_level = instab::kDefaultLevel;
  std::uint64_t bootstrap_seed = instab::kDefaultBootstrapSeed;
  std::size_t jobs = 1;
  bool emit_series = false;
  bool with_kappa = false;
  std::size_t probe_top_m = instab::kDefaultProbeTopM;
  std::size_t max_steps = instab::kDefaultMaxNewTokens;

  ojson echo() const {
    ojson j;
    j["inputs"] = inputs;
    j["lambda"] = lambda;
    j["effective_k"] = effective_k ? ojson(*effective_k) : ojson("logged");
    j["windows"] = windows;
    j["buckets"] = buckets;
    j["bootstrap"] = {{"resamples", bootstrap_n}, {"level", bootstrap_level}, {"seed", bootstrap_seed}};
    j["probe_top_m"] = probe_top_m;
    j["max_steps"] = max_steps;
    return j;
  }

  instab::AnalysisOptions analysis() const {
    instab::AnalysisOptions a;
    a.series.lambda = lambda;
    a.series.effective_k = effective_k.value_or(instab::kAllLogged);
    a.series.with_kappa = with_kappa;
    a.summary.windows = windows;
    a.summary.probe_top_m = probe_top_m;
    a.jobs = jobs;
    a.keep_series = emit_series;
    return a;
  }

  instab::EvalOptions eval(bool with_bootstrap) const {
    instab::EvalOptions e;
    e.n_buckets = buckets;
    if (with_bootstrap && bootstrap_n > 0) {
      instab::BootstrapOptions b;
      b.resamples = bootstrap_n;
      b.level = bootstrap_level;
      b.seed = bootstrap_seed;
      b.jobs = jobs;
      e.bootstrap = b;
    }
    return e;
  }
};

void add_common(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--input,-i", cfg.inputs, "Trace JSONL file(s)")->required();
  cmd->add_option("--out,-o", cfg.out_dir, "Output directory (default: $INSTAB_OUT or ./instab_out)");
  cmd->add_option("--lambda", cfg.lambda, "Entropy weight in I_t = D_t + lambda H_t")->check(CLI::NonNegativeNumber);
  cmd->add_option("--k", cfg.effective_k, "Effective top-k (default: all logged entries)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--windows", cfg.windows, "Early-window sizes")->delimiter(',')->check(CLI::PositiveNumber);
  cmd->add_option("--buckets", cfg.buckets, "Number of quantile buckets")->check(CLI::PositiveNumber);
  cmd->add_option("--bootstrap-n", cfg.bootstrap_n, "Bootstrap resamples (0 disables)");
  cmd->add_option("--bootstrap-level", cfg.bootstrap_level, "Bootstrap interval level")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--bootstrap-seed", cfg.bootstrap_seed, "Bootstrap seed");
  cmd->add_option("--jobs,-j", cfg.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--emit-series", cfg.emit_series, "Include per-step H/D/I series in diagnostics");
  cmd->add_flag("--kappa", cfg.with_kappa, "Compute the curvature proxy per step");
  cmd->add_option("--probe-top-m", cfg.probe_top_m, "Top-m set size for the peak turnover probe")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-steps", cfg.max_steps, "Maximum trace length accepted (0 = unlimited)");
}

std::string resolve_out(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("INSTAB_OUT"); env && *env) return env;
  return "instab_out";
}

fs::path prepare_out(const RunConfig& cfg) {
  fs::path out = resolve_out(cfg.out_dir);
  fs::create_directories(out);
  return out;
}

std::vector<instab::TraceRecord> load_corpus(const RunConfig& cfg) {
  instab::ParseOptions po;
  po.max_steps = cfg.max_steps;
  std::vector<instab::TraceRecord> all;
  std::unordered_set<std::string> seen;
  for (const auto& path : cfg.inputs) {
    auto part = instab::parse_trace_file(path, po);
    for (auto& tr : part) {
      if (!seen.insert(tr.id).second) throw instab::DataError("duplicate trace id " + tr.id + " across inputs", {}, tr.id);
      all.push_back(std::move(tr));
    }
  }
  return all;
}

std::string corpus_name(const RunConfig& cfg) {
  std::string name;
  for (const auto& p : cfg.inputs) {
    if (!name.empty()) name += '+';
    name += fs::path(p).stem().string();
  }
  return name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw instab::DataError("cannot write " + path.string());
  f << text;
}

void warn_clamped(bool clamped, const RunConfig& cfg) {
  if (clamped && cfg.effective_k) {
    std::cerr << "warning: --k " << *cfg.effective_k
              << " exceeds the logged list length of some steps; clamped to the logged length\n";
  }
}

std::vector<instab::Strength> strengths(const RunConfig& cfg) {
  std::vector<instab::Strength> out{instab::Strength::full()};
  auto ws = cfg.windows;
  std::sort(ws.begin(), ws.end());
  ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
  for (auto w : ws) out.push_back(instab::Strength::windowed(w));
  return out;
}

int cmd_analyze(const RunConfig& cfg) {
  const auto corpus = load_corpus(cfg);
  const fs::path out = prepare_out(cfg);
  const auto analysis = instab::analyze_corpus(corpus, cfg.analysis());
  warn_clamped(analysis.k_clamped, cfg);

  std::ostringstream diag;
  for (std::size_t i = 0; i < analysis.diagnostics.size(); ++i) {
    const instab::StepSeries* s = cfg.emit_series ? &analysis.series[i] : nullptr;
    diag << instab::to_json(analysis.diagnostics[i], s).dump() << '\n';
  }
  write_text(out / "diagnostics.jsonl", diag.str());

  ojson report;
  report["config"] = cfg.echo();
  ojson reports = ojson::object();
  instab::EvalReport main_report;
  for (const auto& s : strengths(cfg)) {
    const auto r = instab::evaluate_strength(analysis.diagnostics, s, cfg.eval(true));
    if (s.window == 0) main_report = r;
    reports[s.name()] = instab::to_json(r);
  }
  report["reports"] = std::move(reports);
  write_text(out / "report.json", report.dump(2) + "\n");

  std::ostringstream csv;
  instab::write_bucket_csv(csv, main_report);
  write_text(out / "buckets.csv", csv.str());

  std::cout << "analyzed " << corpus.size() << " traces";
  if (main_report.auc_wrong) std::cout << "; AUC_wrong(S) = " << *main_report.auc_wrong;
  std::cout << "\n";
  return 0;
}

struct ControlArgs {
  std::string kind;
  std::vector<double> lambdas{0.0, 1.0};
  std::vector<std::size_t> ks{10, 20, 50};
  std::vector<std::size_t> ws{5, 10, 20, 30, 40, 50, 60, 80, 100};
  std::size_t window = instab::kFixedWindow;
  std::uint64_t shuffle_seed = 0;
};

instab::ControlSpec control_spec(const ControlArgs& a, const RunConfig& cfg) {
  instab::ControlSpec spec;
  spec.kind = instab::parse_control_kind(a.kind);
  spec.lambda = cfg.lambda;
  spec.lambdas = a.lambdas;
  spec.ks = a.ks;
  spec.ws = a.ws;
  spec.window = a.window == 0 ? std::nullopt : std::optional<std::size_t>(a.window);
  spec.shuffle_seed = a.shuffle_seed;
  return spec;
}

instab::ControlOptions control_options(const RunConfig& cfg) {
  instab::ControlOptions o;
  o.series = cfg.analysis().series;
  o.eval = cfg.eval(false);
  o.jobs = cfg.jobs;
  return o;
}

void emit_control(const fs::path& out, const std::string& corpus, const std::string& kind,
                  const std::vector<instab::ControlRow>& rows, const RunConfig& cfg) {
  std::ostringstream csv;
  instab::write_control_csv(csv, corpus, rows);
  write_text(out / ("controls_" + kind + ".csv"), csv.str());
  ojson j;
  j["config"] = cfg.echo();
  j["control"] = kind;
  j["rows"] = instab::to_json(rows);
  write_text(out / ("controls_" + kind + ".json"), j.dump(2) + "\n");
}

int cmd_controls(const RunConfig& cfg, const ControlArgs& args) {
  const auto spec = control_spec(args, cfg);
  spec.validate();
  const auto corpus = load_corpus(cfg);
  const fs::path out = prepare_out(cfg);
  const auto rows = instab::run_control(corpus, spec, control_options(cfg));
  emit_control(out, corpus_name(cfg), args.kind, rows, cfg);
  for (const auto& r : rows) {
    std::cout << r.control << " " << r.setting << " " << r.report.statistic << " AUC_wrong=";
    if (r.report.auc_wrong) {
      std::cout << *r.report.auc_wrong;
    } else {
      std::cout << "null";
    }
    std::cout << "\n";
  }
  return 0;
}

struct TimingArgs {
  double early = instab::kDefaultEarly;
  double late = instab::kDefaultLate;
  std::vector<double> sweep_early = instab::kSweepEarly;
  std::vector<double> sweep_late = instab::kSweepLate;
  std::size_t bins = 10;
};

int cmd_timing(const RunConfig& cfg, const TimingArgs& args) {
  instab::check_thresholds(args.early, args.late);
  const auto corpus = load_corpus(cfg);
  const fs::path out = prepare_out(cfg);
  auto opts = cfg.analysis();
  if (std::find(opts.summary.windows.begin(), opts.summary.windows.end(), 20) == opts.summary.windows.end()) {
    opts.summary.windows.push_back(20);
  }
  const auto diags = instab::analyze_corpus(corpus, opts).diagnostics;

  std::vector<instab::TimingReport> reports;
  ojson j;
  j["config"] = cfg.echo();
  j["thresholds"] = {{"early", args.early}, {"late", args.late}};
  ojson schemes = ojson::array();
  std::ostringstream sweep_csv, bins_csv;
  bool header = true;
  for (auto scheme : {instab::PeakScheme::rho, instab::PeakScheme::rho50}) {
    reports.push_back(instab::classify_peaks(diags, args.early, args.late, scheme));
    const auto sweep = instab::threshold_sweep(diags, args.sweep_early, args.sweep_late, scheme);
    for (const auto& w : sweep.warnings) std::cerr << "warning: " << w << "\n";
    const auto bins = instab::rho_bins(diags, args.bins, scheme);
    instab::write_sweep_csv(sweep_csv, scheme, sweep, header);
    instab::write_bins_csv(bins_csv, scheme, bins, header);
    header = false;
    schemes.push_back(instab::to_json(reports.back()));
  }
  j["schemes"] = std::move(schemes);
  try {
    j["failure_modes"] = instab::to_json(instab::failure_modes(diags));
  } catch (const instab::DataError& e) {
    j["failure_modes"] = nullptr;
    j["failure_modes_error"] = e.what();
  }
  std::ostringstream classes_csv;
  instab::write_class_csv(classes_csv, reports);
  write_text(out / "timing.json", j.dump(2) + "\n");
  write_text(out / "classes.csv", classes_csv.str());
  write_text(out / "threshold_sweep.csv", sweep_csv.str());
  write_text(out / "rho_bins.csv", bins_csv.str());

  std::cout << "thresholds early=" << args.early << " late=" << args.late << "\n";
  for (const auto& r : reports) {
    for (const auto& row : r.table) {
      std::cout << instab::to_string(r.scheme) << " " << instab::to_string(row.cls) << " n=" << row.n
                << " share=" << row.share << " accuracy=";
      if (row.accuracy) {
        std::cout << *row.accuracy;
      } else {
        std::cout << "null";
      }
      std::cout << "\n";
    }
  }
  return 0;
}

instab::Population population_from_json(const nlohmann::json& p) {
  instab::Population pop;
  pop.share = p.value("share", pop.share);
  pop.correct_rate = p.value("correct_rate", pop.correct_rate);
  if (p.contains("peak_window")) {
    pop.peak_lo = p["peak_window"].at(0).get<std::size_t>();
    pop.peak_hi = p["peak_window"].at(1).get<std::size_t>();
  }
  pop.peak_height = p.value("peak_height", pop.peak_height);
  pop.baseline_entropy = p.value("baseline_entropy", pop.baseline_entropy);
  pop.support_churn = p.value("support_churn", pop.support_churn);
  pop.step_noise = p.value("step_noise", pop.step_noise);
  pop.height_jitter = p.value("height_jitter", pop.height_jitter);
  return pop;
}

instab::SynthConfig synth_config_from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw instab::UsageError("cannot open synth config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
    instab::SynthConfig c;
    c.n_traces = j.value("n_traces", c.n_traces);
    if (j.contains("T_range")) {
      c.t_min = j["T_range"].at(0).get<std::size_t>();
      c.t_max = j["T_range"].at(1).get<std::size_t>();
    }
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("populations")) {
      c.populations.clear();
      for (const auto& p : j["populations"]) c.populations.push_back(population_from_json(p));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw instab::UsageError("invalid synth config " + path + ": " + e.what());
  }
}

struct SynthArgs {
  std::string preset = "two_population";
  std::string config_file;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string name = "synthetic";
};

int cmd_synth(const SynthArgs& a) {
  instab::SynthConfig c = a.config_file.empty() ? instab::preset(a.preset, 1000, 0) : synth_config_from_file(a.config_file);
  if (a.n) c.n_traces = *a.n;
  if (a.seed) c.seed = *a.seed;
  const auto corpus = instab::generate(c);
  const fs::path out = resolve_out(a.out_dir);
  fs::create_directories(out);
  std::ostringstream traces, sidecar;
  instab::write_traces(traces, corpus.traces);
  instab::write_sidecar(sidecar, corpus);
  write_text(out / (a.name + ".jsonl"), traces.str());
  write_text(out / (a.name + ".populations.jsonl"), sidecar.str());
  std::cout << "wrote " << corpus.traces.size() << " traces to " << (out / (a.name + ".jsonl")).string() << "\n";
  return 0;
}

struct VerifyArgs {
  std::size_t trials = 10000;
  std::vector<std::size_t> dims{3, 10, 50};
  std::uint64_t seed = 0;
  std::string check = "all";
  std::size_t jobs = 1;
  std::string out_dir;
};

int cmd_verify(const VerifyArgs& a) {
  if (a.trials < 1) throw instab::UsageError("trials >= 1 required");
  if (a.check != "all" && a.check != "lemma" && a.check != "pinsker") {
    throw instab::UsageError("--check must be one of all, lemma, pinsker");
  }
  std::vector<instab::VerifyReport> reports;
  for (auto dim : a.dims) {
    if (a.check != "pinsker") reports.push_back(instab::verify_lemma_jsd(a.trials, dim, a.seed, 5.0, a.jobs));
    if (a.check != "lemma") reports.push_back(instab::verify_pinsker_chain(a.trials, dim, a.seed, a.jobs));
  }
  std::size_t violations = 0;
  ojson arr = ojson::array();
  for (const auto& r : reports) {
    violations += r.violations;
    arr.push_back(instab::to_json(r));
    std::cout << r.check << " dim=" << r.dim << " trials=" << r.trials << " violations=" << r.violations
              << " min_slack=" << r.min_slack << "\n";
  }
  if (!a.out_dir.empty() || std::getenv("INSTAB_OUT")) {
    const fs::path out = resolve_out(a.out_dir);
    fs::create_directories(out);
    write_text(out / "verify.json", arr.dump(2) + "\n");
  }
  std::cout << violations << " violations\n";
  return violations == 0 ? 0 : 1;
}

int cmd_report(const RunConfig& cfg, const TimingArgs& targs) {
  int rc = cmd_analyze(cfg);
  rc = std::max(rc, cmd_timing(cfg, targs));
  const auto corpus = load_corpus(cfg);
  const fs::path out = prepare_out(cfg);
  for (const std::string kind : {"shuffle_p", "shuffle_i", "baseline_SH", "baseline_SdH", "baseline_SD",
                                 "lambda_ablation", "topk_sweep", "window_sweep"}) {
    ControlArgs a;
    a.kind = kind;
    const auto rows = instab::run_control(corpus, control_spec(a, cfg), control_options(cfg));
    emit_control(out, corpus_name(cfg), kind, rows, cfg);
  }
  return rc;
}

void print_error(const char* type, const std::string& message, std::optional<std::size_t> line = std::nullopt,
                 const std::string& trace_id = {}) {
  ojson e;
  e["type"] = type;
  e["message"] = message;
  if (line) e["line"] = *line;
  if (!trace_id.empty()) e["trace_id"] = trace_id;
  std::cerr << ojson{{"error", e}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instability diagnostics over logged top-k decoding traces"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file (flags override file values)");

  RunConfig cfg;
  ControlArgs control_args;
  TimingArgs timing_args;
  SynthArgs synth_args;
  VerifyArgs verify_args;

  auto* analyze = app.add_subcommand("analyze", "Per-trace diagnostics and corpus metrics");
  add_common(analyze, cfg);

  auto* controls = app.add_subcommand("controls", "Negative controls and ablations");
  add_common(controls, cfg);
  controls->add_option("--kind", control_args.kind,
                       "shuffle_p | shuffle_i | baseline_SH | baseline_SdH | baseline_SD | lambda_ablation | "
                       "topk_sweep | window_sweep")
      ->required();
  controls->add_option("--lambdas", control_args.lambdas, "lambda values for lambda_ablation")->delimiter(',');
  controls->add_option("--ks", control_args.ks, "effective k values for topk_sweep")->delimiter(',');
  controls->add_option("--ws", control_args.ws, "window sizes for window_sweep")->delimiter(',');
  controls->add_option("--window", control_args.window, "windowed rows for shuffles/baselines (0 disables)");
  controls->add_option("--shuffle-seed", control_args.shuffle_seed, "Corpus seed mixed into per-id shuffles");

  auto add_timing = [&](CLI::App* cmd) {
    cmd->add_option("--early", timing_args.early, "Early threshold (rho < early)");
    cmd->add_option("--late", timing_args.late, "Late threshold (rho > late)");
    cmd->add_option("--sweep-early", timing_args.sweep_early, "Early thresholds to sweep")->delimiter(',');
    cmd->add_option("--sweep-late", timing_args.sweep_late, "Late thresholds to sweep")->delimiter(',');
    cmd->add_option("--bins", timing_args.bins, "Equal-width rho bins")->check(CLI::PositiveNumber);
  };
  auto* timing = app.add_subcommand("timing", "Peak-position classification, sweeps and bins");
  add_common(timing, cfg);
  add_timing(timing);

  auto* report = app.add_subcommand("report", "analyze + timing + every control");
  add_common(report, cfg);
  add_timing(report);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted structure");
  synth->add_option("--preset", synth_args.preset, "Preset name")
      ->check(CLI::IsMember(instab::preset_names()));
  synth->add_option("--synth-config", synth_args.config_file, "JSON generator config (overrides --preset)");
  synth->add_option("--n", synth_args.n, "Number of traces")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--out,-o", synth_args.out_dir, "Output directory");
  synth->add_option("--name", synth_args.name, "Output file stem");

  auto* verify = app.add_subcommand("verify", "Numeric certification of the JSD inequalities");
  verify->add_option("--trials", verify_args.trials, "Random trials per dimension");
  verify->add_option("--dims", verify_args.dims, "Dimensions")->delimiter(',');
  verify->add_option("--seed", verify_args.seed, "Seed");
  verify->add_option("--check", verify_args.check, "all | lemma | pinsker");
  verify->add_option("--jobs,-j", verify_args.jobs, "Worker threads")->check(CLI::PositiveNumber);
  verify->add_option("--out,-o", verify_args.out_dir, "Output directory for verify.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    if (*analyze) return cmd_analyze(cfg);
    if (*controls) return cmd_controls(cfg, control_args);
    if (*timing) return cmd_timing(cfg, timing_args);
    if (*report) return cmd_report(cfg, timing_args);
    if (*synth) return cmd_synth(synth_args);
    if (*verify) return cmd_verify(verify_args);
  } catch (const instab::UsageError& e) {
    print_error("usage_error", e.what());
    return 2;
  } catch (const instab::DataError& e) {
    print_error("data_error", e.what(), e.line(), e.trace_id());
    return 1;
  } catch (const std::exception& e) {
    print_error("data_error", e.what());
    return 1;
  }
  return 2;
}

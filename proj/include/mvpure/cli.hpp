#pragma once

// `mvpure` command line: simulate, localize, bench, report, selftest.
// Exit codes: 0 success, 1 configuration / usage / I/O error, 2 numerical
// contract violation (including a failing selftest).

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mvpure/config.hpp"
#include "mvpure/errors.hpp"
#include "mvpure/forward_model.hpp"
#include "mvpure/harness.hpp"
#include "mvpure/localizer.hpp"
#include "mvpure/report.hpp"
#include "mvpure/selftest.hpp"
#include "mvpure/signal_sim.hpp"

namespace mvpure::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitContract = 2;

struct Options {
  std::string subcommand;
  std::optional<std::string> config_path;
  std::string out_dir = ".";
  std::optional<std::string> in_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::optional<double> snr_db;
  bool svg = false;
  int verbosity = 1;  // 0 quiet, 1 info, 2 debug
};

/// key=value lines on stderr.
class Log {
 public:
  Log(std::ostream& os, int verbosity) : os_(os), verbosity_(verbosity) {}

  void info(const std::string& event, const std::string& fields = {}) const { emit(1, "info", event, fields); }
  void debug(const std::string& event, const std::string& fields = {}) const { emit(2, "debug", event, fields); }
  void error(const std::string& event, const std::string& message) const {
    os_ << "level=error event=" << event << " msg=\"" << message << "\"\n";
  }

 private:
  void emit(int level, const char* name, const std::string& event, const std::string& fields) const {
    if (verbosity_ < level) return;
    os_ << "level=" << name << " event=" << event << (fields.empty() ? "" : " ") << fields << '\n';
  }

  std::ostream& os_;
  int verbosity_;
};

namespace detail {

inline unsigned env_jobs() {
  const char* v = std::getenv("MVPURE_JOBS");
  if (!v || !*v) return 0;
  const std::string s(v);
  try {
    std::size_t pos = 0;
    const long n = std::stol(s, &pos);
    if (pos != s.size() || n < 1 || n > 4096) throw std::invalid_argument("range");
    return static_cast<unsigned>(n);
  } catch (const std::exception&) {
    throw ConfigError("MVPURE_JOBS must be an integer in [1, 4096], got '" + s + "'");
  }
}

inline unsigned resolve_jobs(const Options& opt, const AppConfig& cfg) {
  if (opt.jobs) return std::max(1u, *opt.jobs);
  if (cfg.jobs > 0) return cfg.jobs;
  if (const unsigned e = env_jobs()) return e;
  return std::max(1u, std::thread::hardware_concurrency());
}

inline AppConfig load(const Options& opt) {
  AppConfig cfg;
  if (opt.config_path) cfg = load_config(*opt.config_path);
  if (opt.seed) cfg.experiment.seed_base = *opt.seed;
  cfg.experiment.validate();
  return cfg;
}

inline std::filesystem::path prepare_out(const Options& opt) {
  std::filesystem::path out(opt.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + opt.out_dir + "': " + ec.message());
  return out;
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write '" + path.string() + "'");
  fn(os);
  if (!os) throw ConfigError("write failed for '" + path.string() + "'");
}

inline double level_of(const Options& opt, const ExperimentConfig& e) {
  return opt.snr_db ? *opt.snr_db : e.snr_grid_db.front();
}

inline nlohmann::json index_list(const std::vector<Index>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Index i : v) a.push_back(i);
  return a;
}

}  // namespace detail

inline int cmd_simulate(const Options& opt, const Log& log) {
  const AppConfig cfg = detail::load(opt);
  const ExperimentConfig& e = cfg.experiment;
  const auto out = detail::prepare_out(opt);
  const ExperimentSetup setup = make_setup(e);
  const double snr = detail::level_of(opt, e);
  const std::uint64_t seed = run_seed(e, 0, 0);
  log.info("simulate", "m=" + std::to_string(e.m) + " s=" + std::to_string(e.s) + " snr_db=" + mvpure::detail::fmt(snr));

  detail::write_file(out / "leadfields.csv", [&](std::ostream& os) { write_leadfields(os, setup.leadfields); });
  RunCovariances cov;
  if (e.exact_covariances) {
    cov = simulate_run(e, setup, snr, seed);
    nlohmann::json side = {{"format", "mvpure-exact"}, {"version", 1}, {"sensors", e.m},
                           {"seed", seed},            {"snr_db", snr}, {"snr_achieved", cov.snr_achieved},
                           {"theta0", detail::index_list(cov.theta0)}};
    detail::write_file(out / "recording.json", [&](std::ostream& os) { os << side.dump(2) << '\n'; });
  } else {
    const Recording rec = simulate_run_recording(e, setup, snr, seed);
    detail::write_file(out / "recording.csv", [&](std::ostream& os) { write_recording_csv(os, rec); });
    detail::write_file(out / "recording.json", [&](std::ostream& os) { os << recording_sidecar(rec).dump(2) << '\n'; });
    cov.theta0 = rec.theta0;
    cov.R = regularize_pd(estimate_cov(rec.post), e.ridge_rel).matrix;
    cov.N = regularize_pd(estimate_cov(rec.pre), e.ridge_rel).matrix;
    cov.snr_achieved = rec.snr;
  }
  detail::write_file(out / "R.csv", [&](std::ostream& os) { write_matrix_csv(os, cov.R); });
  detail::write_file(out / "N.csv", [&](std::ostream& os) { write_matrix_csv(os, cov.N); });
  log.info("simulate_done", "snr_achieved=" + mvpure::detail::fmt(cov.snr_achieved) + " out=" + out.string());
  return kExitOk;
}

inline int cmd_localize(const Options& opt, const Log& log) {
  const AppConfig cfg = detail::load(opt);
  const ExperimentConfig& e = cfg.experiment;

  LeadfieldSet set;
  Matrix r, n;
  std::vector<Index> truth;
  if (cfg.input.leadfield) {
    std::ifstream lf(*cfg.input.leadfield);
    if (!lf) throw ConfigError("cannot open '" + *cfg.input.leadfield + "'");
    set = read_leadfields(lf);
    r = load_matrix_csv(*cfg.input.covariance_r);
    n = load_matrix_csv(*cfg.input.covariance_n);
    if (r.rows() != set.m() || r.cols() != set.m() || n.rows() != set.m() || n.cols() != set.m())
      throw ConfigError("[input]: covariance dimensions do not match the leadfield sensor count");
    log.info("localize_input", "leadfield=" + *cfg.input.leadfield);
  } else {
    const ExperimentSetup setup = make_setup(e);
    const double snr = detail::level_of(opt, e);
    const RunCovariances cov = simulate_run(e, setup, snr, run_seed(e, 0, 0));
    set = setup.leadfields;
    r = cov.R;
    n = cov.N;
    truth = cov.theta0;
    log.info("localize_simulated", "snr_db=" + mvpure::detail::fmt(snr));
  }

  const ScanContext ctx(set, r, n);
  const Index rank = select_rank(ctx.covariances().R, ctx.covariances().N, e.l0, e.delta);
  std::vector<Position> truth_pos;
  for (Index i : truth) truth_pos.push_back(set.positions()[i] * e.radius_mm);

  nlohmann::json doc;
  doc["l0"] = e.l0;
  doc["delta"] = e.delta;
  doc["r_selected"] = rank;
  if (!truth.empty()) doc["theta0"] = detail::index_list(truth);
  doc["results"] = nlohmann::json::array();
  for (IndexFamily f : e.indices) {
    LocalizationConfig lc;
    lc.l0 = e.l0;
    lc.delta = e.delta;
    lc.family = f;
    lc.rank = rank;
    const LocalizationResult res = localize(lc, ctx);
    nlohmann::json item;
    item["index"] = std::string(to_string(f));
    item["found"] = detail::index_list(res.found);
    item["index_trace"] = res.index_trace;
    item["ties"] = res.ties;
    if (!truth.empty()) {
      std::vector<double> err;
      for (Index i : res.found) err.push_back(chebyshev_error(set.positions()[i] * e.radius_mm, truth_pos));
      item["errors_mm"] = err;
    }
    doc["results"].push_back(item);
  }
  const std::string text = doc.dump(2);
  std::cout << text << '\n';
  if (opt.out_dir != ".") {
    const auto out = detail::prepare_out(opt);
    detail::write_file(out / "localize.json", [&](std::ostream& os) { os << text << '\n'; });
  }
  return kExitOk;
}

inline void write_report_files(const std::filesystem::path& out, const ReportFiles& rep, bool svg) {
  detail::write_file(out / "pvalues.csv", [&](std::ostream& os) { write_pvalues_csv(os, rep.pvalues); });
  detail::write_file(out / "summary.csv", [&](std::ostream& os) { write_summary_csv(os, rep.summary); });
  if (!svg) return;
  std::vector<ErrorSummary> all, last;
  for (const ErrorSummary& s : rep.summary) (s.scope == ErrorScope::AllIterations ? all : last).push_back(s);
  detail::write_file(out / "errors_all_iterations.svg", [&](std::ostream& os) {
    write_error_svg(os, all, "localization error, all iterations");
  });
  detail::write_file(out / "errors_last_two.svg", [&](std::ostream& os) {
    write_error_svg(os, last, "localization error, last two iterations");
  });
}

inline int cmd_bench(const Options& opt, const Log& log) {
  const AppConfig cfg = detail::load(opt);
  const ExperimentConfig& e = cfg.experiment;
  const auto out = detail::prepare_out(opt);
  const unsigned jobs = detail::resolve_jobs(opt, cfg);
  log.info("bench_start", "runs=" + std::to_string(e.runs) + " levels=" + std::to_string(e.snr_grid_db.size()) +
                              " jobs=" + std::to_string(jobs) + " seed=" + std::to_string(e.seed_base));
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RunRecord> records = run_experiment(e, jobs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::size_t failed = 0;
  for (const RunRecord& rec : records)
    if (!rec.error.empty()) {
      ++failed;
      log.error("run_failed", "run " + std::to_string(rec.run_id) + " at " + mvpure::detail::fmt(rec.snr_db) + " dB: " + rec.error);
    }
  const std::vector<ErrorRow> rows = error_rows(records);
  if (rows.empty()) throw ContractError("bench: every run failed");

  detail::write_file(out / "errors.csv", [&](std::ostream& os) { write_errors_csv(os, rows); });
  detail::write_file(out / "ranks.csv", [&](std::ostream& os) { write_ranks_csv(os, rank_histogram(records)); });
  detail::write_file(out / "runs.csv", [&](std::ostream& os) { write_runs_csv(os, records); });
  write_report_files(out, build_report(rows), opt.svg);
  if (opt.svg)
    detail::write_file(out / "ranks.svg", [&](std::ostream& os) { write_rank_svg(os, rank_histogram(records)); });
  std::ostringstream f;
  f << std::fixed << std::setprecision(2) << secs;
  log.info("bench_done", "seconds=" + f.str() + " failed_runs=" + std::to_string(failed) + " out=" + out.string());
  return failed ? kExitContract : kExitOk;
}

inline int cmd_report(const Options& opt, const Log& log) {
  const std::filesystem::path in(opt.in_dir ? *opt.in_dir : opt.out_dir);
  std::ifstream is(in / "errors.csv");
  if (!is) throw ConfigError("cannot open '" + (in / "errors.csv").string() + "'");
  const ReportFiles rep = build_report(read_errors_csv(is));
  const auto out = detail::prepare_out(opt);
  write_report_files(out, rep, opt.svg);

  std::cout << std::left << std::setw(16) << "scope" << std::setw(8) << "snr_db" << std::setw(22) << "hypothesis"
            << std::setw(12) << "median_a" << std::setw(12) << "median_b" << "p_value\n";
  for (const PValueRow& p : rep.pvalues) {
    std::ostringstream h;
    h << to_string(p.a) << '>' << to_string(p.b);
    std::cout << std::setw(16) << to_string(p.scope) << std::setw(8) << mvpure::detail::fmt(p.snr_db) << std::setw(22)
              << h.str() << std::setw(12) << mvpure::detail::fmt(p.median_a) << std::setw(12) << mvpure::detail::fmt(p.median_b)
              << mvpure::detail::fmt(p.test.p_value) << '\n';
  }
  log.info("report_done", "rows=" + std::to_string(rep.rows.size()) + " out=" + out.string());
  return kExitOk;
}

inline int cmd_selftest(const Options& opt, const Log& log) {
  SelfTestOptions so;
  if (opt.seed) so.seed = *opt.seed;
  const std::vector<SelfTestRow> rows = run_selftest(so);
  bool ok = true;
  std::cout << std::left << std::setw(6) << "result" << "  " << std::setw(58) << "check" << std::setw(8) << "cases"
            << "worst / tol\n";
  for (const SelfTestRow& r : rows) {
    ok = ok && r.passed;
    std::ostringstream w;
    w << std::scientific << std::setprecision(2) << r.worst << " / " << r.tol;
    std::cout << std::setw(6) << (r.passed ? "PASS" : "FAIL") << "  " << std::setw(58) << r.name << std::setw(8)
              << r.cases << w.str() << '\n';
  }
  log.info("selftest_done", std::string("passed=") + (ok ? "true" : "false"));
  return ok ? kExitOk : kExitContract;
}

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"MV-PURE reduced-rank activity indices: simulation, localization and benchmarking", "mvpure"};
  app.require_subcommand(1);
  Options opt;
  bool quiet = false, verbose = false;

  auto common = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("--config", opt.config_path, "experiment config (INI)");
      sub->add_option("--seed", opt.seed, "override [experiment] seed");
    }
    sub->add_option("--out", opt.out_dir, "output directory");
    sub->add_flag("-q,--quiet", quiet, "only errors on stderr");
    sub->add_flag("-v,--verbose", verbose, "debug logging");
  };
  CLI::App* sim = app.add_subcommand("simulate", "simulate one run and write leadfields, recording, R and N");
  common(sim, true);
  sim->add_option("--snr", opt.snr_db, "SNR level in dB (default: first grid entry)");
  CLI::App* loc = app.add_subcommand("localize", "localize one covariance pair with every configured index");
  common(loc, true);
  loc->add_option("--snr", opt.snr_db, "SNR level in dB when simulating");
  CLI::App* bench = app.add_subcommand("bench", "run the Monte-Carlo sweep and write CSV artifacts");
  common(bench, true);
  bench->add_option("--jobs", opt.jobs, "worker threads (default: config, MVPURE_JOBS, hardware)");
  bench->add_flag("--svg", opt.svg, "also write SVG bar charts");
  CLI::App* rep = app.add_subcommand("report", "recompute p-values and summaries from errors.csv");
  common(rep, false);
  rep->add_option("--in", opt.in_dir, "directory containing errors.csv (default: --out)");
  rep->add_flag("--svg", opt.svg, "also write SVG bar charts");
  CLI::App* self = app.add_subcommand("selftest", "exact-covariance invariant suite");
  common(self, false);
  self->add_option("--seed", opt.seed, "seed of the random models");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }
  opt.verbosity = quiet ? 0 : verbose ? 2 : 1;
  const Log log(err, opt.verbosity);

  try {
    if (sim->parsed()) return cmd_simulate(opt, log);
    if (loc->parsed()) return cmd_localize(opt, log);
    if (bench->parsed()) return cmd_bench(opt, log);
    if (rep->parsed()) return cmd_report(opt, log);
    if (self->parsed()) return cmd_selftest(opt, log);
  } catch (const ConfigError& e) {
    log.error("config", e.what());
    return kExitConfig;
  } catch (const ContractError& e) {
    log.error("contract", e.what());
    return kExitContract;
  } catch (const std::exception& e) {
    log.error("internal", e.what());
    return kExitContract;
  }
  err << app.help();
  return kExitConfig;
}

}  // namespace mvpure::cli

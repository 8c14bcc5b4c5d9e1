#pragma once

// Monte-Carlo experiment driver: correlated MVAR sources on a synthetic
// dictionary, SNR sweep, sequential localization with every configured
// index, error aggregation, one-sided rank-sum tests and rank histograms.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mvpure/errors.hpp"
#include "mvpure/forward_model.hpp"
#include "mvpure/indices.hpp"
#include "mvpure/localizer.hpp"
#include "mvpure/random.hpp"
#include "mvpure/rank_sum.hpp"
#include "mvpure/signal_sim.hpp"

namespace mvpure {

enum class MaskKind { Dense, Identity };

struct ExperimentConfig {
  Index m = 32;
  Index s = 300;
  Index l0 = 5;
  Index n_fixed_close = 3;
  std::vector<double> snr_grid_db = {-10.0, 0.0, 10.0};
  Index runs = 20;
  Index samples_pre = 500;
  Index samples_post = 500;
  double delta = 0.8;
  std::uint64_t seed_base = 1;
  std::vector<IndexFamily> indices = {kAllFamilies.begin(), kAllFamilies.end()};
  /// Use analytic R, N instead of finite-sample estimates.
  bool exact_covariances = false;

  // geometry
  double coherence = 0.99;
  double radius_mm = 90.0;

  // sources
  Index mvar_order = 6;
  MaskKind source_mask = MaskKind::Dense;
  double innovation_correlation = 0.0;
  /// Correlation used for the exact-covariance Q (off-diagonal, dense mask).
  double exact_source_correlation = 0.5;

  // noise
  Index background_sources = 20;
  MaskKind background_mask = MaskKind::Identity;
  double white_noise_db = -20.0;
  double ridge_rel = 1e-6;

  void validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("experiment config: " + msg); };
    if (m < 2) fail("m must be at least 2");
    if (s < 1) fail("s must be positive");
    if (l0 < 1 || l0 >= m) fail("l0 must satisfy 1 <= l0 < m");
    if (l0 > s) fail("l0 exceeds candidate count");
    if (n_fixed_close < 0 || n_fixed_close > l0) fail("n_fixed_close must lie in [0, l0]");
    if (runs < 1) fail("runs must be at least 1");
    if (snr_grid_db.empty()) fail("snr_grid_db must not be empty");
    for (double v : snr_grid_db)
      if (!std::isfinite(v)) fail("snr_grid_db entries must be finite");
    if (samples_pre < 2 || samples_post < 2) fail("sample blocks need at least 2 samples");
    if (!(delta > 0.0 && delta <= 1.0)) fail("delta must lie in (0, 1]");
    if (indices.empty()) fail("at least one index family is required");
    if (!(coherence >= 0.0 && coherence < 1.0)) fail("coherence must lie in [0, 1)");
    if (!(radius_mm > 0.0)) fail("radius_mm must be positive");
    if (mvar_order < 1) fail("mvar_order must be at least 1");
    if (!(innovation_correlation > -1.0 / std::max<double>(1.0, static_cast<double>(l0 - 1)) &&
          innovation_correlation < 1.0))
      fail("innovation_correlation out of range");
    if (background_sources < 1) fail("background_sources must be at least 1");
    if (background_sources + l0 > s) fail("not enough candidates for background sources");
    if (ridge_rel < 0.0) fail("ridge_rel must be non-negative");
  }
};

struct IndexRun {
  IndexFamily family = IndexFamily::MAI;
  LocalizationResult result;
};

struct RunRecord {
  Index run_id = 0;
  double snr_db = 0.0;
  std::vector<Index> theta0;
  Index r_selected = 0;
  double snr_achieved = 0.0;
  std::vector<IndexRun> results;
  double wall_time = 0.0;  // seconds; informational only, never written to CSV
  std::string error;       // non-empty when the run aborted
};

namespace detail {

inline Matrix mask_matrix(MaskKind kind, Index l) {
  if (kind == MaskKind::Dense) return Matrix::Ones(l, l);
  return Matrix::Identity(l, l);
}

// Fixed cluster: a seeded centre candidate and its nearest neighbours.
inline std::vector<Index> close_cluster(const LeadfieldSet& set, Index count, std::uint64_t seed) {
  if (count == 0) return {};
  Rng rng(derive_seed(seed, {0xc105eULL}));
  // Prefer a centre well inside the sphere so that it has a full neighbourhood.
  std::vector<Index> interior;
  for (Index i = 0; i < set.s(); ++i)
    if (set.positions()[i].norm() < 0.6) interior.push_back(i);
  if (interior.empty()) {
    interior.resize(static_cast<std::size_t>(set.s()));
    std::iota(interior.begin(), interior.end(), Index{0});
  }
  std::uniform_int_distribution<std::size_t> pick(0, interior.size() - 1);
  const Index centre = interior[pick(rng)];
  std::vector<Index> order(static_cast<std::size_t>(set.s()));
  std::iota(order.begin(), order.end(), Index{0});
  const Position c = set.positions()[centre];
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return (set.positions()[a] - c).squaredNorm() < (set.positions()[b] - c).squaredNorm();
  });
  order.resize(static_cast<std::size_t>(count));
  return order;
}

}  // namespace detail

/// Geometry shared by every run of an experiment.
struct ExperimentSetup {
  LeadfieldSet leadfields;
  std::vector<Index> fixed_close;
};

inline ExperimentSetup make_setup(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentSetup setup;
  setup.leadfields = generate_leadfields(cfg.m, cfg.s, cfg.coherence, derive_seed(cfg.seed_base, {0x9e0ULL}));
  setup.fixed_close = detail::close_cluster(setup.leadfields, cfg.n_fixed_close, cfg.seed_base);
  return setup;
}

/// θ0 for one run: the fixed cluster plus l0 − n_fixed_close random candidates.
inline std::vector<Index> draw_sources(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                                       std::uint64_t run_seed) {
  std::vector<Index> theta0 = setup.fixed_close;
  std::set<Index> used(theta0.begin(), theta0.end());
  std::vector<Index> pool;
  for (Index i = 0; i < setup.leadfields.s(); ++i)
    if (!used.count(i)) pool.push_back(i);
  Rng rng(derive_seed(run_seed, {0x7e7aULL}));
  std::shuffle(pool.begin(), pool.end(), rng);
  for (Index k = 0; k < cfg.l0 - cfg.n_fixed_close; ++k) theta0.push_back(pool[static_cast<std::size_t>(k)]);
  return theta0;
}

/// Covariances for one simulated run, together with the source positions.
struct RunCovariances {
  Matrix R;
  Matrix N;
  std::vector<Index> theta0;
  double snr_achieved = 0.0;
};

inline std::uint64_t run_seed(const ExperimentConfig& cfg, std::size_t snr_idx, Index run) {
  return derive_seed(cfg.seed_base, {static_cast<std::uint64_t>(snr_idx) + 1,
                                     static_cast<std::uint64_t>(run) + 1});
}

namespace detail {

inline std::vector<Index> background_columns(const ExperimentConfig& cfg, const LeadfieldSet& lf,
                                             const std::vector<Index>& theta0, std::uint64_t seed) {
  std::set<Index> active(theta0.begin(), theta0.end());
  std::vector<Index> pool;
  for (Index i = 0; i < lf.s(); ++i)
    if (!active.count(i)) pool.push_back(i);
  Rng pick(derive_seed(seed, {0xb6ULL}));
  std::shuffle(pool.begin(), pool.end(), pick);
  return {pool.begin(), pool.begin() + cfg.background_sources};
}

}  // namespace detail

/// Time-series recording of one run (finite-sample mode).
inline Recording simulate_run_recording(const ExperimentConfig& cfg, const ExperimentSetup& setup, double snr_db,
                                        std::uint64_t seed) {
  const std::vector<Index> theta0 = draw_sources(cfg, setup, seed);
  const LeadfieldSet& lf = setup.leadfields;
  MvarOptions src_opt;
  src_opt.innovation_correlation = cfg.innovation_correlation;
  const MvarModel src = random_stable_mvar(cfg.l0, cfg.mvar_order, detail::mask_matrix(cfg.source_mask, cfg.l0),
                                           derive_seed(seed, {0x51ULL}), src_opt);
  const MvarModel bg = random_stable_mvar(cfg.background_sources, cfg.mvar_order,
                                          detail::mask_matrix(cfg.background_mask, cfg.background_sources),
                                          derive_seed(seed, {0xb9ULL}));
  NoiseOptions nopt;
  nopt.white_noise_db = cfg.white_noise_db;
  nopt.background_columns = detail::background_columns(cfg, lf, theta0, seed);
  return simulate_recording(lf, theta0, src, bg, snr_db, cfg.samples_pre, cfg.samples_post,
                            derive_seed(seed, {0x5ecULL}), nopt);
}

inline RunCovariances simulate_run(const ExperimentConfig& cfg, const ExperimentSetup& setup, double snr_db,
                                   std::uint64_t seed) {
  RunCovariances out;
  const LeadfieldSet& lf = setup.leadfields;

  if (cfg.exact_covariances) {
    out.theta0 = draw_sources(cfg, setup, seed);
    const Matrix h0 = select_leadfield(lf, out.theta0);
    const Matrix hb = select_leadfield(lf, detail::background_columns(cfg, lf, out.theta0, seed));
    const Matrix q = make_source_covariance(Vector::Ones(cfg.l0),
                                            detail::mask_matrix(cfg.source_mask, cfg.l0),
                                            cfg.exact_source_correlation);
    Matrix n_bio = hb * hb.transpose();
    const double white = std::pow(10.0, cfg.white_noise_db / 10.0) * n_bio.trace() / static_cast<double>(cfg.m);
    n_bio.diagonal().array() += white;
    const double sig = (h0 * q * h0.transpose()).trace();
    const double gain2 = sig / (std::pow(10.0, snr_db / 10.0) * n_bio.trace());
    const Matrix n = gain2 * n_bio;
    const CovariancePair pair = assemble_covariances(h0, q, n);
    out.R = pair.R;
    out.N = pair.N;
    out.snr_achieved = std::sqrt(sig / n.trace());
    return out;
  }

  const Recording rec = simulate_run_recording(cfg, setup, snr_db, seed);
  out.theta0 = rec.theta0;
  out.R = regularize_pd(estimate_cov(rec.post), cfg.ridge_rel).matrix;
  out.N = regularize_pd(estimate_cov(rec.pre), cfg.ridge_rel).matrix;
  out.snr_achieved = rec.snr;
  return out;
}

/// Localizes one covariance pair with every configured index and records errors.
inline RunRecord localize_run(const ExperimentConfig& cfg, const ExperimentSetup& setup, const RunCovariances& cov,
                              Index run_id, double snr_db) {
  RunRecord rec;
  rec.run_id = run_id;
  rec.snr_db = snr_db;
  rec.theta0 = cov.theta0;
  rec.snr_achieved = cov.snr_achieved;
  const LeadfieldSet& lf = setup.leadfields;
  const ScanContext ctx(lf, cov.R, cov.N);
  rec.r_selected = select_rank(ctx.covariances().R, ctx.covariances().N, cfg.l0, cfg.delta);

  std::vector<Position> truth;
  for (Index i : cov.theta0) truth.push_back(lf.positions()[i] * cfg.radius_mm);
  for (IndexFamily f : cfg.indices) {
    LocalizationConfig lc;
    lc.l0 = cfg.l0;
    lc.delta = cfg.delta;
    lc.family = f;
    lc.rank = rec.r_selected;
    IndexRun ir{f, localize(lc, ctx)};
    for (Index i : ir.result.found) ir.result.errors_mm.push_back(chebyshev_error(lf.positions()[i] * cfg.radius_mm, truth));
    rec.results.push_back(std::move(ir));
  }
  return rec;
}

/// Runs the full sweep. Records are ordered by (SNR level, run id) regardless
/// of `jobs`; every run is a pure function of the config and its derived seed.
inline std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, unsigned jobs = 1) {
  const ExperimentSetup setup = make_setup(cfg);
  const std::size_t n_snr = cfg.snr_grid_db.size();
  const std::size_t total = n_snr * static_cast<std::size_t>(cfg.runs);
  std::vector<RunRecord> records(total);

  auto work = [&](std::size_t task) {
    const std::size_t snr_idx = task / static_cast<std::size_t>(cfg.runs);
    const Index run = static_cast<Index>(task % static_cast<std::size_t>(cfg.runs));
    const double snr = cfg.snr_grid_db[snr_idx];
    const auto t0 = std::chrono::steady_clock::now();
    RunRecord rec;
    try {
      const RunCovariances cov = simulate_run(cfg, setup, snr, run_seed(cfg, snr_idx, run));
      rec = localize_run(cfg, setup, cov, run, snr);
    } catch (const std::exception& e) {
      rec = RunRecord{};
      rec.run_id = run;
      rec.snr_db = snr;
      rec.error = e.what();
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    records[task] = std::move(rec);
  };

  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(total)));
  if (jobs == 1) {
    for (std::size_t t = 0; t < total; ++t) work(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < jobs; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < total; t = next++) work(t);
      });
    for (std::thread& th : pool) th.join();
  }
  return records;
}

// --- aggregation ----------------------------------------------------------

/// Flat error table, one row per (run, SNR, index, iteration).
struct ErrorRow {
  Index run_id = 0;
  double snr_db = 0.0;
  IndexFamily family = IndexFamily::MAI;
  Index iteration = 0;  // 1-based
  double error_mm = 0.0;
};

inline std::vector<ErrorRow> error_rows(const std::vector<RunRecord>& records) {
  std::vector<ErrorRow> rows;
  for (const RunRecord& rec : records)
    for (const IndexRun& ir : rec.results)
      for (std::size_t k = 0; k < ir.result.errors_mm.size(); ++k)
        rows.push_back({rec.run_id, rec.snr_db, ir.family, static_cast<Index>(k + 1), ir.result.errors_mm[k]});
  return rows;
}

enum class ErrorScope { AllIterations, LastTwo };

inline std::string_view to_string(ErrorScope s) {
  return s == ErrorScope::AllIterations ? "all_iterations" : "last_two";
}

/// Errors of one index at one SNR inside a scope. `last_two` keeps
/// iterations l0 − 1 and l0, where l0 is the largest iteration in the table.
inline std::vector<double> select_errors(const std::vector<ErrorRow>& rows, IndexFamily family, double snr_db,
                                         ErrorScope scope) {
  Index l0 = 0;
  for (const ErrorRow& r : rows) l0 = std::max(l0, r.iteration);
  if (scope == ErrorScope::LastTwo && l0 < 2)
    throw ContractError("select_errors: last_two scope needs at least two iterations");
  std::vector<double> out;
  for (const ErrorRow& r : rows) {
    if (r.family != family || r.snr_db != snr_db) continue;
    if (scope == ErrorScope::LastTwo && r.iteration < l0 - 1) continue;
    out.push_back(r.error_mm);
  }
  return out;
}

struct ErrorSummary {
  IndexFamily family = IndexFamily::MAI;
  double snr_db = 0.0;
  ErrorScope scope = ErrorScope::AllIterations;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n − 1); 0 for a single value
  double median = 0.0;
  std::size_t n = 0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw ContractError("median_of: empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline ErrorSummary summarize(const std::vector<double>& e) {
  if (e.empty()) throw ContractError("summarize: empty scope");
  ErrorSummary s;
  s.n = e.size();
  s.mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  if (e.size() > 1) {
    double ss = 0.0;
    for (double x : e) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(e.size() - 1));
  }
  s.median = median_of(e);
  return s;
}

inline std::vector<double> snr_levels(const std::vector<ErrorRow>& rows) {
  std::vector<double> out;
  for (const ErrorRow& r : rows)
    if (std::find(out.begin(), out.end(), r.snr_db) == out.end()) out.push_back(r.snr_db);
  return out;
}

inline std::vector<IndexFamily> families_in(const std::vector<ErrorRow>& rows) {
  std::vector<IndexFamily> out;
  for (IndexFamily f : kAllFamilies)
    if (std::any_of(rows.begin(), rows.end(), [&](const ErrorRow& r) { return r.family == f; })) out.push_back(f);
  return out;
}

inline std::vector<ErrorSummary> aggregate_rows(const std::vector<ErrorRow>& rows, ErrorScope scope) {
  if (rows.empty()) throw ContractError("aggregate_errors: no records");
  std::vector<ErrorSummary> out;
  for (double snr : snr_levels(rows))
    for (IndexFamily f : families_in(rows)) {
      const auto e = select_errors(rows, f, snr, scope);
      if (e.empty()) continue;
      ErrorSummary s = summarize(e);
      s.family = f;
      s.snr_db = snr;
      s.scope = scope;
      out.push_back(s);
    }
  if (out.empty()) throw ContractError("aggregate_errors: empty scope");
  return out;
}

/// Per-index, per-SNR mean and sample standard deviation of localization errors.
inline std::vector<ErrorSummary> aggregate_errors(const std::vector<RunRecord>& records, ErrorScope scope) {
  return aggregate_rows(error_rows(records), scope);
}

/// Full-rank / reduced-rank pairs tested as H1: errors(first) > errors(second).
inline std::vector<std::pair<IndexFamily, IndexFamily>> comparison_pairs() {
  return {{IndexFamily::MAI, IndexFamily::MAI_RR_I},
          {IndexFamily::MAI_EXT, IndexFamily::MAI_RR_I},
          {IndexFamily::MPZ, IndexFamily::MPZ_RR_I},
          {IndexFamily::MPZ_EXT, IndexFamily::MPZ_RR_I}};
}

struct PValueRow {
  double snr_db = 0.0;
  ErrorScope scope = ErrorScope::AllIterations;
  IndexFamily a = IndexFamily::MAI;
  IndexFamily b = IndexFamily::MAI_RR_I;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  double median_a = 0.0;
  double median_b = 0.0;
  RankSumResult test;
};

/// Pools per-source errors across runs within the scope and tests each pair.
inline std::vector<PValueRow> pvalue_table(const std::vector<ErrorRow>& rows) {
  std::vector<PValueRow> out;
  const auto fams = families_in(rows);
  auto has = [&](IndexFamily f) { return std::find(fams.begin(), fams.end(), f) != fams.end(); };
  for (ErrorScope scope : {ErrorScope::AllIterations, ErrorScope::LastTwo})
    for (double snr : snr_levels(rows))
      for (auto [a, b] : comparison_pairs()) {
        if (!has(a) || !has(b)) continue;
        const auto ea = select_errors(rows, a, snr, scope);
        const auto eb = select_errors(rows, b, snr, scope);
        if (ea.empty() || eb.empty()) continue;
        PValueRow row;
        row.snr_db = snr;
        row.scope = scope;
        row.a = a;
        row.b = b;
        row.n_a = ea.size();
        row.n_b = eb.size();
        row.median_a = median_of(ea);
        row.median_b = median_of(eb);
        row.test = rank_sum_test(ea, eb);
        out.push_back(row);
      }
  return out;
}

/// snr → (rank → count).
using RankHistogram = std::map<double, std::map<Index, Index>>;

inline RankHistogram rank_histogram(const std::vector<RunRecord>& records) {
  RankHistogram h;
  for (const RunRecord& rec : records)
    if (rec.error.empty()) ++h[rec.snr_db][rec.r_selected];
  return h;
}

}  // namespace mvpure

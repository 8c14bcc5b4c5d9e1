#pragma once

// Sequential source discovery with a multi-source activity index, rank
// selection from the spectrum of R N⁻¹, and saturation-based source counting.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include "mvpure/errors.hpp"
#include "mvpure/filters.hpp"
#include "mvpure/forward_model.hpp"
#include "mvpure/indices.hpp"
#include "mvpure/matcore.hpp"

namespace mvpure {

/// Smallest l with Σ_{i≤l} λᵢ / Σ_{i≤l0} λᵢ > delta (strict), over the
/// l0 leading entries of `eigenvalues` (non-increasing). Falls back to l0
/// when no partial sum exceeds delta (delta = 1).
inline Index select_rank_from_eigenvalues(const Vector& eigenvalues, Index l0, double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw ContractError("select_rank: delta must lie in (0, 1]");
  if (l0 < 1 || l0 > eigenvalues.size()) throw ContractError("select_rank: l0 outside [1, m]");
  const Vector top = eigenvalues.head(l0);
  const double total = top.sum();
  if (!(total > 0.0)) throw ContractError("select_rank: non-positive eigenvalue mass");
  double partial = 0.0;
  for (Index l = 1; l <= l0; ++l) {
    partial += top[l - 1];
    if (partial / total > delta) return l;
  }
  return l0;
}

/// Eigenvalues of R N⁻¹ (non-increasing), via N^{-1/2} R N^{-1/2}.
inline Vector rn_eigenvalues(const Matrix& r, const Matrix& n) { return ratio_eigenvalues(r, n); }

inline Index select_rank(const Matrix& r, const Matrix& n, Index l0, double delta) {
  return select_rank_from_eigenvalues(rn_eigenvalues(r, n), l0, delta);
}

/// Per-scan precomputation: R⁻¹L, N⁻¹L and N R⁻¹L for the whole dictionary,
/// so that S, G, T for any tuple are small inner products.
class ScanContext {
 public:
  ScanContext(const LeadfieldSet& set, const Matrix& r, const Matrix& n)
      : set_(&set), cov_(PreparedCovariances::create(r, n)) {
    if (set.m() != cov_.R.rows()) throw ContractError("ScanContext: sensor count mismatch");
    r_l_ = cov_.R_inv * set.columns();
    n_l_ = cov_.N_inv * set.columns();
    nr_l_ = cov_.N * r_l_;
  }

  const LeadfieldSet& leadfields() const { return *set_; }
  const PreparedCovariances& covariances() const { return cov_; }

  CoreMatrices core(const std::vector<Index>& theta) const {
    const Index l = static_cast<Index>(theta.size());
    Matrix s(l, l), g(l, l), t(l, l);
    const Matrix& lf = set_->columns();
    for (Index a = 0; a < l; ++a) {
      const Index i = theta[static_cast<std::size_t>(a)];
      for (Index b = a; b < l; ++b) {
        const Index j = theta[static_cast<std::size_t>(b)];
        s(a, b) = s(b, a) = lf.col(i).dot(r_l_.col(j));
        g(a, b) = g(b, a) = lf.col(i).dot(n_l_.col(j));
        t(a, b) = t(b, a) = r_l_.col(i).dot(nr_l_.col(j));
      }
    }
    return {std::move(s), std::move(g), std::move(t), false};
  }

 private:
  const LeadfieldSet* set_;
  PreparedCovariances cov_;
  Matrix r_l_;
  Matrix n_l_;
  Matrix nr_l_;
};

struct LocalizationConfig {
  Index l0 = 1;
  double delta = 0.8;
  IndexFamily family = IndexFamily::MAI;
  /// Fixed rank; when empty it is selected from R, N with `delta`.
  std::optional<Index> rank;
  /// Found sources are removed from the candidate pool of later iterations.
  bool exclusion = true;

  void validate() const {
    if (l0 < 1) throw ContractError("LocalizationConfig: l0 must be at least 1");
    if (!(delta > 0.0 && delta <= 1.0)) throw ContractError("LocalizationConfig: delta must lie in (0, 1]");
    if (rank && *rank < 1) throw ContractError("LocalizationConfig: rank must be at least 1");
  }
};

struct LocalizationResult {
  std::vector<Index> found;
  std::vector<double> index_trace;  // best index value per iteration
  Index r_used = 0;
  std::vector<double> errors_mm;    // filled when ground truth is known
  std::vector<Index> evaluations;   // index evaluations per iteration
  Index ties = 0;                   // argmax ties resolved by lowest index
};

/// Sequential discovery: at iteration l every remaining candidate i is scored
/// with the index at (found ∪ {i}) and the argmax is appended. Ties go to the
/// lowest candidate index. `q_hint` is an s×s candidate covariance used to
/// whiten the full-rank branch of the RR-I families; identity otherwise.
inline LocalizationResult localize(const LocalizationConfig& config, const ScanContext& ctx,
                                   const std::optional<Matrix>& q_hint = std::nullopt) {
  config.validate();
  const LeadfieldSet& set = ctx.leadfields();
  const Index s = set.s();
  if (q_hint && (q_hint->rows() != s || q_hint->cols() != s))
    throw ContractError("localize: q_hint must be s x s");

  LocalizationResult out;
  out.r_used = config.rank ? *config.rank
                           : select_rank(ctx.covariances().R, ctx.covariances().N,
                                         std::min(config.l0, set.m()), config.delta);
  const IndexSpec spec{config.family, out.r_used};

  std::vector<char> taken(static_cast<std::size_t>(s), 0);
  std::vector<Index> theta;
  for (Index l = 1; l <= config.l0; ++l) {
    double best = -std::numeric_limits<double>::infinity();
    Index best_i = -1;
    Index evals = 0;
    theta.push_back(-1);
    for (Index i = 0; i < s; ++i) {
      if (config.exclusion && taken[static_cast<std::size_t>(i)]) continue;
      if (!config.exclusion &&
          std::find(out.found.begin(), out.found.end(), i) != out.found.end())
        continue;  // a tuple with a repeated source has a rank-deficient leadfield
      theta.back() = i;
      const CoreMatrices plain = ctx.core(theta);
      double v;
      if (q_hint) {
        Matrix q(l, l);
        for (Index a = 0; a < l; ++a)
          for (Index b = 0; b < l; ++b) q(a, b) = (*q_hint)(theta[a], theta[b]);
        v = iterative_index(spec, plain, whiten(plain, q)).value;
      } else {
        v = iterative_index(spec, plain).value;
      }
      ++evals;
      if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "localize: non-finite index value at candidate " << i;
        throw ContractError(os.str());
      }
      if (v > best) {
        best = v;
        best_i = i;
      } else if (v == best) {
        ++out.ties;
      }
    }
    if (best_i < 0) throw ContractError("localize: candidate pool exhausted");
    theta.back() = best_i;
    taken[static_cast<std::size_t>(best_i)] = 1;
    out.found.push_back(best_i);
    out.index_trace.push_back(best);
    out.evaluations.push_back(evals);
  }
  return out;
}

inline LocalizationResult localize(const LocalizationConfig& config, const Matrix& r, const Matrix& n,
                                   const LeadfieldSet& set,
                                   const std::optional<Matrix>& q_hint = std::nullopt) {
  const ScanContext ctx(set, r, n);
  return localize(config, ctx, q_hint);
}

struct SourceCountEstimate {
  Index l0 = 1;
  bool plateau_found = false;
  bool near_zero = false;  // index values indistinguishable from the no-signal case
  std::vector<double> trace;
};

inline constexpr double kNearZeroIndex = 1e-9;

/// Remark-style saturation estimate: grow l with the sequential localizer and
/// return the smallest l whose best value gains less than plateau_tol·|value|
/// at the next step.
inline SourceCountEstimate estimate_source_count(const Matrix& r, const Matrix& n, const LeadfieldSet& set,
                                                 Index l_max, double plateau_tol,
                                                 IndexFamily family = IndexFamily::MAI) {
  if (l_max < 1 || l_max > set.m()) throw ContractError("estimate_source_count: l_max outside [1, m]");
  if (family != IndexFamily::MAI && family != IndexFamily::MPZ)
    throw ContractError("estimate_source_count: only MAI and MPZ saturate");
  LocalizationConfig cfg;
  cfg.l0 = l_max;
  cfg.family = family;
  cfg.rank = l_max;
  const LocalizationResult res = localize(cfg, r, n, set);

  SourceCountEstimate est;
  est.trace = res.index_trace;
  if (std::abs(est.trace.front()) < kNearZeroIndex) {
    est.l0 = 1;
    est.near_zero = true;
    est.plateau_found = true;
    return est;
  }
  for (std::size_t l = 0; l + 1 < est.trace.size(); ++l) {
    const double gain = est.trace[l + 1] - est.trace[l];
    if (gain < plateau_tol * std::abs(est.trace[l])) {
      est.l0 = static_cast<Index>(l + 1);
      est.plateau_found = true;
      return est;
    }
  }
  est.l0 = l_max;
  est.plateau_found = false;
  return est;
}

/// min over true sources of the max-coordinate distance.
inline double chebyshev_error(const Position& found, const std::vector<Position>& truth) {
  if (truth.empty()) throw ContractError("chebyshev_error: empty truth set");
  double best = std::numeric_limits<double>::infinity();
  for (const Position& t : truth) best = std::min(best, (found - t).cwiseAbs().maxCoeff());
  return best;
}

}  // namespace mvpure

#pragma once

// Exact-covariance invariant suite behind `mvpure selftest`. Each check runs
// on random models (random dictionary, random SPD Q and N) and reports the
// worst residual against its tolerance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mvpure/filters.hpp"
#include "mvpure/forward_model.hpp"
#include "mvpure/indices.hpp"
#include "mvpure/localizer.hpp"
#include "mvpure/matcore.hpp"
#include "mvpure/random.hpp"

namespace mvpure {

struct ExactModel {
  LeadfieldSet set;
  std::vector<Index> theta0;
  Matrix Q;
  Matrix N;
  Matrix R;

  Matrix H0() const { return select_leadfield(set, theta0); }
};

inline Matrix random_spd(Index n, double floor, Rng& rng) {
  const Matrix a = gaussian_matrix(n, n, rng);
  Matrix out = a * a.transpose() / static_cast<double>(n);
  out.diagonal().array() += floor;
  return out;
}

/// Random exact model: s candidates with unit columns, l0 of them active.
inline ExactModel random_exact_model(std::uint64_t seed, Index m, Index l0, Index s, double coherence = 0.0) {
  ExactModel out;
  out.set = generate_leadfields(m, s, coherence, derive_seed(seed, {1}));
  Rng rng(derive_seed(seed, {2}));
  std::vector<Index> all(static_cast<std::size_t>(s));
  for (Index i = 0; i < s; ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  out.theta0.assign(all.begin(), all.begin() + l0);
  out.Q = random_spd(l0, 0.2, rng);
  out.N = random_spd(m, 0.5, rng);
  out.R = assemble_covariances(out.H0(), out.Q, out.N).R;
  return out;
}

/// A random l-tuple of distinct candidates.
inline std::vector<Index> random_tuple(const LeadfieldSet& set, Index l, Rng& rng) {
  std::vector<Index> all(static_cast<std::size_t>(set.s()));
  for (Index i = 0; i < set.s(); ++i) all[static_cast<std::size_t>(i)] = i;
  std::shuffle(all.begin(), all.end(), rng);
  return {all.begin(), all.begin() + l};
}

struct SelfTestRow {
  std::string name;
  std::size_t cases = 0;
  double worst = 0.0;  // largest relative residual, or most negative slack
  double tol = 0.0;
  bool passed = false;
};

struct SelfTestOptions {
  std::uint64_t seed = 1;
  std::size_t models = 20;
  std::size_t tuples = 20;
  Index m = 12;
  Index l0 = 3;
  Index s = 40;
};

namespace detail {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

}  // namespace detail

inline std::vector<SelfTestRow> run_selftest(const SelfTestOptions& opt = {}) {
  SelfTestRow ident{"(S0')^-1 = (G0')^-1 + I", 0, 0.0, 1e-8, false};
  SelfTestRow eig{"lambda_i(R N^-1) = lambda_i(G0') + 1", 0, 0.0, 1e-8, false};
  SelfTestRow loewner{"T' >= S'(G')^-1 S', equality at theta0", 0, 0.0, 1e-8, false};
  SelfTestRow thm{"MAI_RR(theta0,r) = MPZ_RR(theta0,r) = sum lambda_i(G0')", 0, 0.0, 1e-8, false};
  SelfTestRow gap{"gap MAI - MAI_RR = MPZ - MPZ_RR at theta0", 0, 0.0, 1e-8, false};
  SelfTestRow mono{"MAI_RR / MPZ_RR non-decreasing in r", 0, 0.0, 1e-9, false};
  SelfTestRow dom{"MAI_RR <= MAI_ext, MPZ_RR <= MPZ_ext", 0, 0.0, 1e-9, false};
  SelfTestRow bound{"MAI_RR(theta,r) <= sum lambda_i(R N^-1) - r", 0, 0.0, 1e-9, false};
  SelfTestRow unbiased{"theta0 maximizes MAI over random tuples", 0, 0.0, 1e-9, false};

  for (std::size_t k = 0; k < opt.models; ++k) {
    const ExactModel mdl = random_exact_model(derive_seed(opt.seed, {0x5e1fULL, k}), opt.m, opt.l0, opt.s);
    const Index l0 = opt.l0;
    const Matrix h0 = mdl.H0();
    const CoreMatrices c0 = core_matrices(h0, mdl.R, mdl.N, mdl.Q);
    const SymEig g0 = sym_eig(c0.G);
    const Vector rn = rn_eigenvalues(mdl.R, mdl.N);

    ident.worst = std::max(ident.worst, detail::rel_err(spd_inverse(c0.S),
                                                        Matrix(spd_inverse(c0.G) + Matrix::Identity(l0, l0))));
    ++ident.cases;
    for (Index i = 0; i < l0; ++i) eig.worst = std::max(eig.worst, detail::rel_err(rn[i], g0.eigenvalues[i] + 1.0));
    ++eig.cases;

    const double mai0 = mai(c0).value;
    const double mpz0 = mpz(c0).value;
    for (Index r = 1; r <= l0; ++r) {
      const double want = g0.eigenvalues.head(r).sum();
      const double a = mai_rr(c0, r).value;
      const double b = mpz_rr(c0, r).value;
      thm.worst = std::max({thm.worst, detail::rel_err(a, want), detail::rel_err(b, want)});
      const double tail = g0.eigenvalues.tail(l0 - r).sum();
      gap.worst = std::max({gap.worst, detail::rel_err(mai0 - a, tail), detail::rel_err(mpz0 - b, tail)});
      dom.worst = std::max({dom.worst, detail::rel_err(mai_ext(c0, r).value, a), detail::rel_err(mpz_ext(c0, r).value, b)});
    }
    ++thm.cases;
    ++gap.cases;

    {
      const Matrix rhs = c0.S * spd_inverse(c0.G) * c0.S;
      loewner.worst = std::max(loewner.worst, detail::rel_err(c0.T, rhs));
    }

    Rng rng(derive_seed(opt.seed, {0x7a9ULL, k}));
    for (std::size_t t = 0; t < opt.tuples; ++t) {
      const std::vector<Index> theta = random_tuple(mdl.set, l0, rng);
      const Matrix h = select_leadfield(mdl.set, theta);
      const CoreMatrices c = core_matrices(h, mdl.R, mdl.N, mdl.Q);

      // T' − S'(G')⁻¹S' ⪰ 0: slack is its smallest eigenvalue relative to ‖T'‖.
      Matrix diff = c.T - c.S * spd_inverse(c.G) * c.S;
      diff = (0.5 * (diff + diff.transpose())).eval();
      const double scale = std::max(1.0, sym_eig(c.T).eigenvalues[0]);
      loewner.worst = std::max(loewner.worst, -sym_eig(diff).eigenvalues.minCoeff() / scale);
      ++loewner.cases;

      double prev_a = -std::numeric_limits<double>::infinity();
      double prev_b = prev_a;
      for (Index r = 1; r <= l0; ++r) {
        const double a = mai_rr(c, r).value;
        const double b = mpz_rr(c, r).value;
        mono.worst = std::max({mono.worst, prev_a - a, prev_b - b});
        prev_a = a;
        prev_b = b;
        dom.worst = std::max({dom.worst, a - mai_ext(c, r).value, b - mpz_ext(c, r).value});
        bound.worst = std::max(bound.worst, a - (rn.head(r).sum() - static_cast<double>(r)));
      }
      mono.worst = std::max({mono.worst, detail::rel_err(prev_a, mai(c).value), detail::rel_err(prev_b, mpz(c).value)});
      ++mono.cases;
      ++dom.cases;
      ++bound.cases;

      unbiased.worst = std::max(unbiased.worst, (mai(c).value - mai0) / std::max(1.0, std::abs(mai0)));
      ++unbiased.cases;
    }
  }

  std::vector<SelfTestRow> rows = {ident, eig, loewner, thm, gap, mono, dom, bound, unbiased};
  for (SelfTestRow& r : rows) r.passed = r.worst <= r.tol;
  return rows;
}

}  // namespace mvpure

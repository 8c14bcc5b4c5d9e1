#pragma once

// Core matrices S = HᵗR⁻¹H, G = HᵗN⁻¹H, T = HᵗR⁻¹NR⁻¹H (optionally on the
// whitened leadfield H' = H Q^{1/2}), the LCMV filter and the MV-PURE
// reduced-rank filter.

#include <Eigen/Dense>

#include <optional>
#include <sstream>

#include "mvpure/errors.hpp"
#include "mvpure/matcore.hpp"

namespace mvpure {

inline constexpr double kRankRatioTol = 1e-10;
inline constexpr double kIllConditioned = 1e12;

struct CoreMatrices {
  Matrix S;
  Matrix G;
  Matrix T;
  bool whitened = false;

  Index dim() const { return S.rows(); }
};

/// R⁻¹ and N⁻¹ computed once and shared read-only across a scan.
struct PreparedCovariances {
  Matrix R;
  Matrix N;
  Matrix R_inv;
  Matrix N_inv;

  static PreparedCovariances create(const Matrix& r, const Matrix& n) {
    if (r.rows() != n.rows() || r.cols() != n.cols())
      throw ContractError("PreparedCovariances: R and N dimensions differ");
    PreparedCovariances out;
    out.R = symmetrized(r);
    out.N = symmetrized(n);
    out.R_inv = spd_inverse(out.R);
    out.N_inv = spd_inverse(out.N);
    return out;
  }
};

namespace detail {

inline void require_full_column_rank(const Matrix& h, const char* who) {
  if (h.cols() < 1) throw ContractError(std::string(who) + ": empty leadfield");
  if (h.cols() > h.rows()) throw ContractError(std::string(who) + ": more sources than sensors");
  Eigen::JacobiSVD<Matrix> svd(h);
  const Vector& sv = svd.singularValues();
  const double smin = sv[sv.size() - 1];
  if (!(smin > kRankRatioTol * sv[0])) {
    std::ostringstream os;
    os << who << ": leadfield is rank deficient, smallest singular value " << smin
       << " (largest " << sv[0] << ")";
    throw ContractError(os.str());
  }
}

inline Matrix sym_part(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace detail

/// Builds CoreMatrices from already computed S, G, T blocks.
inline CoreMatrices core_from_blocks(Matrix s, Matrix g, Matrix t, bool whitened) {
  if (s.rows() != g.rows() || s.rows() != t.rows() || s.rows() != s.cols() || g.rows() != g.cols() ||
      t.rows() != t.cols())
    throw ContractError("core matrices: S, G, T dimensions disagree");
  return {detail::sym_part(s), detail::sym_part(g), detail::sym_part(t), whitened};
}

/// S' = Q^{1/2} S Q^{1/2} etc.; identical to recomputing with H' = H Q^{1/2}.
inline CoreMatrices whiten(const CoreMatrices& c, const Matrix& q) {
  if (q.rows() != c.dim() || q.cols() != c.dim()) throw ContractError("whiten: Q must be l x l");
  if (!(sym_eig(q).eigenvalues.minCoeff() > 0.0)) throw ContractError("whiten: Q is not positive definite");
  const Matrix root = psd_sqrt(q);
  return core_from_blocks(root * c.S * root, root * c.G * root, root * c.T * root, true);
}

inline CoreMatrices core_matrices(const Matrix& h, const PreparedCovariances& cov,
                                  const std::optional<Matrix>& q = std::nullopt) {
  if (h.rows() != cov.R.rows()) throw ContractError("core_matrices: leadfield rows must equal sensor count");
  detail::require_full_column_rank(h, "core_matrices");
  Matrix hw = h;
  if (q) {
    if (q->rows() != h.cols() || q->cols() != h.cols()) throw ContractError("core_matrices: Q must be l x l");
    if (!(sym_eig(*q).eigenvalues.minCoeff() > 0.0))
      throw ContractError("core_matrices: Q is not positive definite");
    hw = h * psd_sqrt(*q);
  }
  const Matrix rh = cov.R_inv * hw;
  const Matrix nh = cov.N_inv * hw;
  return core_from_blocks(hw.transpose() * rh, hw.transpose() * nh, rh.transpose() * cov.N * rh,
                          q.has_value());
}

inline CoreMatrices core_matrices(const Matrix& h, const Matrix& r, const Matrix& n,
                                  const std::optional<Matrix>& q = std::nullopt) {
  return core_matrices(h, PreparedCovariances::create(r, n), q);
}

enum class FilterKind { LCMV, MVPURE };

struct SpatialFilter {
  Matrix W;  // l×m
  Index rank = 0;
  FilterKind kind = FilterKind::LCMV;
  double condition = 1.0;        // cond(S) (or cond(S') for whitened MV-PURE)
  bool ill_conditioned = false;  // condition > 1e12; reported, never fatal
};

/// W = S⁻¹ HᵗR⁻¹: minimum output power subject to W H = I.
inline SpatialFilter lcmv(const Matrix& h, const Matrix& r) {
  if (h.rows() != r.rows()) throw ContractError("lcmv: leadfield rows must equal sensor count");
  detail::require_full_column_rank(h, "lcmv");
  const Matrix r_inv = spd_inverse(r);
  const Matrix s = detail::sym_part(h.transpose() * r_inv * h);
  SpatialFilter out;
  out.W = spd_inverse(s) * h.transpose() * r_inv;
  out.rank = h.cols();
  out.kind = FilterKind::LCMV;
  out.condition = condition_number(s);
  out.ill_conditioned = out.condition > kIllConditioned;
  return out;
}

/// W_N = G⁻¹ HᵗN⁻¹, the LCMV filter when only noise is observed.
inline SpatialFilter lcmv_noise(const Matrix& h, const Matrix& n) { return lcmv(h, n); }

/// W_RR = P⁽ʳ⁾ W, with P⁽ʳ⁾ the projector on the r leading eigenvectors of S
/// (S' and the whitened LCMV filter Q^{-1/2} W when Q is supplied).
inline SpatialFilter mvpure(const Matrix& h, const Matrix& r, Index rank,
                            const std::optional<Matrix>& q = std::nullopt) {
  const Index l = h.cols();
  if (rank < 1 || rank > l) {
    std::ostringstream os;
    os << "mvpure: rank " << rank << " outside [1, " << l << "]";
    throw ContractError(os.str());
  }
  Matrix hw = h;
  if (q) {
    if (q->rows() != l || q->cols() != l) throw ContractError("mvpure: Q must be l x l");
    hw = h * psd_sqrt(*q);
  }
  SpatialFilter full = lcmv(hw, r);
  const Matrix r_inv = spd_inverse(r);
  const Matrix s = detail::sym_part(hw.transpose() * r_inv * hw);
  const SpectralProjector p = top_r_projector(s, rank);
  SpatialFilter out = full;
  out.W = p.matrix * full.W;
  out.rank = rank;
  out.kind = FilterKind::MVPURE;
  return out;
}

}  // namespace mvpure

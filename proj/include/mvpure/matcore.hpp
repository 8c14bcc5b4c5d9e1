#pragma once

// Symmetric / positive-semidefinite kernels shared by every other module.
//
// Eigenvalues are always reported in non-increasing order. Tolerances are
// relative to the largest eigenvalue magnitude (or max |entry| for the
// symmetry check) unless stated otherwise.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mvpure/errors.hpp"

namespace mvpure {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Eigendecomposition of a symmetric matrix. Column i of `eigenvectors`
/// pairs with `eigenvalues[i]`; eigenvalues are non-increasing.
struct SymEig {
  Vector eigenvalues;
  Matrix eigenvectors;
};

/// Orthogonal projector onto the span of the leading `rank` eigenvectors.
struct SpectralProjector {
  Matrix matrix;
  Index rank = 0;
};

inline constexpr double kSymmetryTol = 1e-12;
inline constexpr double kPsdClampTol = 1e-10;

namespace detail {

inline void require_square(const Matrix& a, const char* who) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << who << ": expected a square matrix, got " << a.rows() << "x" << a.cols();
    throw ContractError(os.str());
  }
}

inline double spectral_scale(const Vector& eigenvalues) {
  if (eigenvalues.size() == 0) return 0.0;
  return eigenvalues.cwiseAbs().maxCoeff();
}

// Lexicographic "greater" on vectors; used to order eigenvectors inside a
// degenerate eigenspace so that the basis is reproducible.
inline bool lex_greater(const Vector& a, const Vector& b) {
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return true;
    if (a[i] < b[i]) return false;
  }
  return false;
}

}  // namespace detail

/// Returns (A + Aᵗ)/2, rejecting inputs whose asymmetry exceeds
/// `rel_tol` times the largest absolute entry.
inline Matrix symmetrized(const Matrix& a, double rel_tol = kSymmetryTol) {
  detail::require_square(a, "symmetrized");
  if (a.size() == 0) return a;
  const double scale = a.cwiseAbs().maxCoeff();
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > rel_tol * scale) {
    std::ostringstream os;
    os << "matrix is not symmetric: max |A - A^t| = " << asym << " vs max |A| = " << scale;
    throw ContractError(os.str());
  }
  return 0.5 * (a + a.transpose());
}

/// Symmetric eigendecomposition with non-increasing eigenvalues.
///
/// Sign convention: the largest-magnitude entry of every eigenvector is
/// positive (first such entry on exact magnitude ties). Within a cluster of
/// eigenvalues equal to 1e-12 relative, eigenvectors are ordered
/// lexicographically (largest first), which makes projectors on degenerate
/// spectra deterministic but basis dependent.
inline SymEig sym_eig(const Matrix& a) {
  const Matrix sym = symmetrized(a);
  const Index n = sym.rows();
  SymEig out;
  if (n == 0) return out;

  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  if (solver.info() != Eigen::Success) throw ContractError("sym_eig: eigensolver failed");

  // Eigen returns ascending order.
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();

  for (Index j = 0; j < n; ++j) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < n; ++i) {
      const double v = std::abs(out.eigenvectors(i, j));
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    if (out.eigenvectors(arg, j) < 0) out.eigenvectors.col(j) *= -1.0;
  }

  const double tie_tol = 1e-12 * std::max(detail::spectral_scale(out.eigenvalues),
                                          std::numeric_limits<double>::min());
  Index start = 0;
  while (start < n) {
    Index stop = start + 1;
    while (stop < n && out.eigenvalues[stop - 1] - out.eigenvalues[stop] <= tie_tol) ++stop;
    if (stop - start > 1) {
      std::vector<Index> order(static_cast<std::size_t>(stop - start));
      std::iota(order.begin(), order.end(), start);
      std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
        return detail::lex_greater(out.eigenvectors.col(x), out.eigenvectors.col(y));
      });
      const Matrix block = out.eigenvectors.middleCols(start, stop - start);
      for (std::size_t k = 0; k < order.size(); ++k)
        out.eigenvectors.col(start + static_cast<Index>(k)) = block.col(order[k] - start);
    }
    start = stop;
  }
  return out;
}

/// Principal square root of a PSD matrix. Eigenvalues down to
/// -1e-10·λ_max are clamped to zero; anything more negative is rejected.
inline Matrix psd_sqrt(const Matrix& a) {
  const SymEig e = sym_eig(a);
  if (e.eigenvalues.size() == 0) return Matrix(0, 0);
  const double scale = detail::spectral_scale(e.eigenvalues);
  const double lmin = e.eigenvalues.minCoeff();
  if (lmin < -kPsdClampTol * scale) {
    std::ostringstream os;
    os << "psd_sqrt: matrix is indefinite, eigenvalue " << lmin << " (lambda_max " << scale << ")";
    throw ContractError(os.str());
  }
  const Vector root = e.eigenvalues.cwiseMax(0.0).cwiseSqrt();
  const Matrix out = e.eigenvectors * root.asDiagonal() * e.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

namespace detail {

inline SymEig require_pd(const Matrix& a, const char* who) {
  SymEig e = sym_eig(a);
  if (e.eigenvalues.size() == 0) return e;
  const double lmin = e.eigenvalues.minCoeff();
  if (!(lmin > 0.0)) {
    std::ostringstream os;
    os << who << ": matrix is not positive definite, smallest eigenvalue " << lmin;
    throw ContractError(os.str());
  }
  return e;
}

inline Matrix spectral_function(const SymEig& e, const Vector& values) {
  const Matrix out = e.eigenvectors * values.asDiagonal() * e.eigenvectors.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/// Inverse of a symmetric positive definite matrix via its eigendecomposition.
inline Matrix spd_inverse(const Matrix& a) {
  const SymEig e = detail::require_pd(a, "spd_inverse");
  return detail::spectral_function(e, e.eigenvalues.cwiseInverse());
}

/// A^{-1/2} for symmetric positive definite A.
inline Matrix spd_inv_sqrt(const Matrix& a) {
  const SymEig e = detail::require_pd(a, "spd_inv_sqrt");
  return detail::spectral_function(e, e.eigenvalues.cwiseSqrt().cwiseInverse());
}

/// λ_max / λ_min of a symmetric positive definite matrix (infinity if singular).
inline double condition_number(const Matrix& a) {
  const SymEig e = sym_eig(a);
  if (e.eigenvalues.size() == 0) return 1.0;
  const double lmin = e.eigenvalues.minCoeff();
  if (!(lmin > 0.0)) return std::numeric_limits<double>::infinity();
  return e.eigenvalues.maxCoeff() / lmin;
}

/// P = V I^r Vᵗ from the eigendecomposition of A. r = dim(A) gives the exact identity.
inline SpectralProjector top_r_projector(const Matrix& a, Index r) {
  detail::require_square(a, "top_r_projector");
  const Index n = a.rows();
  if (r < 1 || r > n) {
    std::ostringstream os;
    os << "top_r_projector: rank " << r << " outside [1, " << n << "]";
    throw ContractError(os.str());
  }
  if (r == n) {
    symmetrized(a);
    return {Matrix::Identity(n, n), r};
  }
  const SymEig e = sym_eig(a);
  const Matrix vr = e.eigenvectors.leftCols(r);
  Matrix p = vr * vr.transpose();
  p = (0.5 * (p + p.transpose())).eval();
  return {std::move(p), r};
}

/// A ⪰ B test: the smallest eigenvalue of A − B must be ≥ −tol·scale, where
/// scale is the largest eigenvalue magnitude of A and B.
inline bool loewner_geq(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream os;
    os << "loewner_geq: dimension mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows()
       << "x" << b.cols();
    throw ContractError(os.str());
  }
  if (a.size() == 0) return true;
  const double scale = std::max(detail::spectral_scale(sym_eig(a).eigenvalues),
                                detail::spectral_scale(sym_eig(b).eigenvalues));
  const Matrix diff = 0.5 * ((a - b) + (a - b).transpose());
  const Vector ev = sym_eig(diff).eigenvalues;
  return ev.minCoeff() >= -tol * scale;
}

/// Eigenvalues (non-increasing) of numer·denom⁻¹ for SPD numer and denom,
/// computed from the congruence denom^{-1/2} numer denom^{-1/2}.
inline Vector ratio_eigenvalues(const Matrix& numer, const Matrix& denom) {
  const Matrix w = spd_inv_sqrt(denom);
  const Matrix c = w * symmetrized(numer) * w;
  return sym_eig(0.5 * (c + c.transpose())).eigenvalues;
}

/// Same spectrum as ratio_eigenvalues, via numer^{1/2} denom⁻¹ numer^{1/2}.
inline Vector ratio_eigenvalues_alt(const Matrix& numer, const Matrix& denom) {
  const Matrix root = psd_sqrt(numer);
  const Matrix c = root * spd_inverse(denom) * root;
  return sym_eig(0.5 * (c + c.transpose())).eigenvalues;
}

/// Smallest / largest singular value ratio; used for column-rank checks.
inline double singular_value_ratio(const Matrix& h) {
  if (h.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(h);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv[0] == 0.0) return 0.0;
  return sv[sv.size() - 1] / sv[0];
}

}  // namespace mvpure

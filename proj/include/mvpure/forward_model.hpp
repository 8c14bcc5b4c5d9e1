#pragma once

// Synthetic leadfield dictionaries, ground-truth source models and exact
// covariance assembly R = H0 Q H0ᵗ + N.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <istream>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mvpure/errors.hpp"
#include "mvpure/matcore.hpp"
#include "mvpure/random.hpp"

namespace mvpure {

using Position = Eigen::Vector3d;

/// Dictionary of candidate leadfields: column j of `columns` is the sensor
/// response of a unit source at `positions[j]`.
class LeadfieldSet {
 public:
  LeadfieldSet() = default;

  /// Validates shapes and rejects coincident candidate positions.
  static LeadfieldSet create(Matrix columns, std::vector<Position> positions) {
    if (columns.rows() < 1 || columns.cols() < 1)
      throw ContractError("LeadfieldSet: empty leadfield matrix");
    if (static_cast<std::size_t>(columns.cols()) != positions.size())
      throw ContractError("LeadfieldSet: column count does not match position count");
    if (!columns.allFinite()) throw ContractError("LeadfieldSet: non-finite leadfield entries");
    std::set<std::tuple<double, double, double>> seen;
    for (std::size_t j = 0; j < positions.size(); ++j) {
      const auto key = std::make_tuple(positions[j].x(), positions[j].y(), positions[j].z());
      if (!seen.insert(key).second) {
        std::ostringstream os;
        os << "LeadfieldSet: degenerate geometry, candidate " << j << " coincides with another";
        throw ContractError(os.str());
      }
      if (columns.col(static_cast<Index>(j)).norm() == 0.0) {
        std::ostringstream os;
        os << "LeadfieldSet: candidate " << j << " has a zero leadfield";
        throw ContractError(os.str());
      }
    }
    LeadfieldSet out;
    out.columns_ = std::move(columns);
    out.positions_ = std::move(positions);
    return out;
  }

  const Matrix& columns() const { return columns_; }
  const std::vector<Position>& positions() const { return positions_; }
  Index m() const { return columns_.rows(); }
  Index s() const { return columns_.cols(); }

 private:
  Matrix columns_;
  std::vector<Position> positions_;
};

struct GridSpec {
  double radius = 1.0;
};

namespace detail {

inline std::vector<Position> lattice_in_sphere(double spacing, double radius) {
  std::vector<Position> pts;
  const int n = static_cast<int>(std::floor(radius / spacing));
  for (int i = -n; i <= n; ++i)
    for (int j = -n; j <= n; ++j)
      for (int k = -n; k <= n; ++k) {
        const Position p(i * spacing, j * spacing, k * spacing);
        if (p.norm() <= radius * (1.0 + 1e-12)) pts.push_back(p);
      }
  return pts;
}

// Largest lattice spacing whose sphere-interior lattice holds at least s nodes.
inline double grid_spacing_for(Index s, double radius) {
  double lo = radius / (std::cbrt(static_cast<double>(s)) * 4.0 + 2.0);
  double hi = 2.0 * radius;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (static_cast<Index>(lattice_in_sphere(mid, radius).size()) >= s)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace detail

/// Kernel width that gives correlation `coherence` between adjacent lattice
/// nodes: the Gaussian-mixed field has correlation exp(-d²/(4σ²)) at distance d.
inline double kernel_width_for(double coherence, double spacing) {
  if (coherence <= 0.0) return 0.0;
  return spacing / (2.0 * std::sqrt(-std::log(coherence)));
}

/// Grid spacing used by generate_leadfields for s candidates.
inline double leadfield_grid_spacing(Index s, const GridSpec& grid = {}) {
  return detail::grid_spacing_for(s, grid.radius);
}

/// Synthetic leadfields on a cubic lattice inside a sphere.
///
/// Columns are an i.i.d. Gaussian m×s matrix mixed by a spatial Gaussian
/// kernel over candidate positions, then normalized to unit norm, so that
/// spatially close candidates have correlated leadfields. `coherence` is the
/// nominal correlation between lattice neighbours; 0 leaves columns i.i.d.
inline LeadfieldSet generate_leadfields(Index m, Index s, double coherence, std::uint64_t seed,
                                        const GridSpec& grid = {}) {
  if (m < 1 || s < 1) throw ContractError("generate_leadfields: m and s must be positive");
  if (!(coherence >= 0.0 && coherence < 1.0))
    throw ContractError("generate_leadfields: coherence must lie in [0, 1)");
  if (!(grid.radius > 0.0)) throw ContractError("generate_leadfields: degenerate geometry (radius)");

  Rng rng(derive_seed(seed, {0x1eadULL}));
  const double spacing = detail::grid_spacing_for(s, grid.radius);
  std::vector<Position> lattice = detail::lattice_in_sphere(spacing, grid.radius);
  if (static_cast<Index>(lattice.size()) < s)
    throw ContractError("generate_leadfields: degenerate geometry, lattice too small");

  // Drop surplus lattice nodes at random, keeping lattice order for the rest.
  std::vector<std::size_t> keep(lattice.size());
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  std::shuffle(keep.begin(), keep.end(), rng);
  keep.resize(static_cast<std::size_t>(s));
  std::sort(keep.begin(), keep.end());
  std::vector<Position> positions;
  positions.reserve(keep.size());
  for (std::size_t k : keep) positions.push_back(lattice[k]);

  Matrix columns = gaussian_matrix(m, s, rng);
  const double sigma = kernel_width_for(coherence, spacing);
  if (sigma > 0.0) {
    Matrix kernel(s, s);
    for (Index i = 0; i < s; ++i)
      for (Index j = 0; j < s; ++j) {
        const double d2 = (positions[i] - positions[j]).squaredNorm();
        kernel(i, j) = std::exp(-d2 / (2.0 * sigma * sigma));
      }
    columns = columns * kernel;
  }
  for (Index j = 0; j < s; ++j) columns.col(j).normalize();
  return LeadfieldSet::create(std::move(columns), std::move(positions));
}

/// H(θ): the selected columns in the order given.
inline Matrix select_leadfield(const LeadfieldSet& set, std::span<const Index> thetas) {
  std::set<Index> seen;
  Matrix h(set.m(), static_cast<Index>(thetas.size()));
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    const Index i = thetas[k];
    if (i < 0 || i >= set.s()) {
      std::ostringstream os;
      os << "select_leadfield: index " << i << " outside [0, " << set.s() << ")";
      throw ContractError(os.str());
    }
    if (!seen.insert(i).second) {
      std::ostringstream os;
      os << "select_leadfield: duplicate source index " << i;
      throw ContractError(os.str());
    }
    h.col(static_cast<Index>(k)) = set.columns().col(i);
  }
  return h;
}

inline Matrix select_leadfield(const LeadfieldSet& set, std::initializer_list<Index> thetas) {
  return select_leadfield(set, std::span<const Index>(thetas.begin(), thetas.size()));
}

/// Q = D^{1/2} C D^{1/2}, where C has unit diagonal and off-diagonal entries
/// `correlation · mask(i, j)` (mask symmetrized). Rejects results with
/// smallest eigenvalue ≤ 1e-8.
inline Matrix make_source_covariance(const Vector& powers, const Matrix& mask, double correlation) {
  const Index l = powers.size();
  if (mask.rows() != l || mask.cols() != l)
    throw ContractError("make_source_covariance: mask must be l x l");
  if ((powers.array() <= 0.0).any())
    throw ContractError("make_source_covariance: source powers must be positive");
  Matrix c = correlation * 0.5 * (mask + mask.transpose());
  c.diagonal().setOnes();
  const Vector root = powers.cwiseSqrt();
  Matrix q = root.asDiagonal() * c * root.asDiagonal();
  const double lmin = sym_eig(q).eigenvalues.minCoeff();
  if (!(lmin > 1e-8)) {
    std::ostringstream os;
    os << "make_source_covariance: Q not positive definite, smallest eigenvalue " << lmin;
    throw ContractError(os.str());
  }
  return q;
}

/// Ground truth: active indices θ0, source covariance Q, noise covariance N.
class SourceModel {
 public:
  static SourceModel create(const LeadfieldSet& set, std::vector<Index> theta0, Matrix q, Matrix n) {
    SourceModel out;
    out.h0_ = select_leadfield(set, theta0);
    out.theta0_ = std::move(theta0);
    out.init(std::move(q), std::move(n));
    return out;
  }

  /// Model on an explicit leadfield matrix with no dictionary behind it.
  static SourceModel from_leadfield(Matrix h0, Matrix q, Matrix n) {
    SourceModel out;
    out.theta0_.resize(static_cast<std::size_t>(h0.cols()));
    std::iota(out.theta0_.begin(), out.theta0_.end(), Index{0});
    out.h0_ = std::move(h0);
    out.init(std::move(q), std::move(n));
    return out;
  }

  const std::vector<Index>& theta0() const { return theta0_; }
  const Matrix& Q() const { return q_; }
  const Matrix& N() const { return n_; }
  const Matrix& H0() const { return h0_; }
  Index l0() const { return h0_.cols(); }
  Index m() const { return h0_.rows(); }

 private:
  void init(Matrix q, Matrix n) {
    const Index l0 = h0_.cols();
    if (q.rows() != l0 || q.cols() != l0) throw ContractError("SourceModel: Q must be l0 x l0");
    if (n.rows() != h0_.rows() || n.cols() != h0_.rows())
      throw ContractError("SourceModel: N must be m x m");
    q_ = symmetrized(q);
    n_ = symmetrized(n);
    if (!(sym_eig(q_).eigenvalues.minCoeff() > 0.0))
      throw ContractError("SourceModel: Q is not positive definite");
    if (!(sym_eig(n_).eigenvalues.minCoeff() > 0.0))
      throw ContractError("SourceModel: N is not positive definite");
  }

  std::vector<Index> theta0_;
  Matrix q_;
  Matrix n_;
  Matrix h0_;
};

enum class Provenance { Exact, Estimated };

/// (R, N) pair. For estimated pairs R − N need not be PSD.
struct CovariancePair {
  Matrix R;
  Matrix N;
  Provenance provenance = Provenance::Exact;
};

/// R = H0' H0'ᵗ + N with H0' = H0 Q^{1/2}.
inline CovariancePair assemble_covariances(const Matrix& h0, const Matrix& q, const Matrix& n) {
  const Matrix hw = h0 * psd_sqrt(q);
  Matrix r = hw * hw.transpose() + n;
  r = (0.5 * (r + r.transpose())).eval();
  return {std::move(r), 0.5 * (n + n.transpose()), Provenance::Exact};
}

inline CovariancePair assemble_covariances(const SourceModel& model) {
  return assemble_covariances(model.H0(), model.Q(), model.N());
}

// Leadfield bundle (CSV):
//   line 1: mvpure-leadfield,1
//   line 2: m,s
//   next s lines: x,y,z            (candidate positions)
//   next m lines: s comma-separated values (row-major m×s column block)
inline void write_leadfields(std::ostream& os, const LeadfieldSet& set) {
  os << std::setprecision(17);
  os << "mvpure-leadfield,1\n" << set.m() << "," << set.s() << "\n";
  for (const Position& p : set.positions()) os << p.x() << "," << p.y() << "," << p.z() << "\n";
  for (Index i = 0; i < set.m(); ++i) {
    for (Index j = 0; j < set.s(); ++j) os << (j ? "," : "") << set.columns()(i, j);
    os << "\n";
  }
}

namespace detail {

inline std::vector<double> parse_csv_doubles(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
    } catch (const std::exception&) {
      throw ConfigError("malformed numeric CSV cell '" + cell + "'");
    }
  }
  return out;
}

}  // namespace detail

inline LeadfieldSet read_leadfields(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("mvpure-leadfield,1", 0) != 0)
    throw ConfigError("read_leadfields: missing 'mvpure-leadfield,1' header");
  if (!std::getline(is, line)) throw ConfigError("read_leadfields: missing dimensions");
  const auto dims = detail::parse_csv_doubles(line);
  if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1)
    throw ConfigError("read_leadfields: bad dimension line");
  const auto m = static_cast<Index>(dims[0]);
  const auto s = static_cast<Index>(dims[1]);
  std::vector<Position> positions;
  for (Index j = 0; j < s; ++j) {
    if (!std::getline(is, line)) throw ConfigError("read_leadfields: truncated positions");
    const auto v = detail::parse_csv_doubles(line);
    if (v.size() != 3) throw ConfigError("read_leadfields: position rows need 3 values");
    positions.emplace_back(v[0], v[1], v[2]);
  }
  Matrix columns(m, s);
  for (Index i = 0; i < m; ++i) {
    if (!std::getline(is, line)) throw ConfigError("read_leadfields: truncated column block");
    const auto v = detail::parse_csv_doubles(line);
    if (static_cast<Index>(v.size()) != s) throw ConfigError("read_leadfields: bad column row width");
    for (Index j = 0; j < s; ++j) columns(i, j) = v[static_cast<std::size_t>(j)];
  }
  return LeadfieldSet::create(std::move(columns), std::move(positions));
}

}  // namespace mvpure

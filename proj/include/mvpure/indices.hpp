#pragma once

// Activity indices: single-source NAI / pseudo-Z, multi-source MAI / MPZ,
// their eigenvalue-sum extensions, the reduced-rank MAI_RR / MPZ_RR and the
// variants used by the iterative localizer.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "mvpure/errors.hpp"
#include "mvpure/filters.hpp"
#include "mvpure/matcore.hpp"

namespace mvpure {

enum class IndexFamily { MAI, MPZ, MAI_EXT, MPZ_EXT, MAI_RR_I, MPZ_RR_I };

inline constexpr std::array<IndexFamily, 6> kAllFamilies = {
    IndexFamily::MAI,     IndexFamily::MPZ,      IndexFamily::MAI_EXT,
    IndexFamily::MPZ_EXT, IndexFamily::MAI_RR_I, IndexFamily::MPZ_RR_I};

inline std::string_view to_string(IndexFamily f) {
  switch (f) {
    case IndexFamily::MAI: return "MAI";
    case IndexFamily::MPZ: return "MPZ";
    case IndexFamily::MAI_EXT: return "MAI_ext";
    case IndexFamily::MPZ_EXT: return "MPZ_ext";
    case IndexFamily::MAI_RR_I: return "MAI_RR-I";
    case IndexFamily::MPZ_RR_I: return "MPZ_RR-I";
  }
  return "?";
}

/// Accepts the display names above as well as MAI_EXT / MAI_RR_I style spellings (case-insensitive).
inline std::optional<IndexFamily> parse_family(std::string_view text) {
  std::string key(text);
  std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) {
    return c == '-' ? '_' : static_cast<char>(std::toupper(c));
  });
  for (IndexFamily f : kAllFamilies) {
    std::string name(to_string(f));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) {
      return c == '-' ? '_' : static_cast<char>(std::toupper(c));
    });
    if (name == key) return f;
  }
  return std::nullopt;
}

/// Family plus rank parameter. Ranks above the number of sources in the
/// argument are clamped to it.
struct IndexSpec {
  IndexFamily family = IndexFamily::MAI;
  Index rank = 1;

  Index resolve_rank(Index l) const {
    if (rank < 1) throw ContractError("IndexSpec: rank must be at least 1");
    return std::min(rank, l);
  }
};

struct IndexValue {
  double value = 0.0;
  Index l = 0;
  Index r_effective = 0;
};

/// G/S − 1.
inline double nai_single(double s, double g) {
  if (!(s > 0.0) || !(g > 0.0)) throw ContractError("nai_single: S and G must be positive");
  return g / s - 1.0;
}

/// S/T − 1.
inline double pseudo_z_single(double s, double t) {
  if (!(s > 0.0) || !(t > 0.0)) throw ContractError("pseudo_z_single: S and T must be positive");
  return s / t - 1.0;
}

namespace detail {

inline void require_dim(const CoreMatrices& c, Index l, const char* who) {
  if (c.dim() != l || l < 1) {
    std::ostringstream os;
    os << who << ": core matrices are " << c.dim() << "x" << c.dim() << ", expected l = " << l;
    throw ContractError(os.str());
  }
}

// tr{A B⁻¹} for SPD B.
inline double trace_ratio(const Matrix& a, const Matrix& b) { return (a * spd_inverse(b)).trace(); }

}  // namespace detail

/// tr{G S⁻¹} − l.
inline IndexValue mai(const CoreMatrices& c, Index l) {
  detail::require_dim(c, l, "mai");
  return {detail::trace_ratio(c.G, c.S) - static_cast<double>(l), l, l};
}
inline IndexValue mai(const CoreMatrices& c) { return mai(c, c.dim()); }

/// tr{S T⁻¹} − l.
inline IndexValue mpz(const CoreMatrices& c, Index l) {
  detail::require_dim(c, l, "mpz");
  return {detail::trace_ratio(c.S, c.T) - static_cast<double>(l), l, l};
}
inline IndexValue mpz(const CoreMatrices& c) { return mpz(c, c.dim()); }

/// Σ_{i≤r} λᵢ(G S⁻¹) − r.
inline IndexValue mai_ext(const CoreMatrices& c, Index r) {
  const Index l = c.dim();
  const Index re = IndexSpec{IndexFamily::MAI_EXT, r}.resolve_rank(l);
  const Vector ev = ratio_eigenvalues(c.G, c.S);
  return {ev.head(re).sum() - static_cast<double>(re), l, re};
}

/// Σ_{i≤r} λᵢ(S T⁻¹) − r.
inline IndexValue mpz_ext(const CoreMatrices& c, Index r) {
  const Index l = c.dim();
  const Index re = IndexSpec{IndexFamily::MPZ_EXT, r}.resolve_rank(l);
  const Vector ev = ratio_eigenvalues(c.S, c.T);
  return {ev.head(re).sum() - static_cast<double>(re), l, re};
}

namespace detail {

inline void require_whitened(const CoreMatrices& c, bool assume_uncorrelated, const char* who) {
  if (!c.whitened && !assume_uncorrelated)
    throw ContractError(std::string(who) +
                        ": needs whitened core matrices (or an explicit uncorrelated-sources assumption)");
}

}  // namespace detail

/// tr{G'(S')⁻¹ P⁽ʳ⁾_{S'}} − r. Unwhitened input is accepted only when the
/// caller asserts uncorrelated sources (Q = I).
inline IndexValue mai_rr(const CoreMatrices& c, Index r, bool assume_uncorrelated = false) {
  detail::require_whitened(c, assume_uncorrelated, "mai_rr");
  const Index l = c.dim();
  const Index re = IndexSpec{IndexFamily::MAI_RR_I, r}.resolve_rank(l);
  const Matrix p = top_r_projector(c.S, re).matrix;
  return {(c.G * spd_inverse(c.S) * p).trace() - static_cast<double>(re), l, re};
}

/// tr{S'(T')⁻¹ P⁽ʳ⁾_{S'}} − r.
inline IndexValue mpz_rr(const CoreMatrices& c, Index r, bool assume_uncorrelated = false) {
  detail::require_whitened(c, assume_uncorrelated, "mpz_rr");
  const Index l = c.dim();
  const Index re = IndexSpec{IndexFamily::MPZ_RR_I, r}.resolve_rank(l);
  const Matrix p = top_r_projector(c.S, re).matrix;
  return {(c.S * spd_inverse(c.T) * p).trace() - static_cast<double>(re), l, re};
}

/// Index value at one iteration of the sequential scan, with l = dim(plain)
/// sources in the argument and spec.rank = r:
///   MAI, MPZ            full-rank formula at every l
///   MAI_ext, MPZ_ext    eigenvalue sum over min(l, r) leading eigenvalues
///   MAI_RR-I, MPZ_RR-I  l ≤ r: full-rank formula on the whitened matrices;
///                       l > r: reduced-rank formula on the plain matrices
///                       (sources assumed uncorrelated)
/// `whitened` equals `plain` when no source covariance is available.
inline IndexValue iterative_index(const IndexSpec& spec, const CoreMatrices& plain,
                                  const CoreMatrices& whitened) {
  const Index l = plain.dim();
  if (l < 1) throw ContractError("iterative_index: empty source tuple");
  if (whitened.dim() != l) throw ContractError("iterative_index: plain/whitened dimension mismatch");
  if (spec.rank < 1) throw ContractError("iterative_index: rank must be at least 1");
  const Index r = spec.rank;
  switch (spec.family) {
    case IndexFamily::MAI: return mai(plain, l);
    case IndexFamily::MPZ: return mpz(plain, l);
    case IndexFamily::MAI_EXT: return mai_ext(plain, std::min(l, r));
    case IndexFamily::MPZ_EXT: return mpz_ext(plain, std::min(l, r));
    case IndexFamily::MAI_RR_I: {
      if (l <= r) return mai(whitened, l);
      return mai_rr(plain, r, /*assume_uncorrelated=*/true);
    }
    case IndexFamily::MPZ_RR_I: {
      if (l <= r) return mpz(whitened, l);
      return mpz_rr(plain, r, /*assume_uncorrelated=*/true);
    }
  }
  throw ContractError("iterative_index: unknown index family");
}

inline IndexValue iterative_index(const IndexSpec& spec, const CoreMatrices& plain) {
  return iterative_index(spec, plain, plain);
}

}  // namespace mvpure

#pragma once

// MVAR source / background generation, SNR-controlled sensor recordings and
// finite-sample covariance estimation.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvpure/errors.hpp"
#include "mvpure/forward_model.hpp"
#include "mvpure/matcore.hpp"
#include "mvpure/random.hpp"

namespace mvpure {

inline constexpr double kMvarStabilityMargin = 1e-6;

/// Spectral radius of the companion matrix of x_t = Σ_k A_k x_{t-k} + e_t.
inline double companion_spectral_radius(const std::vector<Matrix>& coeff) {
  if (coeff.empty()) return 0.0;
  const Index l = coeff.front().rows();
  const Index p = static_cast<Index>(coeff.size());
  Matrix companion = Matrix::Zero(l * p, l * p);
  for (Index k = 0; k < p; ++k) companion.block(0, k * l, l, l) = coeff[static_cast<std::size_t>(k)];
  if (p > 1) companion.block(l, 0, l * (p - 1), l * (p - 1)).setIdentity();
  Eigen::EigenSolver<Matrix> solver(companion, false);
  if (solver.info() != Eigen::Success) throw ContractError("companion eigensolver failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Stable vector autoregressive model. Coefficients are stored with the
/// mask already applied elementwise.
class MvarModel {
 public:
  static MvarModel create(std::vector<Matrix> coeff, Matrix noise_cov, Matrix mask) {
    if (coeff.empty()) throw ContractError("MvarModel: order must be at least 1");
    const Index l = noise_cov.rows();
    if (noise_cov.cols() != l || mask.rows() != l || mask.cols() != l)
      throw ContractError("MvarModel: noise covariance and mask must be l x l");
    for (Matrix& a : coeff) {
      if (a.rows() != l || a.cols() != l) throw ContractError("MvarModel: coefficient must be l x l");
      a = a.cwiseProduct(mask);
    }
    MvarModel out;
    out.noise_cov_ = symmetrized(noise_cov);
    Eigen::LLT<Matrix> llt(out.noise_cov_);
    if (llt.info() != Eigen::Success)
      throw ContractError("MvarModel: innovation covariance is not positive definite");
    out.noise_chol_ = llt.matrixL();
    out.radius_ = companion_spectral_radius(coeff);
    if (!(out.radius_ < 1.0 - kMvarStabilityMargin)) {
      std::ostringstream os;
      os << "MvarModel: unstable, companion spectral radius " << out.radius_;
      throw ContractError(os.str());
    }
    out.coeff_ = std::move(coeff);
    out.mask_ = std::move(mask);
    return out;
  }

  Index dim() const { return noise_cov_.rows(); }
  Index order() const { return static_cast<Index>(coeff_.size()); }
  const std::vector<Matrix>& coeff() const { return coeff_; }
  const Matrix& noise_cov() const { return noise_cov_; }
  const Matrix& noise_chol() const { return noise_chol_; }
  const Matrix& mask() const { return mask_; }
  double spectral_radius() const { return radius_; }

 private:
  std::vector<Matrix> coeff_;
  Matrix noise_cov_;
  Matrix noise_chol_;
  Matrix mask_;
  double radius_ = 0.0;
};

/// l×n realization of the process; the first 10·order samples are discarded as burn-in.
inline Matrix sample_mvar(const MvarModel& model, Index n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw ContractError("sample_mvar: n_samples must be positive");
  const Index l = model.dim();
  const Index p = model.order();
  const Index burn = 10 * p;
  const Index total = burn + n_samples;
  Rng rng(derive_seed(seed, {0x3a7ULL}));
  const Matrix innov = model.noise_chol() * gaussian_matrix(l, total, rng);
  Matrix x = Matrix::Zero(l, total);
  for (Index t = 0; t < total; ++t) {
    Vector xt = innov.col(t);
    for (Index k = 1; k <= p && k <= t; ++k) xt.noalias() += model.coeff()[static_cast<std::size_t>(k - 1)] * x.col(t - k);
    x.col(t) = xt;
  }
  return x.rightCols(n_samples);
}

struct MvarOptions {
  double target_radius = 0.95;  // shrink until the companion radius is at most this
  double shrink = 0.97;         // per-step factor γ, lag k scaled by γ^k
  int max_steps = 100;
  /// Off-diagonal correlation of the innovations (0 = independent).
  double innovation_correlation = 0.0;
};

/// Random MVAR(order) model with coefficients masked elementwise, shrunk
/// (A_k ← γ^k A_k, which scales every companion eigenvalue by γ) until stable.
inline MvarModel random_stable_mvar(Index l, Index order, const Matrix& mask, std::uint64_t seed,
                                    const MvarOptions& opt = {}) {
  if (l < 1 || order < 1) throw ContractError("random_stable_mvar: l and order must be positive");
  if (mask.rows() != l || mask.cols() != l) throw ContractError("random_stable_mvar: mask must be l x l");
  Rng rng(derive_seed(seed, {0x5eedULL}));
  const double scale = 1.0 / std::sqrt(static_cast<double>(l * order));
  std::vector<Matrix> coeff;
  for (Index k = 0; k < order; ++k) coeff.push_back(scale * gaussian_matrix(l, l, rng).cwiseProduct(mask));

  int steps = 0;
  while (companion_spectral_radius(coeff) > opt.target_radius) {
    if (++steps > opt.max_steps)
      throw ContractError("random_stable_mvar: could not stabilize within shrink budget");
    double g = opt.shrink;
    for (Matrix& a : coeff) {
      a *= g;
      g *= opt.shrink;
    }
  }
  Matrix innov = Matrix::Constant(l, l, opt.innovation_correlation);
  innov.diagonal().setOnes();
  return MvarModel::create(std::move(coeff), std::move(innov), mask);
}

/// Sensor data: `pre` holds noise only, `post` holds signal plus noise.
struct Recording {
  Matrix pre;
  Matrix post;
  Matrix signal;            // H0 q0 part of `post`
  double snr = 0.0;         // achieved ‖H0 q0‖_F / ‖n_post‖_F
  double snr_db_target = 0.0;
  double sample_rate = 1000.0;
  std::vector<Index> theta0;
  std::vector<Index> background;  // candidate columns carrying background sources
  std::uint64_t seed = 0;
};

struct NoiseOptions {
  /// White sensor noise power relative to the mixed background, in dB.
  double white_noise_db = -20.0;
  /// Explicit background columns; when empty they are drawn at random from
  /// the non-active candidates (one per background MVAR dimension).
  std::vector<Index> background_columns;
  double sample_rate = 1000.0;
};

/// `snr_db` is 20·log10 of the Frobenius norm ratio ‖H0 Q0‖ / ‖N_post‖ over the post block.
inline Recording simulate_recording(const LeadfieldSet& set, const std::vector<Index>& theta0,
                                    const MvarModel& src, const MvarModel& bg, double snr_db,
                                    Index t_pre, Index t_post, std::uint64_t seed,
                                    const NoiseOptions& opt = {}) {
  if (!std::isfinite(snr_db)) throw ContractError("simulate_recording: snr_db must be finite");
  if (t_pre < 1 || t_post < 1) throw ContractError("simulate_recording: block lengths must be positive");
  if (src.dim() != static_cast<Index>(theta0.size()))
    throw ContractError("simulate_recording: source MVAR dimension does not match theta0");
  const Matrix h0 = select_leadfield(set, theta0);
  const Index m = set.m();

  std::vector<Index> bg_cols = opt.background_columns;
  if (bg_cols.empty()) {
    std::set<Index> active(theta0.begin(), theta0.end());
    std::vector<Index> pool;
    for (Index i = 0; i < set.s(); ++i)
      if (!active.count(i)) pool.push_back(i);
    if (static_cast<Index>(pool.size()) < bg.dim())
      throw ContractError("simulate_recording: not enough inactive candidates for background");
    Rng pick(derive_seed(seed, {0xb6ULL}));
    std::shuffle(pool.begin(), pool.end(), pick);
    bg_cols.assign(pool.begin(), pool.begin() + bg.dim());
  }
  if (static_cast<Index>(bg_cols.size()) != bg.dim())
    throw ContractError("simulate_recording: background column count does not match background MVAR");
  const Matrix h_bg = select_leadfield(set, bg_cols);

  const Matrix q0 = sample_mvar(src, t_post, derive_seed(seed, {1}));
  const Matrix signal = h0 * q0;
  const double signal_norm = signal.norm();
  if (!(signal_norm > 0.0)) throw ContractError("simulate_recording: zero signal energy");

  const Index total = t_pre + t_post;
  Matrix noise = h_bg * sample_mvar(bg, total, derive_seed(seed, {2}));
  Rng white_rng(derive_seed(seed, {3}));
  Matrix white = gaussian_matrix(m, total, white_rng);
  const double bio_norm = noise.norm();
  if (bio_norm > 0.0) {
    white *= bio_norm / white.norm() * std::pow(10.0, opt.white_noise_db / 20.0);
    noise += white;
  } else {
    noise = white;
  }

  const double target = std::pow(10.0, snr_db / 20.0);
  const double gain = signal_norm / (target * noise.rightCols(t_post).norm());
  noise *= gain;

  Recording rec;
  rec.pre = noise.leftCols(t_pre);
  rec.post = signal + noise.rightCols(t_post);
  rec.signal = signal;
  rec.snr = signal_norm / noise.rightCols(t_post).norm();
  rec.snr_db_target = snr_db;
  rec.sample_rate = opt.sample_rate;
  rec.theta0 = theta0;
  rec.background = std::move(bg_cols);
  rec.seed = seed;
  return rec;
}

enum class CovDivisor { T, TMinus1 };

/// Mean-centred sample covariance of an m×T block.
inline Matrix estimate_cov(const Matrix& block, CovDivisor divisor = CovDivisor::TMinus1) {
  const Index t = block.cols();
  if (t < 2) throw ContractError("estimate_cov: need at least 2 samples");
  const Matrix centred = block.colwise() - block.rowwise().mean();
  const double denom = divisor == CovDivisor::T ? static_cast<double>(t) : static_cast<double>(t - 1);
  Matrix c = centred * centred.transpose() / denom;
  return 0.5 * (c + c.transpose());
}

struct Regularized {
  Matrix matrix;
  bool positive_definite = false;
};

/// C + ridge_rel·tr(C)/m·I; flags results that remain singular.
inline Regularized regularize_pd(const Matrix& c, double ridge_rel) {
  if (ridge_rel < 0.0) throw ContractError("regularize_pd: ridge_rel must be non-negative");
  const Index m = c.rows();
  Matrix out = symmetrized(c);
  out.diagonal().array() += ridge_rel * out.trace() / static_cast<double>(m);
  const Vector ev = sym_eig(out).eigenvalues;
  const bool pd = ev.size() > 0 && ev.minCoeff() > 0.0;
  return {std::move(out), pd};
}

/// One row per sensor: T_pre pre-stimulus samples followed by T_post samples.
inline void write_recording_csv(std::ostream& os, const Recording& rec) {
  os << std::setprecision(17);
  for (Index i = 0; i < rec.pre.rows(); ++i) {
    for (Index t = 0; t < rec.pre.cols(); ++t) os << (t ? "," : "") << rec.pre(i, t);
    for (Index t = 0; t < rec.post.cols(); ++t) os << "," << rec.post(i, t);
    os << "\n";
  }
}

inline nlohmann::json recording_sidecar(const Recording& rec) {
  nlohmann::json j;
  j["format"] = "mvpure-recording";
  j["version"] = 1;
  j["sensors"] = rec.pre.rows();
  j["samples_pre"] = rec.pre.cols();
  j["samples_post"] = rec.post.cols();
  j["sample_rate"] = rec.sample_rate;
  j["seed"] = rec.seed;
  j["snr_db"] = rec.snr_db_target;
  j["snr_achieved"] = rec.snr;
  j["theta0"] = rec.theta0;
  j["background_columns"] = rec.background;
  return j;
}

}  // namespace mvpure

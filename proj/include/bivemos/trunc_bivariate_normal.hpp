// Bivariate normal law with the first (wind) coordinate truncated below at 0.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>

#include "bivemos/normal.hpp"

namespace bivemos {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Matrix2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar>
using Matrix2X = Eigen::Matrix<Scalar, 2, Eigen::Dynamic>;

/// Mean vector and covariance matrix of a bivariate law.
template <typename Scalar>
struct MomentPair {
  Vector2<Scalar> kappa;
  Matrix2<Scalar> xi;
};

/// N2^0(mu, Sigma): location mu = (mu_w, mu_t), scale Sigma, support
/// {x_w >= 0} x R.  Construction enforces sigma2_w > 0, sigma2_t > 0 and
/// det(Sigma) > 0; the off-diagonal entry is read from the lower triangle.
template <typename Scalar>
class TruncBivariateNormal {
 public:
  TruncBivariateNormal(const Vector2<Scalar>& location, const Matrix2<Scalar>& scale)
      : mu_(location) {
    sigma_ = scale;
    sigma_(0, 1) = scale(1, 0);
    if (!is_valid_scale(sigma_) || !mu_.allFinite()) {
      throw std::domain_error("TruncBivariateNormal: scale matrix is not positive definite");
    }
  }

  /// Non-throwing factory; nullopt when the scale matrix is not PD.
  static std::optional<TruncBivariateNormal> make(const Vector2<Scalar>& location,
                                                  const Matrix2<Scalar>& scale) noexcept {
    Matrix2<Scalar> sym = scale;
    sym(0, 1) = scale(1, 0);
    if (!is_valid_scale(sym) || !location.allFinite()) return std::nullopt;
    return TruncBivariateNormal(location, sym, Unchecked{});
  }

  static bool is_valid_scale(const Matrix2<Scalar>& s) noexcept {
    const Scalar det = s(0, 0) * s(1, 1) - s(1, 0) * s(1, 0);
    return std::isfinite(det) && s(0, 0) > 0 && s(1, 1) > 0 && det > 0;
  }

  const Vector2<Scalar>& location() const { return mu_; }
  const Matrix2<Scalar>& scale() const { return sigma_; }

  Scalar mu_w() const { return mu_(0); }
  Scalar mu_t() const { return mu_(1); }
  Scalar sigma2_w() const { return sigma_(0, 0); }
  Scalar sigma2_t() const { return sigma_(1, 1); }
  Scalar sigma_wt() const { return sigma_(1, 0); }
  Scalar sigma_w() const { return std::sqrt(sigma_(0, 0)); }
  Scalar det() const { return sigma2_w() * sigma2_t() - sigma_wt() * sigma_wt(); }

  /// mu_w / sigma_w; Phi of this is the untruncated mass on {x_w >= 0}.
  Scalar standardized_cutoff() const { return mu_w() / sigma_w(); }

 private:
  struct Unchecked {};
  TruncBivariateNormal(const Vector2<Scalar>& location, const Matrix2<Scalar>& scale, Unchecked)
      : mu_(location), sigma_(scale) {}

  Vector2<Scalar> mu_;
  Matrix2<Scalar> sigma_;
};

using TruncBivariateNormald = TruncBivariateNormal<double>;

/// Log density; -infinity outside the support (x_w < 0).  x_w == 0 is in
/// the support.
template <typename Scalar>
Scalar log_pdf(const TruncBivariateNormal<Scalar>& law, const Vector2<Scalar>& x) {
  if (x(0) < 0) return -std::numeric_limits<Scalar>::infinity();
  const Scalar det = law.det();
  const Vector2<Scalar> r = x - law.location();
  // Inverse of a symmetric 2x2 written out.
  const Scalar quad =
      (law.sigma2_t() * r(0) * r(0) - 2 * law.sigma_wt() * r(0) * r(1) +
       law.sigma2_w() * r(1) * r(1)) /
      det;
  return -Scalar(0.5) * quad - std::log(2 * std::numbers::pi_v<Scalar>) -
         Scalar(0.5) * std::log(det) - std_normal_log_cdf(law.standardized_cutoff());
}

template <typename Scalar>
Scalar pdf(const TruncBivariateNormal<Scalar>& law, const Vector2<Scalar>& x) {
  return std::exp(log_pdf(law, x));
}

/// Closed-form mean and covariance via the hazard ratio
/// lambda = phi(mu_w/sigma_w) / Phi(mu_w/sigma_w).
template <typename Scalar>
MomentPair<Scalar> moments(const TruncBivariateNormal<Scalar>& law) {
  const Scalar sw = law.sigma_w();
  const Scalar alpha = law.standardized_cutoff();
  const Scalar lambda = inverse_mills_ratio(alpha);
  MomentPair<Scalar> out;
  out.kappa = law.location() + lambda * Vector2<Scalar>(sw, law.sigma_wt() / sw);
  Matrix2<Scalar> direction;
  direction << law.sigma2_w(), law.sigma_wt(), law.sigma_wt(),
      law.sigma_wt() * law.sigma_wt() / law.sigma2_w();
  out.xi = law.scale() - (alpha * lambda + lambda * lambda) * direction;
  return out;
}

namespace detail {

/// Draw Z ~ N(0,1) conditioned on Z > a, for a > 0, with the exponential
/// proposal of optimal rate.
template <typename Scalar, typename Rng>
Scalar draw_upper_tail(Scalar a, Rng& rng) {
  const Scalar rate = (a + std::sqrt(a * a + 4)) / 2;
  std::exponential_distribution<Scalar> expo(rate);
  std::uniform_real_distribution<Scalar> unif(0, 1);
  for (;;) {
    const Scalar z = a + expo(rng);
    const Scalar diff = z - rate;
    if (unif(rng) <= std::exp(-diff * diff / 2)) return z;
  }
}

}  // namespace detail

/// Acceptance rate below which the sampler abandons plain rejection.
inline constexpr double kRejectionAcceptanceFloor = 0.05;

/// Draws n i.i.d. points (columns) from the law using the supplied engine.
template <typename Scalar, std::uniform_random_bit_generator Rng>
Matrix2X<Scalar> sample(const TruncBivariateNormal<Scalar>& law, Eigen::Index n, Rng& rng) {
  Matrix2X<Scalar> out(2, n);
  std::normal_distribution<Scalar> gauss(0, 1);
  const Scalar sw = law.sigma_w();
  const Scalar slope = law.sigma_wt() / law.sigma2_w();
  const Scalar cond_sd = std::sqrt(law.det() / law.sigma2_w());
  const Scalar alpha = law.standardized_cutoff();

  if (std_normal_cdf(alpha) >= Scalar(kRejectionAcceptanceFloor)) {
    for (Eigen::Index j = 0; j < n; ++j) {
      Scalar w;
      do {
        w = law.mu_w() + sw * gauss(rng);
      } while (w < 0);
      out(0, j) = w;
      out(1, j) = law.mu_t() + slope * (w - law.mu_w()) + cond_sd * gauss(rng);
    }
    return out;
  }

  // Deep truncation: wind from the one-sided tail, temperature from its
  // conditional normal given wind.
  for (Eigen::Index j = 0; j < n; ++j) {
    const Scalar z = detail::draw_upper_tail(-alpha, rng);
    const Scalar w = std::max(Scalar(0), law.mu_w() + sw * z);
    out(0, j) = w;
    out(1, j) = law.mu_t() + slope * (w - law.mu_w()) + cond_sd * gauss(rng);
  }
  return out;
}

template <typename Scalar>
Matrix2X<Scalar> sample(const TruncBivariateNormal<Scalar>& law, Eigen::Index n,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample(law, n, rng);
}

}  // namespace bivemos

// Standard normal density, distribution and quantile functions.
//
// Everything here is templated on the scalar type so the same code serves
// double and long double evaluations.

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace bivemos {

template <typename Scalar = double>
Scalar std_normal_pdf(Scalar z) {
  return std::numbers::inv_sqrtpi_v<Scalar> / std::numbers::sqrt2_v<Scalar> *
         std::exp(-Scalar(0.5) * z * z);
}

template <typename Scalar = double>
Scalar std_normal_cdf(Scalar z) {
  return Scalar(0.5) * std::erfc(-z / std::numbers::sqrt2_v<Scalar>);
}

/// log Phi(z), accurate far into the lower tail where Phi(z) underflows.
template <typename Scalar = double>
Scalar std_normal_log_cdf(Scalar z) {
  if (z > Scalar(-30)) {
    if (z > Scalar(5)) {
      return std::log1p(-Scalar(0.5) * std::erfc(z / std::numbers::sqrt2_v<Scalar>));
    }
    return std::log(std_normal_cdf(z));
  }
  // Mills-ratio asymptotic series: Phi(z) = phi(z)/|z| * sum (-1)^k (2k-1)!! / z^(2k)
  const Scalar z2 = z * z;
  Scalar term = 1;
  Scalar sum = 1;
  for (int k = 1; k < 12; ++k) {
    term *= -Scalar(2 * k - 1) / z2;
    sum += term;
  }
  return -Scalar(0.5) * z2 - std::log(-z) -
         Scalar(0.5) * std::log(2 * std::numbers::pi_v<Scalar>) + std::log(sum);
}

/// Inverse of the standard normal CDF.
///
/// Rational starting approximation (Acklam) polished with two Halley steps
/// against erfc, which brings the residual |Phi(q) - p| to rounding level.
template <typename Scalar = double>
Scalar std_normal_quantile(Scalar p) {
  if (!(p > Scalar(0) && p < Scalar(1))) {
    throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");
  }
  constexpr Scalar a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
  constexpr Scalar b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
  constexpr Scalar c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00,  2.938163982698783e+00};
  constexpr Scalar d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};
  constexpr Scalar p_low = 0.02425;

  Scalar x;
  if (p < p_low) {
    const Scalar q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const Scalar q = p - Scalar(0.5);
    const Scalar r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const Scalar q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }

  for (int step = 0; step < 2; ++step) {
    // Work with the smaller tail probability to avoid cancellation.
    Scalar e;
    if (x < 0) {
      e = std_normal_cdf(x) - p;
    } else {
      e = (Scalar(1) - p) - std_normal_cdf(-x);
    }
    const Scalar u = e * std::sqrt(2 * std::numbers::pi_v<Scalar>) * std::exp(x * x / 2);
    x = x - u / (1 + x * u / 2);
  }
  return x;
}

/// phi(z) / Phi(z), stable for very negative z.
template <typename Scalar = double>
Scalar inverse_mills_ratio(Scalar z) {
  if (z > Scalar(-30)) {
    return std_normal_pdf(z) / std_normal_cdf(z);
  }
  return std::exp(std::log(std_normal_pdf(z)) - std_normal_log_cdf(z));
}

}  // namespace bivemos

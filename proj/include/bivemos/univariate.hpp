// Univariate normal and zero-truncated normal laws used by the marginal
// (independent) EMOS baselines and the Gaussian copula.

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace bivemos {

enum class LawKind { Normal, ZeroTruncatedNormal };

struct UnivariateLaw {
  LawKind kind = LawKind::Normal;
  double location = 0.0;
  double scale = 1.0;  ///< standard deviation of the parent normal

  static UnivariateLaw normal(double location, double scale);
  static UnivariateLaw zero_truncated(double location, double scale);
};

double univ_cdf(const UnivariateLaw& law, double x);
/// Throws std::domain_error unless 0 < p < 1.
double univ_quantile(const UnivariateLaw& law, double p);
double univ_log_pdf(const UnivariateLaw& law, double x);
double univ_mean(const UnivariateLaw& law);
double univ_variance(const UnivariateLaw& law);
std::vector<double> univ_sample(const UnivariateLaw& law, std::size_t n, std::uint64_t seed);

/// Closed-form CRPS of N(location, scale^2) at y.  Throws on scale <= 0.
double crps_normal(double location, double scale, double y);

/// Closed-form CRPS of N(location, scale^2) truncated to [0, inf) at y.
/// For y < 0 (outside the support) the integral definition is still
/// evaluated: the result is crps at 0 plus |y|.
double crps_truncnormal(double location, double scale, double y);

double crps(const UnivariateLaw& law, double y);

}  // namespace bivemos

#include "bivemos/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "bivemos/normal.hpp"

namespace bivemos {

namespace {

void check_scale(double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::domain_error("univariate law: scale must be positive and finite");
  }
}

// Below this standardized location the closed form loses all precision to
// cancellation (Phi(alpha)^2 in the denominator).
constexpr double kClosedFormAlphaFloor = -6.0;

// Composite Simpson evaluation of the integral definition of the CRPS; the
// law is then concentrated within a few sigma/|alpha| of zero.
double crps_truncnormal_quadrature(double location, double scale, double y) {
  const UnivariateLaw law{LawKind::ZeroTruncatedNormal, location, scale};
  const double alpha = location / scale;
  const double upper = y + 60.0 * scale / std::max(1.0, std::abs(alpha));
  auto integrate = [&](double lo, double hi, bool above_obs) {
    if (hi <= lo) return 0.0;
    constexpr int kPanels = 4000;
    const double h = (hi - lo) / kPanels;
    double acc = 0.0;
    for (int i = 0; i <= kPanels; ++i) {
      const double t = lo + i * h;
      const double f = univ_cdf(law, t) - (above_obs ? 1.0 : 0.0);
      const double w = (i == 0 || i == kPanels) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      acc += w * f * f;
    }
    return acc * h / 3.0;
  };
  return integrate(0.0, y, false) + integrate(y, upper, true);
}

}  // namespace

UnivariateLaw UnivariateLaw::normal(double location, double scale) {
  check_scale(scale);
  return {LawKind::Normal, location, scale};
}

UnivariateLaw UnivariateLaw::zero_truncated(double location, double scale) {
  check_scale(scale);
  return {LawKind::ZeroTruncatedNormal, location, scale};
}

double univ_cdf(const UnivariateLaw& law, double x) {
  const double z = (x - law.location) / law.scale;
  if (law.kind == LawKind::Normal) return std_normal_cdf(z);
  if (x < 0.0) return 0.0;
  // 1 - Phi(-z)/Phi(mu/sigma), written with upper tails to keep precision.
  const double alpha = law.location / law.scale;
  const double upper = std::exp(std_normal_log_cdf(-z) - std_normal_log_cdf(alpha));
  return std::min(1.0, std::max(0.0, 1.0 - upper));
}

double univ_quantile(const UnivariateLaw& law, double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("univ_quantile: p must lie in (0, 1)");
  }
  if (law.kind == LawKind::Normal) {
    return law.location + law.scale * std_normal_quantile(p);
  }
  // Upper-tail form: P(Z > z) = (1 - p) Phi(alpha).
  const double alpha = law.location / law.scale;
  const double tail = (1.0 - p) * std_normal_cdf(alpha);
  if (tail <= 0.0) return 0.0;
  const double z = -std_normal_quantile(tail);
  return std::max(0.0, law.location + law.scale * z);
}

double univ_log_pdf(const UnivariateLaw& law, double x) {
  const double z = (x - law.location) / law.scale;
  double lp = -0.5 * z * z - std::log(law.scale) - 0.5 * std::log(2.0 * std::numbers::pi);
  if (law.kind == LawKind::ZeroTruncatedNormal) {
    if (x < 0.0) return -std::numeric_limits<double>::infinity();
    lp -= std_normal_log_cdf(law.location / law.scale);
  }
  return lp;
}

double univ_mean(const UnivariateLaw& law) {
  if (law.kind == LawKind::Normal) return law.location;
  return law.location + law.scale * inverse_mills_ratio(law.location / law.scale);
}

double univ_variance(const UnivariateLaw& law) {
  const double s2 = law.scale * law.scale;
  if (law.kind == LawKind::Normal) return s2;
  const double alpha = law.location / law.scale;
  const double lambda = inverse_mills_ratio(alpha);
  return s2 * (1.0 - alpha * lambda - lambda * lambda);
}

std::vector<double> univ_sample(const UnivariateLaw& law, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& v : out) {
    double u;
    do {
      u = unif(rng);
    } while (u <= 0.0);
    v = univ_quantile(law, u);
  }
  return out;
}

double crps_normal(double location, double scale, double y) {
  check_scale(scale);
  const double z = (y - location) / scale;
  return scale * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) -
                  std::numbers::inv_sqrtpi);
}

double crps_truncnormal(double location, double scale, double y) {
  check_scale(scale);
  if (y < 0.0) return crps_truncnormal(location, scale, 0.0) - y;
  const double alpha = location / scale;
  if (alpha < kClosedFormAlphaFloor) return crps_truncnormal_quadrature(location, scale, y);
  const double p = std_normal_cdf(alpha);
  const double z = (y - location) / scale;
  const double bracket = z * p * (2.0 * std_normal_cdf(z) + p - 2.0) +
                         2.0 * std_normal_pdf(z) * p -
                         std::numbers::inv_sqrtpi * std_normal_cdf(std::numbers::sqrt2 * alpha);
  return scale * bracket / (p * p);
}

double crps(const UnivariateLaw& law, double y) {
  return law.kind == LawKind::Normal ? crps_normal(law.location, law.scale, y)
                                     : crps_truncnormal(law.location, law.scale, y);
}

}  // namespace bivemos

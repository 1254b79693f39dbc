#include "bivemos/copula.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "bivemos/normal.hpp"

namespace bivemos {

CopulaModel estimate_correlation(std::span<const CopulaHistoryCase> history) {
  const auto n = history.size();
  if (n < 2) throw std::invalid_argument("estimate_correlation: need at least two history cases");
  const double eps = 1.0 / (2.0 * static_cast<double>(n));
  auto latent = [eps](const UnivariateLaw& law, double x) {
    const double u = std::clamp(univ_cdf(law, x), eps, 1.0 - eps);
    return std_normal_quantile(u);
  };

  std::vector<double> zw(n), zt(n);
  for (std::size_t i = 0; i < n; ++i) {
    zw[i] = latent(history[i].margins.first, history[i].observation(0));
    zt[i] = latent(history[i].margins.second, history[i].observation(1));
  }
  const Eigen::Map<const Eigen::VectorXd> w(zw.data(), static_cast<Eigen::Index>(n));
  const Eigen::Map<const Eigen::VectorXd> t(zt.data(), static_cast<Eigen::Index>(n));
  const Eigen::VectorXd wc = w.array() - w.mean();
  const Eigen::VectorXd tc = t.array() - t.mean();
  const double denom = std::sqrt(wc.squaredNorm() * tc.squaredNorm());
  const double r = denom > 0.0 ? wc.dot(tc) / denom : 0.0;
  return {std::clamp(r, -kMaxCopulaCorrelation, kMaxCopulaCorrelation)};
}

namespace {

// F^-1(Phi(z)) evaluated without forming Phi(z) near 1.
double from_latent(const UnivariateLaw& law, double z) {
  if (law.kind == LawKind::Normal) return law.location + law.scale * z;
  const double tail = std_normal_cdf(-z) * std_normal_cdf(law.location / law.scale);
  if (!(tail > 0.0)) return law.location + law.scale * z;
  if (tail >= 1.0) return 0.0;
  return std::max(0.0, law.location - law.scale * std_normal_quantile(tail));
}

}  // namespace

Eigen::Matrix2Xd copula_sample(const std::pair<UnivariateLaw, UnivariateLaw>& margins,
                               const CopulaModel& model, Eigen::Index n, std::uint64_t seed) {
  if (!(std::abs(model.gamma) < 1.0)) throw std::domain_error("copula_sample: |gamma| must be < 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double cond_sd = std::sqrt(1.0 - model.gamma * model.gamma);
  Eigen::Matrix2Xd out(2, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double z1 = gauss(rng);
    const double z2 = model.gamma * z1 + cond_sd * gauss(rng);
    out(0, j) = from_latent(margins.first, z1);
    out(1, j) = from_latent(margins.second, z2);
  }
  return out;
}

}  // namespace bivemos

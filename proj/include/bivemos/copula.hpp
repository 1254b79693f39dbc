// Gaussian copula joining a wind and a temperature margin.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <utility>

#include "bivemos/univariate.hpp"

namespace bivemos {

/// Latent correlation of the Gaussian copula; |gamma| < 1.
struct CopulaModel {
  double gamma = 0.0;
};

/// Margins (wind, temperature) of one historical case with its observation.
struct CopulaHistoryCase {
  std::pair<UnivariateLaw, UnivariateLaw> margins;
  Eigen::Vector2d observation;
};

inline constexpr double kMaxCopulaCorrelation = 0.999;

/// Pearson correlation of the latent scores Phi^-1(F(obs)).  PIT values are
/// winsorized to [eps, 1 - eps] with eps = 1 / (2 n); the result is clamped
/// to +-0.999.  Throws std::invalid_argument for fewer than two cases.
CopulaModel estimate_correlation(std::span<const CopulaHistoryCase> history);

/// n draws (columns): latent standard bivariate normal with correlation
/// gamma, mapped through Phi and then each margin's quantile function.
Eigen::Matrix2Xd copula_sample(const std::pair<UnivariateLaw, UnivariateLaw>& margins,
                               const CopulaModel& model, Eigen::Index n, std::uint64_t seed);

}  // namespace bivemos

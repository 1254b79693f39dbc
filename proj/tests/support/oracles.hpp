// Independent reference computations used by the tests.  Nothing here calls
// into the library's numerics: quadrature, series expansions, plain
// rejection sampling and brute-force search only.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
  std::vector<double> x(n), w(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int k = 1; k <= n; ++k) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    x[n - 1 - i] = z;
    w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

/// Composite Gauss-Legendre rule: `panels` panels of `order` nodes.
inline double integrate(const std::function<double(double)>& f, double a, double b, int panels = 64,
                        int order = 20) {
  const auto [x, w] = gauss_legendre(order);
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * h;
    for (int i = 0; i < order; ++i) total += w[i] * f(lo + 0.5 * h * (x[i] + 1.0));
  }
  return 0.5 * h * total;
}

/// Tensor-product composite Gauss-Legendre over a rectangle.
inline double integrate_2d(const std::function<double(double, double)>& f, double ax, double bx, double ay,
                           double by, int panels = 40, int order = 16) {
  return integrate(
      [&](double x) { return integrate([&](double y) { return f(x, y); }, ay, by, panels, order); }, ax, bx,
      panels, order);
}

inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Phi(x) from the power series 1/2 + phi(x) * sum x^(2n+1) / (2n+1)!!,
/// evaluated in long double; accurate for |x| <= 8.
inline double normal_cdf_series(double xd) {
  const long double x = xd;
  long double term = x, sum = x;
  for (int n = 1; n < 500; ++n) {
    term *= x * x / (2.0L * n + 1.0L);
    sum += term;
    if (std::abs(term) < 1e-22L * std::abs(sum)) break;
  }
  const long double phi = std::exp(-0.5L * x * x) / std::sqrt(2.0L * std::numbers::pi_v<long double>);
  return static_cast<double>(0.5L + phi * sum);
}

/// Quantile by bisection on the series cdf.
inline double normal_quantile_bisect(double p) {
  double lo = -8.0, hi = 8.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf_series(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Log density of N(mu, s^2) truncated to [0, inf), by direct formula.
inline double truncnormal_log_pdf(double x, double mu, double s) {
  return std::log(normal_pdf((x - mu) / s) / s) - std::log(normal_cdf_series(mu / s));
}

/// Density of the zero-truncated bivariate normal written from scratch:
/// the Gaussian kernel over the mass of the half plane w >= 0.
inline double tbn_density(const Eigen::Vector2d& x, const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma) {
  if (x(0) < 0) return 0.0;
  const Eigen::Vector2d r = x - mu;
  const double q = r.dot(sigma.inverse() * r);
  const double gauss = std::exp(-0.5 * q) / (2.0 * std::numbers::pi * std::sqrt(sigma.determinant()));
  return gauss / normal_cdf_series(mu(0) / std::sqrt(sigma(0, 0)));
}

struct MomentEstimate {
  Eigen::Vector2d mean;
  Eigen::Matrix2d cov;
  Eigen::Vector2d mean_se;  ///< standard errors of the mean
  Eigen::Matrix2d cov_se;   ///< standard errors of the covariance entries
};

/// Moments of the truncated law by plain rejection from the untruncated
/// Gaussian (Cholesky transform), collecting `accepted` draws.
inline MomentEstimate rejection_moments(const Eigen::Vector2d& mu, const Eigen::Matrix2d& sigma, long accepted,
                                        std::uint64_t seed) {
  const Eigen::Matrix2d l = sigma.llt().matrixL();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Eigen::Vector2d> draws;
  draws.reserve(static_cast<std::size_t>(accepted));
  while (static_cast<long>(draws.size()) < accepted) {
    const Eigen::Vector2d v = mu + l * Eigen::Vector2d(z(rng), z(rng));
    if (v(0) >= 0) draws.push_back(v);
  }
  const double n = static_cast<double>(accepted);
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& v : draws) mean += v;
  mean /= n;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& v : draws) cov += (v - mean) * (v - mean).transpose();
  cov /= n - 1.0;
  // Standard error of each covariance entry from the variance of the
  // centred products.
  Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
  for (const auto& v : draws) {
    const Eigen::Matrix2d prod = (v - mean) * (v - mean).transpose() - cov;
    m2 += prod.cwiseProduct(prod);
  }
  MomentEstimate out;
  out.mean = mean;
  out.cov = cov;
  out.mean_se = (cov.diagonal() / n).cwiseSqrt();
  out.cov_se = (m2 / (n - 1.0) / n).cwiseSqrt();
  return out;
}

inline double sum_distances(const Eigen::Matrix2Xd& pts, const Eigen::Vector2d& y) {
  return (pts.colwise() - y).colwise().norm().sum();
}

/// Spatial median by grid refinement: evaluate the objective on a grid,
/// recentre on the best node and shrink.  Convexity makes this reliable.
inline Eigen::Vector2d brute_force_median(const Eigen::Matrix2Xd& pts) {
  Eigen::Vector2d centre = pts.rowwise().mean();
  double half = (pts.rowwise().maxCoeff() - pts.rowwise().minCoeff()).maxCoeff();
  constexpr int kGrid = 20;
  while (half > 1e-9) {
    Eigen::Vector2d best = centre;
    double best_f = sum_distances(pts, centre);
    for (int i = -kGrid; i <= kGrid; ++i) {
      for (int j = -kGrid; j <= kGrid; ++j) {
        const Eigen::Vector2d y = centre + half / kGrid * Eigen::Vector2d(i, j);
        const double f = sum_distances(pts, y);
        if (f < best_f) {
          best_f = f;
          best = y;
        }
      }
    }
    centre = best;
    half *= 0.25;
  }
  return centre;
}

/// 99th percentile of the reliability index under exact uniformity, by
/// multinomial simulation (computed here without the library).
inline double uniform_delta_quantile(int cases, int bins, int reps, double q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> bin(0, bins - 1);
  std::vector<double> deltas;
  deltas.reserve(reps);
  std::vector<int> counts(bins);
  for (int r = 0; r < reps; ++r) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int c = 0; c < cases; ++c) ++counts[bin(rng)];
    double d = 0.0;
    for (const int k : counts) d += std::abs(static_cast<double>(k) / cases - 1.0 / bins);
    deltas.push_back(d);
  }
  std::sort(deltas.begin(), deltas.end());
  return deltas[static_cast<std::size_t>(q * (reps - 1))];
}

}  // namespace oracle

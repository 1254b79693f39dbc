#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bivemos/normal.hpp"
#include "bivemos/trunc_bivariate_normal.hpp"
#include "bivemos/univariate.hpp"
#include "support/oracles.hpp"

using namespace bivemos;
using Eigen::Matrix2d;
using Eigen::Vector2d;

namespace {

TruncBivariateNormald law(double mw, double mt, double sww, double swt, double stt) {
  Matrix2d s;
  s << sww, swt, swt, stt;
  return TruncBivariateNormald(Vector2d(mw, mt), s);
}

}  // namespace

TEST(StandardNormal, BasicValues) {
  EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(std_normal_pdf(0.0), 0.3989422804014327, 1e-15);
}

TEST(StandardNormal, CdfMatchesSeries) {
  for (double z = -7.5; z <= 7.5; z += 0.37) {
    const double ref = oracle::normal_cdf_series(z);
    EXPECT_NEAR(std_normal_cdf(z), ref, 1e-14 + 1e-12 * ref) << z;
  }
}

TEST(StandardNormal, LogCdfDeepTail) {
  for (double z : {-5.0, -7.0}) {
    EXPECT_NEAR(std_normal_log_cdf(z), std::log(oracle::normal_cdf_series(z)), 1e-3) << z;
  }
  // Far tail against the leading Mills term.
  const double z = -40.0;
  const double lead = -0.5 * z * z - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(std_normal_log_cdf(z), lead, 1e-3);
  EXPECT_TRUE(std::isfinite(std_normal_log_cdf(-200.0)));
  EXPECT_NEAR(std_normal_log_cdf(10.0), 0.0, 1e-20);
}

TEST(StandardNormal, QuantileAgainstBisection) {
  EXPECT_NEAR(std_normal_quantile(0.975), oracle::normal_quantile_bisect(0.975), 1e-12);
  EXPECT_NEAR(std_normal_quantile(0.975), 1.959964, 1e-6);
  for (double p : {1e-9, 1e-4, 0.02, 0.3, 0.5, 0.77, 0.98, 0.9999}) {
    EXPECT_NEAR(std_normal_quantile(p), oracle::normal_quantile_bisect(p), 1e-9) << p;
  }
  EXPECT_THROW(std_normal_quantile(0.0), std::domain_error);
  EXPECT_THROW(std_normal_quantile(1.0), std::domain_error);
}

TEST(TruncBivariateNormal, RejectsNonPositiveDefinite) {
  Matrix2d s;
  s << 1, 2, 2, 1;
  EXPECT_THROW(TruncBivariateNormald(Vector2d(0, 0), s), std::domain_error);
  EXPECT_FALSE(TruncBivariateNormald::make(Vector2d(0, 0), s).has_value());
  EXPECT_FALSE(TruncBivariateNormald::make(Vector2d(0, 0), Matrix2d::Zero()).has_value());
}

TEST(TruncBivariateNormal, LogPdfFarFromTruncation) {
  const auto l = law(100, 0, 1, 0, 1);
  EXPECT_NEAR(log_pdf(l, Vector2d(100, 0)), -std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(TruncBivariateNormal, LogPdfOutsideSupport) {
  const auto l = law(1, 2, 1, 0, 1);
  EXPECT_EQ(log_pdf(l, Vector2d(-0.1, 2)), -std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isfinite(log_pdf(l, Vector2d(0.0, 2))));
}

TEST(TruncBivariateNormal, LogPdfMatchesDirectFormula) {
  Matrix2d s;
  s << 4, 1, 1, 9;
  const Vector2d mu(1, 2);
  const TruncBivariateNormald l(mu, s);
  for (const Vector2d x : {Vector2d(0.5, 1), Vector2d(0, -3), Vector2d(6, 10), Vector2d(2.5, 2)}) {
    EXPECT_NEAR(log_pdf(l, x), std::log(oracle::tbn_density(x, mu, s)), 1e-12);
  }
}

TEST(TruncBivariateNormal, DensityIntegratesToOne) {
  Matrix2d s;
  s << 4, 1, 1, 9;
  const TruncBivariateNormald l(Vector2d(1, 2), s);
  const double mass = oracle::integrate_2d([&](double w, double t) { return pdf(l, Vector2d(w, t)); }, 0.0, 25.0,
                                           -28.0, 32.0);
  EXPECT_NEAR(mass, 1.0, 1e-6);
}

TEST(TruncBivariateNormal, FactorizesWithoutCovariance) {
  const auto l = law(1.3, 280, 2.25, 0, 16);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const Vector2d x(0.4 * i, 272 + 1.7 * j);
      const double ref = oracle::truncnormal_log_pdf(x(0), 1.3, 1.5) + std::log(oracle::normal_pdf((x(1) - 280) / 4) / 4);
      EXPECT_NEAR(log_pdf(l, x), ref, 1e-10);
    }
  }
}

TEST(TruncBivariateNormal, MomentsLimits) {
  const auto far = moments(law(50, 0, 1, 0, 1));
  EXPECT_NEAR(far.kappa(0), 50, 1e-10);
  EXPECT_NEAR(far.kappa(1), 0, 1e-10);
  EXPECT_TRUE(far.xi.isApprox(Matrix2d::Identity(), 1e-10));

  const auto half = moments(law(0, 0, 1, 0, 1));
  EXPECT_NEAR(half.kappa(0), std::sqrt(2.0 / std::numbers::pi), 1e-12);
  EXPECT_NEAR(half.kappa(1), 0.0, 1e-15);
  EXPECT_NEAR(half.xi(0, 0), 1.0 - 2.0 / std::numbers::pi, 1e-12);
}

TEST(TruncBivariateNormal, MomentsMatchRejectionOracle) {
  Matrix2d s;
  s << 4, 1, 1, 9;
  const Vector2d mu(1, 2);
  const auto m = moments(TruncBivariateNormald(mu, s));
  const auto ref = oracle::rejection_moments(mu, s, 1'000'000, 11);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(m.kappa(i), ref.mean(i), 3 * ref.mean_se(i)) << i;
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(m.xi(i, j), ref.cov(i, j), 3 * ref.cov_se(i, j)) << i << j;
  }
}

TEST(TruncBivariateNormal, MomentsMatchQuadrature) {
  // Deep truncation: alpha = -2.
  Matrix2d s;
  s << 1, -0.6, -0.6, 1;
  const Vector2d mu(-2, 0.5);
  const TruncBivariateNormald l(mu, s);
  const auto m = moments(l);
  auto expect = [&](auto g) {
    return oracle::integrate_2d([&](double w, double t) { return g(w, t) * oracle::tbn_density({w, t}, mu, s); }, 0.0,
                                6.0, -7.0, 8.0);
  };
  const double ew = expect([](double w, double) { return w; });
  const double et = expect([](double, double t) { return t; });
  EXPECT_NEAR(m.kappa(0), ew, 1e-7);
  EXPECT_NEAR(m.kappa(1), et, 1e-7);
  EXPECT_NEAR(m.xi(0, 0), expect([&](double w, double) { return (w - ew) * (w - ew); }), 1e-7);
  EXPECT_NEAR(m.xi(0, 1), expect([&](double w, double t) { return (w - ew) * (t - et); }), 1e-7);
  EXPECT_NEAR(m.xi(1, 1), expect([&](double, double t) { return (t - et) * (t - et); }), 1e-7);
}

TEST(TruncBivariateNormal, SampleMeanNearKappa) {
  for (const auto& l : {law(1, 2, 4, 1, 9), law(-1, 0, 1, 0.5, 2), law(-3, 0, 1, 0, 1), law(0.2, 5, 0.3, -0.2, 1)}) {
    const auto x = sample(l, 1000, 77);
    const auto m = moments(l);
    const Vector2d mean = x.rowwise().mean();
    for (int i = 0; i < 2; ++i) EXPECT_LT(std::abs(mean(i) - m.kappa(i)), 4 * std::sqrt(m.xi(i, i) / 1000));
    EXPECT_GE(x.row(0).minCoeff(), 0.0);
  }
}

TEST(TruncBivariateNormal, DeepTruncationSamplerTerminatesAndRespectsSupport) {
  const auto l = law(-30, 0, 1, 0.5, 1);
  const auto x = sample(l, 5000, 3);
  EXPECT_GE(x.row(0).minCoeff(), 0.0);
  EXPECT_TRUE(x.allFinite());
  EXPECT_NEAR(x.row(0).mean(), moments(l).kappa(0), 0.01);
}

TEST(TruncBivariateNormal, SamplerDeterministic) {
  const auto l = law(1, 2, 4, 1, 9);
  EXPECT_EQ(sample(l, 100, 5), sample(l, 100, 5));
  EXPECT_NE(sample(l, 100, 5), sample(l, 100, 6));
}

TEST(Crps, NormalAtMode) {
  EXPECT_NEAR(crps_normal(0, 1, 0), 2 * oracle::normal_pdf(0) - 1 / std::sqrt(std::numbers::pi), 1e-14);
  EXPECT_NEAR(crps_normal(0, 1, 0), 0.2336949, 1e-7);
  EXPECT_LT(crps_normal(3, 1e-8, 3), 1e-8);
  EXPECT_THROW(crps_normal(0, 0, 0), std::domain_error);
}

TEST(Crps, NormalMatchesKernelMonteCarlo) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 400000;
  double e1 = 0, e2 = 0;
  for (int i = 0; i < n; ++i) {
    const double a = 0.5 + 2 * z(rng), b = 0.5 + 2 * z(rng);
    e1 += std::abs(a - 1.3);
    e2 += std::abs(a - b);
  }
  EXPECT_NEAR(crps_normal(0.5, 2, 1.3), e1 / n - 0.5 * e2 / n, 0.01);
}

TEST(Crps, TruncNormalMatchesIntegralDefinition) {
  auto integral = [](double mu, double s, double y) {
    const double p = oracle::normal_cdf_series(mu / s);
    auto cdf = [&](double x) { return x <= 0 ? 0.0 : (oracle::normal_cdf_series((x - mu) / s) - (1 - p)) / p; };
    const double upper = std::max(y, mu) + 12 * s;
    return oracle::integrate([&](double x) { return cdf(x) * cdf(x); }, 0.0, std::max(y, 0.0), 64, 20) +
           oracle::integrate([&](double x) { return (1 - cdf(x)) * (1 - cdf(x)); }, std::max(y, 0.0), upper, 64, 20);
  };
  EXPECT_NEAR(crps_truncnormal(0, 1, 1), integral(0, 1, 1), 1e-6);
  for (const auto& [mu, s, y] : {std::tuple{2.0, 1.5, 0.3}, {-1.0, 1.0, 0.5}, {-4.0, 0.8, 0.1}, {5.0, 2.0, 9.0}}) {
    EXPECT_NEAR(crps_truncnormal(mu, s, y), integral(mu, s, y), 1e-6) << mu << " " << s << " " << y;
  }
}

TEST(Crps, TruncNormalLimitsAndExtension) {
  EXPECT_NEAR(crps_truncnormal(50, 1, 50), crps_normal(50, 1, 50), 1e-8);
  // Deep truncation branch stays finite and positive.
  const double deep = crps_truncnormal(-10, 1, 0.05);
  EXPECT_TRUE(std::isfinite(deep));
  EXPECT_GT(deep, 0.0);
  // Negative observation: distance to the support added to the value at 0.
  EXPECT_NEAR(crps_truncnormal(1, 1, -2), crps_truncnormal(1, 1, 0) + 2, 1e-12);
}

TEST(Crps, MinimizedAtMedian) {
  const auto half_normal = UnivariateLaw::zero_truncated(0, 1);
  const double med = univ_quantile(half_normal, 0.5);
  // CRPS expectation over the law is minimized by the law itself; as a
  // function of a point observation the score is smallest at the median.
  const double at = crps(half_normal, med);
  EXPECT_LT(at, crps(half_normal, med + 0.05));
  EXPECT_LT(at, crps(half_normal, med - 0.05));
}

TEST(Univariate, CdfQuantile) {
  EXPECT_DOUBLE_EQ(univ_cdf(UnivariateLaw::normal(0, 1), 0), 0.5);
  EXPECT_NEAR(univ_quantile(UnivariateLaw::zero_truncated(0, 1), 0.5), oracle::normal_quantile_bisect(0.75), 1e-10);
  EXPECT_NEAR(univ_quantile(UnivariateLaw::zero_truncated(0, 1), 0.5), 0.6744898, 1e-7);
  EXPECT_NEAR(univ_cdf(UnivariateLaw::zero_truncated(5, 1), 5), 0.5, 1e-6);
  const auto t = UnivariateLaw::zero_truncated(-2, 1.5);
  for (double p : {1e-6, 0.1, 0.5, 0.9, 1 - 1e-9}) EXPECT_NEAR(univ_cdf(t, univ_quantile(t, p)), p, 1e-9) << p;
  EXPECT_THROW(univ_quantile(t, 1.0), std::domain_error);
  EXPECT_THROW(UnivariateLaw::normal(0, -1), std::domain_error);
}

TEST(Univariate, MomentsAgainstQuadrature) {
  const auto t = UnivariateLaw::zero_truncated(0.7, 1.9);
  auto dens = [](double x) { return std::exp(oracle::truncnormal_log_pdf(x, 0.7, 1.9)); };
  const double m = oracle::integrate([&](double x) { return x * dens(x); }, 0, 30);
  const double v = oracle::integrate([&](double x) { return (x - m) * (x - m) * dens(x); }, 0, 30);
  EXPECT_NEAR(univ_mean(t), m, 1e-9);
  EXPECT_NEAR(univ_variance(t), v, 1e-9);
  EXPECT_NEAR(univ_log_pdf(t, 1.1), oracle::truncnormal_log_pdf(1.1, 0.7, 1.9), 1e-12);
}

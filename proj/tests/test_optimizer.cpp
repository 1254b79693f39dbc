#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bivemos/optimizer.hpp"

using namespace bivemos;
using Eigen::VectorXd;

namespace {

double rosenbrock(const VectorXd& x) {
  return 100 * std::pow(x(1) - x(0) * x(0), 2) + std::pow(1 - x(0), 2);
}

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

class BothMethods : public ::testing::TestWithParam<OptimizerMethod> {
 protected:
  OptimizerConfig cfg() const {
    OptimizerConfig c;
    c.method = GetParam();
    return c;
  }
};

}  // namespace

TEST_P(BothMethods, ConvexQuadratic) {
  const VectorXd c = vec({3, -2});
  const auto r = minimize([&](const VectorXd& x) { return (x - c).squaredNorm(); }, VectorXd::Zero(2), cfg());
  EXPECT_LT((r.x_min - c).norm(), 1e-6);
  EXPECT_TRUE(r.converged);
}

TEST_P(BothMethods, RespectsBarrier) {
  // +inf for x0 > 1; the unconstrained minimum lies beyond the barrier.
  const auto f = [&](const VectorXd& x) {
    if (x(0) > 1.0) return std::numeric_limits<double>::infinity();
    return (x(0) - 2) * (x(0) - 2) + x(1) * x(1);
  };
  const auto r = minimize(f, vec({0, 0.5}), cfg());
  EXPECT_TRUE(std::isfinite(r.f_min));
  EXPECT_LE(r.x_min(0), 1.0);
  EXPECT_NEAR(r.x_min(0), 1.0, 1e-3);
}

TEST_P(BothMethods, Deterministic) {
  const auto a = minimize(rosenbrock, vec({-1.2, 1}), cfg());
  const auto b = minimize(rosenbrock, vec({-1.2, 1}), cfg());
  EXPECT_EQ(a.x_min, b.x_min);
  EXPECT_EQ(a.f_min, b.f_min);
  EXPECT_EQ(a.evals, b.evals);
  EXPECT_EQ(a.converged, b.converged);
}

TEST_P(BothMethods, BudgetHonoured) {
  OptimizerConfig c = cfg();
  c.max_evals = 37;
  int calls = 0;
  const auto r = minimize(
      [&](const VectorXd& x) {
        ++calls;
        return rosenbrock(x);
      },
      vec({-1.2, 1}), c);
  EXPECT_LE(calls, 37);
  EXPECT_EQ(r.evals, calls);
  EXPECT_FALSE(r.converged);
  EXPECT_TRUE(std::isfinite(r.f_min));
}

TEST_P(BothMethods, RejectsNonFiniteStart) {
  EXPECT_THROW(minimize([](const VectorXd&) { return std::nan(""); }, VectorXd::Zero(2), cfg()),
               std::invalid_argument);
}

INSTANTIATE_TEST_SUITE_P(Optimizer, BothMethods,
                         ::testing::Values(OptimizerMethod::Simplex, OptimizerMethod::QuasiNewton),
                         [](const auto& info) {
                           return info.param == OptimizerMethod::Simplex ? std::string("Simplex")
                                                                         : std::string("QuasiNewton");
                         });

TEST(NelderMead, RosenbrockWithin400Evaluations) {
  OptimizerConfig c;
  c.max_evals = 400;
  c.f_tol = 1e-14;
  c.x_tol = 1e-10;
  const auto r = nelder_mead(rosenbrock, vec({-1.2, 1}), c);
  EXPECT_LE(r.evals, 400);
  EXPECT_LT(r.f_min, 1e-8);
  EXPECT_NEAR(r.x_min(0), 1.0, 1e-3);
  EXPECT_NEAR(r.x_min(1), 1.0, 1e-3);
}

TEST(QuasiNewton, RosenbrockConverges) {
  OptimizerConfig c;
  c.method = OptimizerMethod::QuasiNewton;
  const auto r = quasi_newton(rosenbrock, vec({-1.2, 1}), c);
  EXPECT_LT(r.f_min, 1e-8);
}

TEST(NelderMead, HigherDimensionalQuadratic) {
  VectorXd target(8);
  target << 1, -2, 3, -4, 5, -6, 7, -8;
  const auto r = nelder_mead([&](const VectorXd& x) { return (x - target).squaredNorm(); }, VectorXd::Zero(8), {});
  EXPECT_LT((r.x_min - target).norm(), 1e-3);
}

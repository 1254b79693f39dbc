#include "bivemos/optimizer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace bivemos {

namespace {

// Objective-change tolerance scaled by the objective magnitude.
double relative_tol(double f, double tol) { return tol * (std::abs(f) + tol); }

constexpr double kInf = std::numeric_limits<double>::infinity();

// Counts evaluations and maps NaN / -inf / +inf to +inf.  Once the budget
// is spent every further probe reads +inf without calling the objective.
class CountedObjective {
 public:
  CountedObjective(const Objective& f, int budget) : f_(f), budget_(budget) {}

  double operator()(const Eigen::VectorXd& x) {
    if (evals_ >= budget_) {
      exhausted_ = true;
      return kInf;
    }
    ++evals_;
    const double v = f_(x);
    return std::isfinite(v) ? v : kInf;
  }

  int evals() const { return evals_; }
  bool exhausted() const { return exhausted_ || evals_ >= budget_; }

 private:
  const Objective& f_;
  int budget_;
  int evals_ = 0;
  bool exhausted_ = false;
};

void check_config(const OptimizerConfig& cfg) {
  if (cfg.max_evals < 0 || !(cfg.x_tol > 0.0) || !(cfg.f_tol > 0.0) ||
      !(cfg.simplex_init_step > 0.0) || cfg.simplex_restarts < 0) {
    throw std::invalid_argument("OptimizerConfig: budget must be >= 1 and tolerances > 0");
  }
}

}  // namespace

OptimResult minimize(const Objective& objective, const Eigen::VectorXd& x0,
                     const OptimizerConfig& cfg) {
  return cfg.method == OptimizerMethod::Simplex ? nelder_mead(objective, x0, cfg)
                                                : quasi_newton(objective, x0, cfg);
}

// Nelder-Mead with reflection 1, expansion 2, contraction 1/2, shrink 1/2.
OptimResult nelder_mead(const Objective& objective, const Eigen::VectorXd& x0,
                        const OptimizerConfig& cfg) {
  check_config(cfg);
  const Eigen::Index n = x0.size();
  const int budget = cfg.eval_budget(n);
  CountedObjective f(objective, budget);

  const double f0 = f(x0);
  if (!std::isfinite(f0)) {
    throw std::invalid_argument("nelder_mead: objective is not finite at the starting point");
  }

  Eigen::MatrixXd simplex(n, n + 1);
  Eigen::VectorXd values(n + 1);
  auto build_simplex = [&](const Eigen::VectorXd& x, double fx) {
    simplex.col(0) = x;
    values(0) = fx;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd v = x;
      v(i) += std::max(cfg.simplex_init_step * std::abs(x(i)), cfg.simplex_init_step);
      simplex.col(i + 1) = v;
      values(i + 1) = f(v);
    }
  };
  build_simplex(x0, f0);

  std::vector<Eigen::Index> order(n + 1);
  bool converged = false;
  int restarts = 0;
  double restart_value = f0;

  while (true) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
    const Eigen::Index best = order.front();
    const Eigen::Index worst = order.back();
    const Eigen::Index second_worst = order[n - 1];

    double diameter = 0.0;
    for (Eigen::Index j = 0; j <= n; ++j) {
      diameter = std::max(diameter, (simplex.col(j) - simplex.col(best)).cwiseAbs().maxCoeff());
    }
    const double spread = values(worst) - values(best);
    if (diameter < cfg.x_tol || spread <= relative_tol(values(best), cfg.f_tol)) {
      // A collapsed simplex can stall away from the minimum; restart from
      // the best vertex until a restart no longer improves.
      const bool improved = restart_value - values(best) > relative_tol(values(best), cfg.f_tol);
      if (restarts >= cfg.simplex_restarts || !improved || f.exhausted()) {
        converged = true;
        break;
      }
      ++restarts;
      restart_value = values(best);
      const Eigen::VectorXd x = simplex.col(best);
      build_simplex(x, restart_value);
      continue;
    }
    if (f.exhausted()) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j <= n; ++j) {
      if (j != worst) centroid += simplex.col(j);
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex.col(worst));
    const double f_reflected = f(reflected);

    if (f_reflected < values(best)) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex.col(worst));
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        simplex.col(worst) = expanded;
        values(worst) = f_expanded;
      } else {
        simplex.col(worst) = reflected;
        values(worst) = f_reflected;
      }
      continue;
    }
    if (f_reflected < values(second_worst)) {
      simplex.col(worst) = reflected;
      values(worst) = f_reflected;
      continue;
    }

    bool accepted = false;
    if (f_reflected < values(worst)) {
      const Eigen::VectorXd outside = centroid + 0.5 * (reflected - centroid);
      const double f_outside = f(outside);
      if (f_outside <= f_reflected) {
        simplex.col(worst) = outside;
        values(worst) = f_outside;
        accepted = true;
      }
    } else {
      const Eigen::VectorXd inside = centroid + 0.5 * (simplex.col(worst) - centroid);
      const double f_inside = f(inside);
      if (f_inside < values(worst)) {
        simplex.col(worst) = inside;
        values(worst) = f_inside;
        accepted = true;
      }
    }
    if (accepted) continue;

    for (Eigen::Index j = 0; j <= n; ++j) {
      if (j == best) continue;
      simplex.col(j) = simplex.col(best) + 0.5 * (simplex.col(j) - simplex.col(best));
      values(j) = f(simplex.col(j));
    }
  }

  Eigen::Index best = 0;
  values.minCoeff(&best);
  return {simplex.col(best), values(best), f.evals(), converged};
}

namespace {

// Central differences with step 1e-6 (1 + |x_i|); one-sided where the
// barrier blocks one side, zero where both sides are blocked.
Eigen::VectorXd fd_gradient(CountedObjective& f, const Eigen::VectorXd& x, double fx) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-6 * (1.0 + std::abs(x(i)));
    probe(i) = x(i) + h;
    const double up = f(probe);
    probe(i) = x(i) - h;
    const double down = f(probe);
    probe(i) = x(i);
    if (std::isfinite(up) && std::isfinite(down)) {
      g(i) = (up - down) / (2.0 * h);
    } else if (std::isfinite(up)) {
      g(i) = (up - fx) / h;
    } else if (std::isfinite(down)) {
      g(i) = (fx - down) / h;
    } else {
      g(i) = 0.0;
    }
  }
  return g;
}

}  // namespace

OptimResult quasi_newton(const Objective& objective, const Eigen::VectorXd& x0,
                         const OptimizerConfig& cfg) {
  check_config(cfg);
  const Eigen::Index n = x0.size();
  const int budget = cfg.eval_budget(n);
  CountedObjective f(objective, budget);

  Eigen::VectorXd x = x0;
  double fx = f(x);
  if (!std::isfinite(fx)) {
    throw std::invalid_argument("quasi_newton: objective is not finite at the starting point");
  }
  Eigen::VectorXd g = fd_gradient(f, x, fx);
  if (f.exhausted()) return {x, fx, f.evals(), false};
  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
  bool fresh_hessian = true;
  bool converged = false;

  while (!f.exhausted()) {
    if (g.cwiseAbs().maxCoeff() == 0.0) {
      converged = true;
      break;
    }
    Eigen::VectorXd direction = -inv_hessian * g;
    double slope = g.dot(direction);
    if (!(slope < 0.0)) {
      inv_hessian.setIdentity();
      fresh_hessian = true;
      direction = -g;
      slope = -g.squaredNorm();
    }

    // Backtracking Armijo line search; +inf trial values just shrink the step.
    double step = 1.0;
    double f_new = kInf;
    Eigen::VectorXd x_new;
    bool found = false;
    for (int tries = 0; tries < 60 && !f.exhausted(); ++tries) {
      x_new = x + step * direction;
      f_new = f(x_new);
      if (f_new <= fx + 1e-4 * step * slope) {
        found = true;
        break;
      }
      step *= 0.5;
    }
    if (!found) {
      if (fresh_hessian) break;
      inv_hessian.setIdentity();
      fresh_hessian = true;
      continue;
    }

    const Eigen::VectorXd s = x_new - x;
    const double decrease = fx - f_new;
    x = x_new;
    fx = f_new;
    if (s.cwiseAbs().maxCoeff() < cfg.x_tol || decrease <= relative_tol(f_new, cfg.f_tol)) {
      converged = true;
      break;
    }

    const Eigen::VectorXd g_new = fd_gradient(f, x, fx);
    if (f.exhausted()) break;
    const Eigen::VectorXd y = g_new - g;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_hessian) {
        inv_hessian *= sy / y.squaredNorm();
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = inv_hessian * y;
      inv_hessian += (rho * rho * y.dot(hy) + rho) * s * s.transpose() -
                     rho * (hy * s.transpose() + s * hy.transpose());
      fresh_hessian = false;
    }
  }

  return {x, fx, f.evals(), converged};
}

}  // namespace bivemos

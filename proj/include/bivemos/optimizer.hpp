// Unconstrained minimizers for the score-based EMOS fits.

#pragma once

#include <Eigen/Core>
#include <functional>

namespace bivemos {

enum class OptimizerMethod { Simplex, QuasiNewton };

struct OptimizerConfig {
  OptimizerMethod method = OptimizerMethod::Simplex;
  /// Objective evaluation budget; 0 means 500 * dimension.
  int max_evals = 0;
  /// Stop when the simplex diameter (or quasi-Newton step) is below x_tol
  /// or the objective spread is at most f_tol * (|f_best| + f_tol).
  double x_tol = 1e-8;
  double f_tol = 1e-8;
  double simplex_init_step = 0.1;
  /// Fresh simplices built around the best vertex after convergence.
  int simplex_restarts = 3;

  int eval_budget(Eigen::Index dim) const {
    return max_evals > 0 ? max_evals : static_cast<int>(500 * dim);
  }
};

struct OptimResult {
  Eigen::VectorXd x_min;
  double f_min = 0.0;
  int evals = 0;
  bool converged = false;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Minimizes `objective` from `x0`.  Non-finite objective values (NaN or
/// +inf) are treated as +inf, so they act as a barrier.  Throws
/// std::invalid_argument if the objective is not finite at x0.
OptimResult minimize(const Objective& objective, const Eigen::VectorXd& x0,
                     const OptimizerConfig& cfg = {});

OptimResult nelder_mead(const Objective& objective, const Eigen::VectorXd& x0,
                        const OptimizerConfig& cfg);

OptimResult quasi_newton(const Objective& objective, const Eigen::VectorXd& x0,
                         const OptimizerConfig& cfg);

}  // namespace bivemos

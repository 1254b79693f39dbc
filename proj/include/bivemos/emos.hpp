// Bivariate truncated-normal EMOS for (wind speed, temperature) and the
// independent univariate EMOS baselines.
//
// Members are split into m exchangeable groups; members of one group share a
// location coefficient matrix.  The predictive law of a case is
//
//     N2^0( A + sum_k B_k * (sum of members in group k),  C + D S D^T ),
//
// with S the unbiased ensemble covariance and C = Cf Cf^T.  The fully
// distinguishable layout is the special case of M singleton groups.

#pragma once

#include <Eigen/Core>
#include <chrono>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bivemos/optimizer.hpp"
#include "bivemos/trunc_bivariate_normal.hpp"
#include "bivemos/univariate.hpp"

namespace bivemos {

using Eigen::Matrix2d;
using Eigen::Matrix2Xd;
using Eigen::Vector2d;

/// Raised when a fit cannot be attempted (too few cases, empty training).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Partition of M ensemble members into m exchangeable groups.  Members are
/// assigned to groups contiguously in column order.
class GroupSpec {
 public:
  GroupSpec() = default;
  explicit GroupSpec(std::vector<int> group_sizes);

  /// Parses "1,10" (sizes) or "1x8" (eight groups of size 1); tokens may be
  /// mixed, e.g. "1,2x5".
  static GroupSpec parse(std::string_view text);
  static GroupSpec distinguishable(int members) { return GroupSpec(std::vector<int>(members, 1)); }

  int members() const { return static_cast<int>(member_to_group_.size()); }
  int groups() const { return static_cast<int>(group_sizes_.size()); }
  const std::vector<int>& group_sizes() const { return group_sizes_; }
  const std::vector<int>& member_to_group() const { return member_to_group_; }
  std::string to_string() const;

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;

 private:
  std::vector<int> group_sizes_;
  std::vector<int> member_to_group_;
};

using Date = std::chrono::sys_days;

/// One (date, station) record.  Columns of `members` are the member
/// forecasts (wind m/s, temperature K).
struct ForecastCase {
  Date date{};
  std::string station;
  Matrix2Xd members;
  std::optional<Vector2d> observation;
};

enum class Variable { Wind = 0, Temp = 1 };

struct EnsembleStats {
  Vector2d mean;
  Matrix2d cov;
};

/// Ensemble mean and unbiased (M - 1 divisor) covariance.  Throws for M < 2.
EnsembleStats ensemble_stats(const ForecastCase& c);

/// 2 x m matrix whose column k is the sum of the member vectors of group k.
Matrix2Xd group_sums(const ForecastCase& c, const GroupSpec& groups);

struct BivariateEmosParams {
  Vector2d a = Vector2d::Zero();
  std::vector<Matrix2d> b;
  /// Square-root factor of C; optimized as a full 2x2 matrix.
  Matrix2d c_factor = Matrix2d::Identity();
  Matrix2d d = Matrix2d::Zero();

  Matrix2d c() const { return c_factor * c_factor.transpose(); }

  /// 2 + 4m + 4 + 4 = 4m + 10 free parameters.
  static int free_parameter_count(int groups) { return 4 * groups + 10; }
  Eigen::VectorXd pack() const;
  static BivariateEmosParams unpack(const Eigen::VectorXd& theta, int groups);
};

/// Predictive law of a case; nullopt when C + D S D^T is not positive
/// definite.  Throws std::invalid_argument when dimensions do not match.
std::optional<TruncBivariateNormald> predictive_law(const BivariateEmosParams& params,
                                                    const ForecastCase& c,
                                                    const GroupSpec& groups);

/// Mean of -log g(obs) over the cases; +inf if any law is invalid or any
/// density vanishes.  Throws FitError for an empty set or a case without an
/// observation.
double mean_log_score(const BivariateEmosParams& params, std::span<const ForecastCase> training,
                      const GroupSpec& groups);

struct BivariateFitOptions {
  OptimizerConfig optimizer{};
  /// Initial C and D; the location part always comes from the regression.
  std::optional<Matrix2d> initial_c_factor;
  std::optional<Matrix2d> initial_d;
};

struct BivariateFit {
  BivariateEmosParams params;
  double score = 0.0;          ///< mean log score at params
  double initial_score = 0.0;  ///< mean log score at the initialization
  OptimResult optim;
  bool regression_fallback = false;
};

/// Regression-based location start (A, B_k) with C = I, D = 0.1 I.
BivariateEmosParams initial_bivariate_params(std::span<const ForecastCase> training,
                                             const GroupSpec& groups,
                                             bool* used_fallback = nullptr);

BivariateFit fit_bivariate(std::span<const ForecastCase> training, const GroupSpec& groups,
                           const BivariateFitOptions& options = {});

/// Location = intercept + sum_k coeff_k * (group-k sum of this variable),
/// variance = var_c + var_d * s^2.
struct UnivariateEmosParams {
  double intercept = 0.0;
  Eigen::VectorXd member_coeffs;
  double var_c = 1.0;
  double var_d = 0.0;

  static int free_parameter_count(int groups) { return groups + 3; }
};

UnivariateLaw univariate_law(const UnivariateEmosParams& params, const ForecastCase& c,
                             Variable variable, const GroupSpec& groups);

double mean_crps(const UnivariateEmosParams& params, std::span<const ForecastCase> training,
                 Variable variable, const GroupSpec& groups);

struct UnivariateFitOptions {
  OptimizerConfig optimizer{};
  bool nonnegative_coeffs = false;
};

struct UnivariateFit {
  UnivariateEmosParams params;
  double score = 0.0;
  double initial_score = 0.0;
  OptimResult optim;
};

UnivariateFit fit_univariate(std::span<const ForecastCase> training, Variable variable,
                             const GroupSpec& groups, const UnivariateFitOptions& options = {});

}  // namespace bivemos

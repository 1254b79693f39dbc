#include "bivemos/emos.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace bivemos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int parse_positive(std::string_view token, std::string_view whole) {
  int value = 0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || value < 1) {
    throw std::invalid_argument("group spec '" + std::string(whole) +
                                "': expected positive integers, got '" + std::string(token) + "'");
  }
  return value;
}

void require_observations(std::span<const ForecastCase> training) {
  if (training.empty()) throw FitError("training set is empty");
  for (const auto& c : training) {
    if (!c.observation) throw FitError("training case without observation (" + c.station + ")");
  }
}

void require_size(std::span<const ForecastCase> training, int parameters) {
  if (static_cast<int>(training.size()) < parameters) {
    throw FitError("training set has " + std::to_string(training.size()) + " cases but the model has " +
                   std::to_string(parameters) + " free parameters");
  }
}

// Per-coordinate centring and scaling of the group-sum predictors.  The
// optimizer works on standardized predictors; the model itself is unchanged
// since any affine change of predictors is absorbed by A and B_k.
struct PredictorScaling {
  Matrix2Xd center;  // 2 x m
  Matrix2Xd scale;   // 2 x m, strictly positive
};

PredictorScaling predictor_scaling(const std::vector<Matrix2Xd>& sums) {
  const Eigen::Index m = sums.front().cols();
  const double n = static_cast<double>(sums.size());
  PredictorScaling s{Matrix2Xd::Zero(2, m), Matrix2Xd::Zero(2, m)};
  for (const auto& g : sums) s.center += g;
  s.center /= n;
  for (const auto& g : sums) s.scale += (g - s.center).cwiseAbs2();
  s.scale = (s.scale / n).cwiseSqrt();
  for (Eigen::Index k = 0; k < m; ++k) {
    for (int r = 0; r < 2; ++r) {
      if (!(s.scale(r, k) > 1e-12 * (1.0 + std::abs(s.center(r, k))))) s.scale(r, k) = 1.0;
    }
  }
  return s;
}

// Internal (standardized) location parameters <-> model parameters.
void to_model_location(const Vector2d& a_std, const std::vector<Matrix2d>& b_std,
                       const PredictorScaling& scaling, Vector2d& a, std::vector<Matrix2d>& b) {
  const auto m = b_std.size();
  b.resize(m);
  a = a_std;
  for (std::size_t k = 0; k < m; ++k) {
    for (int c = 0; c < 2; ++c) {
      b[k].col(c) = b_std[k].col(c) / scaling.scale(c, static_cast<Eigen::Index>(k));
    }
    a -= b[k] * scaling.center.col(static_cast<Eigen::Index>(k));
  }
}

void to_standardized_location(const Vector2d& a, const std::vector<Matrix2d>& b,
                              const PredictorScaling& scaling, Vector2d& a_std,
                              std::vector<Matrix2d>& b_std) {
  const auto m = b.size();
  b_std.resize(m);
  a_std = a;
  for (std::size_t k = 0; k < m; ++k) {
    a_std += b[k] * scaling.center.col(static_cast<Eigen::Index>(k));
    for (int c = 0; c < 2; ++c) {
      b_std[k].col(c) = b[k].col(c) * scaling.scale(c, static_cast<Eigen::Index>(k));
    }
  }
}

// OLS of y on [1, X]; nullopt when the design is rank deficient.
std::optional<Eigen::VectorXd> least_squares(const Eigen::MatrixXd& design, const Eigen::VectorXd& y) {
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) return std::nullopt;
  return Eigen::VectorXd(qr.solve(y));
}

}  // namespace

// ---------------------------------------------------------------------------
// GroupSpec

GroupSpec::GroupSpec(std::vector<int> group_sizes) : group_sizes_(std::move(group_sizes)) {
  if (group_sizes_.empty()) throw std::invalid_argument("GroupSpec: at least one group required");
  for (int k = 0; k < static_cast<int>(group_sizes_.size()); ++k) {
    if (group_sizes_[k] < 1) throw std::invalid_argument("GroupSpec: group sizes must be >= 1");
    member_to_group_.insert(member_to_group_.end(), group_sizes_[k], k);
  }
}

GroupSpec GroupSpec::parse(std::string_view text) {
  std::vector<int> sizes;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = std::min(text.find(',', pos), text.size());
    const auto token = text.substr(pos, comma - pos);
    const auto x = token.find('x');
    if (x == std::string_view::npos) {
      sizes.push_back(parse_positive(token, text));
    } else {
      const int size = parse_positive(token.substr(0, x), text);
      const int count = parse_positive(token.substr(x + 1), text);
      sizes.insert(sizes.end(), count, size);
    }
    pos = comma + 1;
  }
  return GroupSpec(std::move(sizes));
}

std::string GroupSpec::to_string() const {
  std::ostringstream os;
  for (std::size_t k = 0; k < group_sizes_.size(); ++k) {
    if (k) os << ',';
    os << group_sizes_[k];
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ensemble summaries and the predictive law

EnsembleStats ensemble_stats(const ForecastCase& c) {
  const Eigen::Index m = c.members.cols();
  if (m < 2) throw std::invalid_argument("ensemble_stats: at least two members required");
  EnsembleStats out;
  out.mean = c.members.rowwise().mean();
  const Matrix2Xd centered = c.members.colwise() - out.mean;
  out.cov = centered * centered.transpose() / static_cast<double>(m - 1);
  return out;
}

Matrix2Xd group_sums(const ForecastCase& c, const GroupSpec& groups) {
  if (c.members.cols() != groups.members()) {
    throw std::invalid_argument("case has " + std::to_string(c.members.cols()) +
                                " members, group spec expects " + std::to_string(groups.members()));
  }
  Matrix2Xd sums = Matrix2Xd::Zero(2, groups.groups());
  const auto& assign = groups.member_to_group();
  for (Eigen::Index j = 0; j < c.members.cols(); ++j) sums.col(assign[j]) += c.members.col(j);
  return sums;
}

Eigen::VectorXd BivariateEmosParams::pack() const {
  const auto m = static_cast<Eigen::Index>(b.size());
  Eigen::VectorXd theta(4 * m + 10);
  theta.segment<2>(0) = a;
  for (Eigen::Index k = 0; k < m; ++k) {
    theta.segment<4>(2 + 4 * k) = b[k].reshaped();
  }
  theta.segment<4>(2 + 4 * m) = c_factor.reshaped();
  theta.segment<4>(6 + 4 * m) = d.reshaped();
  return theta;
}

BivariateEmosParams BivariateEmosParams::unpack(const Eigen::VectorXd& theta, int groups) {
  if (theta.size() != free_parameter_count(groups)) {
    throw std::invalid_argument("BivariateEmosParams::unpack: expected " +
                                std::to_string(free_parameter_count(groups)) + " values");
  }
  BivariateEmosParams p;
  p.a = theta.segment<2>(0);
  p.b.resize(groups);
  for (int k = 0; k < groups; ++k) {
    p.b[k] = theta.segment<4>(2 + 4 * k).reshaped(2, 2);
  }
  p.c_factor = theta.segment<4>(2 + 4 * groups).reshaped(2, 2);
  p.d = theta.segment<4>(6 + 4 * groups).reshaped(2, 2);
  return p;
}

std::optional<TruncBivariateNormald> predictive_law(const BivariateEmosParams& params,
                                                    const ForecastCase& c,
                                                    const GroupSpec& groups) {
  if (static_cast<int>(params.b.size()) != groups.groups()) {
    throw std::invalid_argument("predictive_law: parameter group count does not match group spec");
  }
  const Matrix2Xd sums = group_sums(c, groups);
  Vector2d location = params.a;
  for (int k = 0; k < groups.groups(); ++k) location += params.b[k] * sums.col(k);
  const Matrix2d spread = ensemble_stats(c).cov;
  const Matrix2d scale = params.c() + params.d * spread * params.d.transpose();
  return TruncBivariateNormald::make(location, scale);
}

double mean_log_score(const BivariateEmosParams& params, std::span<const ForecastCase> training,
                      const GroupSpec& groups) {
  require_observations(training);
  double total = 0.0;
  for (const auto& c : training) {
    const auto law = predictive_law(params, c, groups);
    if (!law) return kInf;
    const double lp = log_pdf(*law, *c.observation);
    if (!std::isfinite(lp)) return kInf;
    total -= lp;
  }
  return total / static_cast<double>(training.size());
}

// ---------------------------------------------------------------------------
// Bivariate fit

namespace {

// Training set laid out column-wise so that one objective evaluation is a
// few dense products plus a scalar pass.
struct BivariateProblem {
  PredictorScaling scaling;
  int groups = 0;
  Eigen::MatrixXd z;       // 2m x N, stacked standardized group sums
  Eigen::Matrix3Xd spread; // rows S_ww, S_wt, S_tt
  Eigen::Matrix2Xd obs;    // 2 x N
};

BivariateProblem make_bivariate_problem(std::span<const ForecastCase> training, const GroupSpec& groups) {
  std::vector<Matrix2Xd> sums;
  sums.reserve(training.size());
  for (const auto& c : training) sums.push_back(group_sums(c, groups));
  BivariateProblem p;
  p.groups = groups.groups();
  p.scaling = predictor_scaling(sums);
  const auto n = static_cast<Eigen::Index>(training.size());
  p.z.resize(2 * p.groups, n);
  p.spread.resize(3, n);
  p.obs.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Matrix2d s = ensemble_stats(training[i]).cov;
    p.z.col(i) = (sums[i] - p.scaling.center).cwiseQuotient(p.scaling.scale).reshaped();
    p.spread.col(i) << s(0, 0), s(0, 1), s(1, 1);
    p.obs.col(i) = *training[i].observation;
  }
  return p;
}

// theta = [A'(2), B'_k (4 each), Cf (4), D (4)] in standardized predictors.
double standardized_score(const BivariateProblem& p, const Eigen::VectorXd& theta) {
  const int m = p.groups;
  const Vector2d a = theta.segment<2>(0);
  const Matrix2d cf = theta.segment<4>(2 + 4 * m).reshaped(2, 2);
  const Matrix2d d = theta.segment<4>(6 + 4 * m).reshaped(2, 2);
  const Matrix2d c = cf * cf.transpose();

  const Eigen::Matrix2Xd location = (theta.segment(2, 4 * m).reshaped(2, 2 * m) * p.z).colwise() + a;
  // Entries (ww, wt, tt) of D S D^T as linear maps of (S_ww, S_wt, S_tt).
  Eigen::Matrix3d k;
  k << d(0, 0) * d(0, 0), 2 * d(0, 0) * d(0, 1), d(0, 1) * d(0, 1),
      d(0, 0) * d(1, 0), d(0, 0) * d(1, 1) + d(0, 1) * d(1, 0), d(0, 1) * d(1, 1),
      d(1, 0) * d(1, 0), 2 * d(1, 0) * d(1, 1), d(1, 1) * d(1, 1);
  const Eigen::Matrix3Xd scale = (k * p.spread).colwise() + Eigen::Vector3d(c(0, 0), c(0, 1), c(1, 1));

  constexpr double kLog2Pi = 1.8378770664093453;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.obs.cols(); ++i) {
    const double vw = scale(0, i), vwt = scale(1, i), vt = scale(2, i);
    const double det = vw * vt - vwt * vwt;
    if (!(vw > 0.0) || !(vt > 0.0) || !(det > 0.0) || !std::isfinite(det)) return kInf;
    const double rw = p.obs(0, i) - location(0, i);
    const double rt = p.obs(1, i) - location(1, i);
    const double q = (vt * rw * rw - 2.0 * vwt * rw * rt + vw * rt * rt) / det;
    total += 0.5 * q + kLog2Pi + 0.5 * std::log(det) + std_normal_log_cdf(location(0, i) / std::sqrt(vw));
  }
  return std::isfinite(total) ? total / static_cast<double>(p.obs.cols()) : kInf;
}

// Location start in standardized coordinates; returns false on fallback.
bool regression_start(const BivariateProblem& p, std::span<const ForecastCase> training,
                      const GroupSpec& groups, Vector2d& a_std, std::vector<Matrix2d>& b_std) {
  const auto n = p.obs.cols();
  const int m = p.groups;
  Eigen::MatrixXd design(n, 1 + 2 * m);
  Eigen::MatrixXd response(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    for (int k = 0; k < m; ++k) {
      design(i, 1 + 2 * k) = p.z(2 * k, i);
      design(i, 2 + 2 * k) = p.z(2 * k + 1, i);
    }
    response.row(i) = p.obs.col(i).transpose();
  }
  const auto wind = least_squares(design, response.col(0));
  const auto temp = wind ? least_squares(design, response.col(1)) : std::nullopt;
  if (wind && temp) {
    a_std = Vector2d((*wind)(0), (*temp)(0));
    b_std.assign(m, Matrix2d::Zero());
    for (int k = 0; k < m; ++k) {
      b_std[k] << (*wind)(1 + 2 * k), (*wind)(2 + 2 * k), (*temp)(1 + 2 * k), (*temp)(2 + 2 * k);
    }
    return true;
  }
  // Fallback: climatological bias correction of the ensemble mean.
  Vector2d obs_mean = Vector2d::Zero();
  Vector2d ens_mean = Vector2d::Zero();
  for (std::size_t i = 0; i < training.size(); ++i) {
    obs_mean += p.obs.col(i);
    ens_mean += training[i].members.rowwise().mean();
  }
  obs_mean /= static_cast<double>(n);
  ens_mean /= static_cast<double>(n);
  const std::vector<Matrix2d> b(m, Matrix2d::Identity() / groups.members());
  to_standardized_location(obs_mean - ens_mean, b, p.scaling, a_std, b_std);
  return false;
}

}  // namespace

BivariateEmosParams initial_bivariate_params(std::span<const ForecastCase> training,
                                             const GroupSpec& groups, bool* used_fallback) {
  require_observations(training);
  const auto problem = make_bivariate_problem(training, groups);
  Vector2d a_std;
  std::vector<Matrix2d> b_std;
  const bool ok = regression_start(problem, training, groups, a_std, b_std);
  if (used_fallback) *used_fallback = !ok;
  BivariateEmosParams params;
  to_model_location(a_std, b_std, problem.scaling, params.a, params.b);
  params.c_factor = Matrix2d::Identity();
  params.d = 0.1 * Matrix2d::Identity();
  return params;
}

BivariateFit fit_bivariate(std::span<const ForecastCase> training, const GroupSpec& groups,
                           const BivariateFitOptions& options) {
  require_observations(training);
  const int m = groups.groups();
  require_size(training, BivariateEmosParams::free_parameter_count(m));

  const auto problem = make_bivariate_problem(training, groups);
  Vector2d a_std;
  std::vector<Matrix2d> b_std;
  BivariateFit fit;
  fit.regression_fallback = !regression_start(problem, training, groups, a_std, b_std);

  BivariateEmosParams start_std;
  start_std.a = a_std;
  start_std.b = b_std;
  start_std.c_factor = options.initial_c_factor.value_or(Matrix2d::Identity());
  start_std.d = options.initial_d.value_or(0.1 * Matrix2d::Identity());
  Eigen::VectorXd theta0 = start_std.pack();
  if (!std::isfinite(standardized_score(problem, theta0))) {
    // A carried-over scale start can be invalid; revert to the fixed one.
    start_std.c_factor = Matrix2d::Identity();
    start_std.d = 0.1 * Matrix2d::Identity();
    theta0 = start_std.pack();
  }

  fit.optim = minimize([&](const Eigen::VectorXd& theta) { return standardized_score(problem, theta); },
                       theta0, options.optimizer);

  auto to_model = [&](const Eigen::VectorXd& theta) {
    BivariateEmosParams s = BivariateEmosParams::unpack(theta, m);
    BivariateEmosParams out;
    to_model_location(s.a, s.b, problem.scaling, out.a, out.b);
    out.c_factor = s.c_factor;
    out.d = s.d;
    return out;
  };

  const BivariateEmosParams initial = to_model(theta0);
  fit.params = to_model(fit.optim.x_min);
  fit.initial_score = mean_log_score(initial, training, groups);
  fit.score = mean_log_score(fit.params, training, groups);
  if (!(fit.score <= fit.initial_score)) {
    // Only reachable through rounding in the change of predictors.
    fit.params = initial;
    fit.score = fit.initial_score;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Univariate EMOS

namespace {

double coordinate_variance(const ForecastCase& c, int row) {
  const Eigen::Index m = c.members.cols();
  if (m < 2) return 0.0;
  const Eigen::RowVectorXd v = c.members.row(row);
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(m - 1);
}

struct UnivariateCase {
  Eigen::VectorXd z;  // standardized group sums of the variable
  double spread2;
  double obs;
};

struct UnivariateProblem {
  std::vector<UnivariateCase> cases;
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  LawKind kind;
  bool nonnegative;
};

double univariate_case_crps(LawKind kind, double location, double variance, double y) {
  if (!(variance > 0.0) || !std::isfinite(variance) || !std::isfinite(location)) return kInf;
  const double sd = std::sqrt(variance);
  return kind == LawKind::Normal ? crps_normal(location, sd, y) : crps_truncnormal(location, sd, y);
}

// theta = [intercept', coeff' (m, or their square roots), sqrt var_c, sqrt var_d]
double univariate_objective(const UnivariateProblem& p, const Eigen::VectorXd& theta) {
  const Eigen::Index m = p.center.size();
  Eigen::VectorXd coeffs = theta.segment(1, m);
  if (p.nonnegative) coeffs = coeffs.cwiseAbs2();
  const double var_c = theta(m + 1) * theta(m + 1);
  const double var_d = theta(m + 2) * theta(m + 2);
  double total = 0.0;
  for (const auto& uc : p.cases) {
    const double v = univariate_case_crps(p.kind, theta(0) + coeffs.dot(uc.z),
                                          var_c + var_d * uc.spread2, uc.obs);
    if (!std::isfinite(v)) return kInf;
    total += v;
  }
  return total / static_cast<double>(p.cases.size());
}

}  // namespace

UnivariateLaw univariate_law(const UnivariateEmosParams& params, const ForecastCase& c,
                             Variable variable, const GroupSpec& groups) {
  const int row = static_cast<int>(variable);
  const Eigen::VectorXd sums = group_sums(c, groups).row(row).transpose();
  if (sums.size() != params.member_coeffs.size()) {
    throw std::invalid_argument("univariate_law: coefficient count does not match group spec");
  }
  const double location = params.intercept + params.member_coeffs.dot(sums);
  const double variance = params.var_c + params.var_d * coordinate_variance(c, row);
  if (!(variance > 0.0)) throw std::domain_error("univariate_law: non-positive predictive variance");
  return variable == Variable::Wind ? UnivariateLaw::zero_truncated(location, std::sqrt(variance))
                                    : UnivariateLaw::normal(location, std::sqrt(variance));
}

double mean_crps(const UnivariateEmosParams& params, std::span<const ForecastCase> training,
                 Variable variable, const GroupSpec& groups) {
  require_observations(training);
  const int row = static_cast<int>(variable);
  const LawKind kind = variable == Variable::Wind ? LawKind::ZeroTruncatedNormal : LawKind::Normal;
  double total = 0.0;
  for (const auto& c : training) {
    const Eigen::VectorXd sums = group_sums(c, groups).row(row).transpose();
    const double v = univariate_case_crps(kind, params.intercept + params.member_coeffs.dot(sums),
                                          params.var_c + params.var_d * coordinate_variance(c, row),
                                          (*c.observation)(row));
    if (!std::isfinite(v)) return kInf;
    total += v;
  }
  return total / static_cast<double>(training.size());
}

UnivariateFit fit_univariate(std::span<const ForecastCase> training, Variable variable,
                             const GroupSpec& groups, const UnivariateFitOptions& options) {
  require_observations(training);
  const int m = groups.groups();
  require_size(training, UnivariateEmosParams::free_parameter_count(m));
  const int row = static_cast<int>(variable);
  const auto n = static_cast<Eigen::Index>(training.size());

  UnivariateProblem p;
  p.kind = variable == Variable::Wind ? LawKind::ZeroTruncatedNormal : LawKind::Normal;
  p.nonnegative = options.nonnegative_coeffs;
  Eigen::MatrixXd raw(n, m);
  Eigen::VectorXd obs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    raw.row(i) = group_sums(training[i], groups).row(row);
    obs(i) = (*training[i].observation)(row);
  }
  p.center = raw.colwise().mean().transpose();
  p.scale = ((raw.rowwise() - p.center.transpose()).colwise().squaredNorm() / static_cast<double>(n))
                .cwiseSqrt()
                .transpose();
  for (Eigen::Index k = 0; k < m; ++k) {
    if (!(p.scale(k) > 1e-12 * (1.0 + std::abs(p.center(k))))) p.scale(k) = 1.0;
  }
  p.cases.reserve(training.size());
  double mean_spread2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd z =
        (raw.row(i).transpose() - p.center).cwiseQuotient(p.scale);
    const double s2 = coordinate_variance(training[i], row);
    mean_spread2 += s2;
    p.cases.push_back({z, s2, obs(i)});
  }
  mean_spread2 /= static_cast<double>(n);

  // Start: OLS location, residual variance split between var_c and var_d.
  Eigen::MatrixXd design(n, m + 1);
  design.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) design.row(i).tail(m) = p.cases[i].z.transpose();
  Eigen::VectorXd beta(m + 1);
  if (const auto ols = least_squares(design, obs)) {
    beta = *ols;
  } else {
    double ens_mean = 0.0;
    for (const auto& c : training) ens_mean += c.members.row(row).mean();
    ens_mean /= static_cast<double>(n);
    const double weight = 1.0 / groups.members();
    beta(0) = obs.mean() - ens_mean + weight * p.center.sum();
    beta.tail(m) = weight * p.scale;
  }
  const double resid_var = std::max((obs - design * beta).squaredNorm() / static_cast<double>(n), 1e-6);

  Eigen::VectorXd theta0(m + 3);
  theta0(0) = beta(0);
  if (p.nonnegative) {
    theta0.segment(1, m) = beta.tail(m).cwiseMax(1e-4).cwiseSqrt();
  } else {
    theta0.segment(1, m) = beta.tail(m);
  }
  theta0(m + 1) = std::sqrt(resid_var / 2.0);
  theta0(m + 2) = mean_spread2 > 0.0 ? std::sqrt(resid_var / 2.0 / mean_spread2) : 0.1;

  UnivariateFit fit;
  fit.optim = minimize([&](const Eigen::VectorXd& theta) { return univariate_objective(p, theta); },
                       theta0, options.optimizer);

  auto to_model = [&](const Eigen::VectorXd& theta) {
    UnivariateEmosParams out;
    Eigen::VectorXd coeffs = theta.segment(1, m);
    if (p.nonnegative) coeffs = coeffs.cwiseAbs2();
    out.member_coeffs = coeffs.cwiseQuotient(p.scale);
    out.intercept = theta(0) - out.member_coeffs.dot(p.center);
    out.var_c = theta(m + 1) * theta(m + 1);
    out.var_d = theta(m + 2) * theta(m + 2);
    return out;
  };
  const UnivariateEmosParams initial = to_model(theta0);
  fit.params = to_model(fit.optim.x_min);
  fit.initial_score = mean_crps(initial, training, variable, groups);
  fit.score = mean_crps(fit.params, training, variable, groups);
  if (!(fit.score <= fit.initial_score)) {
    fit.params = initial;
    fit.score = fit.initial_score;
  }
  return fit;
}

}  // namespace bivemos

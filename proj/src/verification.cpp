#include "bivemos/verification.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "bivemos/optimizer.hpp"
#include "bivemos/seed.hpp"

namespace bivemos {

double energy_score_mc(const Eigen::Matrix2Xd& sample, const Eigen::Vector2d& obs,
                       EsPairing pairing) {
  const Eigen::Index n = sample.cols();
  if (n < 2) throw std::invalid_argument("energy_score_mc: at least two sample points required");
  const double to_obs = (sample.colwise() - obs).colwise().norm().mean();
  double spread = 0.0;
  if (pairing == EsPairing::Consecutive) {
    spread = (sample.rightCols(n - 1) - sample.leftCols(n - 1)).colwise().norm().sum() /
             (2.0 * static_cast<double>(n - 1));
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      spread += (sample.colwise() - sample.col(j)).colwise().norm().sum();
    }
    spread /= 2.0 * static_cast<double>(n) * static_cast<double>(n);
  }
  return to_obs - spread;
}

double energy_score_ensemble(const Eigen::Matrix2Xd& members, const Eigen::Vector2d& obs) {
  const Eigen::Index m = members.cols();
  if (m < 1) throw std::invalid_argument("energy_score_ensemble: empty ensemble");
  const double to_obs = (members.colwise() - obs).colwise().norm().mean();
  double spread = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    spread += (members.colwise() - members.col(j)).colwise().norm().sum();
  }
  return to_obs - spread / (2.0 * static_cast<double>(m) * static_cast<double>(m));
}

int multivariate_rank(const Eigen::Matrix2Xd& ensemble, const Eigen::Vector2d& obs,
                      std::uint64_t seed) {
  const Eigen::Index m = ensemble.cols();
  Eigen::Matrix2Xd pool(2, m + 1);
  pool.col(0) = obs;
  pool.rightCols(m) = ensemble;

  // Pre-rank: number of pooled vectors <= u in both coordinates (self included).
  std::vector<int> pre(static_cast<std::size_t>(m + 1), 0);
  for (Eigen::Index u = 0; u <= m; ++u) {
    int count = 0;
    for (Eigen::Index v = 0; v <= m; ++v) {
      if (pool(0, v) <= pool(0, u) && pool(1, v) <= pool(1, u)) ++count;
    }
    pre[u] = count;
  }
  int below = 0;
  int ties = 0;
  for (const int p : pre) {
    if (p < pre[0]) ++below;
    if (p == pre[0]) ++ties;
  }
  if (ties == 1) return below + 1;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(1, ties);
  return below + pick(rng);
}

void RankHistogram::add(int rank) {
  if (rank < 1 || rank > bins()) throw std::out_of_range("RankHistogram::add: rank out of range");
  ++counts_[static_cast<std::size_t>(rank - 1)];
}

long RankHistogram::total() const {
  long t = 0;
  for (const long c : counts_) t += c;
  return t;
}

std::vector<double> RankHistogram::relative_freqs() const {
  const double t = static_cast<double>(total());
  std::vector<double> out(counts_.size(), 0.0);
  if (t > 0) {
    std::transform(counts_.begin(), counts_.end(), out.begin(),
                   [t](long c) { return static_cast<double>(c) / t; });
  }
  return out;
}

double reliability_index(const RankHistogram& hist) {
  if (hist.total() <= 0) throw std::invalid_argument("reliability_index: empty histogram");
  const double uniform = 1.0 / hist.bins();
  double delta = 0.0;
  for (const double rho : hist.relative_freqs()) delta += std::abs(rho - uniform);
  return delta;
}

RankHistogram rank_histogram_for_law(std::span<const LawSampler> samplers,
                                     std::span<const Eigen::Vector2d> observations,
                                     int samples_per_case, std::uint64_t seed) {
  if (samplers.size() != observations.size()) {
    throw std::invalid_argument("rank_histogram_for_law: sampler / observation count mismatch");
  }
  if (samples_per_case < 1) throw std::invalid_argument("rank_histogram_for_law: samples_per_case < 1");
  RankHistogram hist(samples_per_case + 1);
  for (std::size_t i = 0; i < samplers.size(); ++i) {
    const std::uint64_t case_seed = derive_seed(seed, i);
    const Eigen::Matrix2Xd draws = samplers[i](samples_per_case, derive_seed(case_seed, 0));
    hist.add(multivariate_rank(draws, observations[i], derive_seed(case_seed, 1)));
  }
  return hist;
}

double determinant_sharpness(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() < 1) {
    throw std::invalid_argument("determinant_sharpness: square matrix required");
  }
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  const double det = std::max(0.0, sym.determinant());
  return std::pow(det, 1.0 / (2.0 * static_cast<double>(cov.rows())));
}

Eigen::Matrix2d sample_covariance(const Eigen::Matrix2Xd& points) {
  const Eigen::Index n = points.cols();
  if (n < 2) throw std::invalid_argument("sample_covariance: at least two points required");
  const Eigen::Matrix2Xd centered = points.colwise() - points.rowwise().mean();
  return centered * centered.transpose() / static_cast<double>(n - 1);
}

namespace {

double median_objective(const Eigen::Matrix2Xd& points, const Eigen::Vector2d& alpha) {
  return (points.colwise() - alpha).colwise().norm().sum();
}

double coordinate_median(Eigen::VectorXd v) {
  const auto n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v(n / 2) : 0.5 * (v(n / 2 - 1) + v(n / 2));
}

}  // namespace

SpatialMedian spatial_median(const Eigen::Matrix2Xd& points) {
  const Eigen::Index n = points.cols();
  if (n < 1) throw std::invalid_argument("spatial_median: no points");

  SpatialMedian out;
  const Eigen::Vector2d centroid = points.rowwise().mean();
  const Eigen::Matrix2Xd centered = points.colwise() - centroid;
  const Eigen::Matrix2d scatter = centered * centered.transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(scatter);
  const double spread = std::sqrt(std::max(0.0, eig.eigenvalues()(1)));
  if (spread == 0.0) {
    out.point = points.col(0);
    out.unique = true;
    return out;
  }
  out.unique = eig.eigenvalues()(0) > 1e-14 * eig.eigenvalues()(1);

  Eigen::Vector2d y(coordinate_median(points.row(0).transpose()),
                    coordinate_median(points.row(1).transpose()));
  const double coincide_tol = 1e-12 * spread;
  const double step_tol = 1e-11 * (spread + y.norm());
  constexpr int kMaxIterations = 5000;

  bool settled = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    out.iterations = it + 1;
    Eigen::Vector2d weighted = Eigen::Vector2d::Zero();
    Eigen::Vector2d pull = Eigen::Vector2d::Zero();
    double weight_sum = 0.0;
    int coincident = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector2d diff = points.col(i) - y;
      const double dist = diff.norm();
      if (dist <= coincide_tol) {
        ++coincident;
        continue;
      }
      weighted += points.col(i) / dist;
      pull += diff / dist;
      weight_sum += 1.0 / dist;
    }
    if (weight_sum == 0.0) {
      settled = true;
      break;
    }
    const Eigen::Vector2d t = weighted / weight_sum;
    Eigen::Vector2d next = t;
    if (coincident > 0) {
      // Vardi-Zhang: the data point is optimal when the pull of the rest does
      // not exceed its multiplicity.
      const double r = pull.norm();
      const double share = r > 0.0 ? std::min(1.0, coincident / r) : 1.0;
      next = (1.0 - share) * t + share * y;
    }
    const double step = (next - y).norm();
    y = next;
    if (step <= step_tol) {
      settled = true;
      break;
    }
  }

  if (!settled) {
    OptimizerConfig cfg;
    cfg.simplex_init_step = 1e-3;
    cfg.x_tol = 1e-12 * (1.0 + spread);
    cfg.f_tol = 1e-13 * median_objective(points, y);
    cfg.max_evals = 4000;
    const auto polished = nelder_mead(
        [&](const Eigen::VectorXd& a) { return median_objective(points, Eigen::Vector2d(a)); },
        Eigen::VectorXd(y), cfg);
    if (polished.f_min < median_objective(points, y)) y = polished.x_min;
  }
  out.point = y;
  return out;
}

std::optional<double> correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(x.size());
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), n);
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::VectorXd xc = xv.array() - xv.mean();
  const Eigen::VectorXd yc = yv.array() - yv.mean();
  const double sxx = xc.squaredNorm();
  const double syy = yc.squaredNorm();
  const double scale_x = xv.cwiseAbs().maxCoeff();
  const double scale_y = yv.cwiseAbs().maxCoeff();
  // Variance at rounding level of the data counts as zero.
  if (sxx <= 1e-24 * n * (1.0 + scale_x * scale_x) || syy <= 1e-24 * n * (1.0 + scale_y * scale_y)) {
    return std::nullopt;
  }
  return xc.dot(yc) / std::sqrt(sxx * syy);
}

ScoreReport point_forecast_report(std::span<const ScoredCase> cases, int rank_bins,
                                  RankHistogram* histogram) {
  if (cases.empty()) throw std::invalid_argument("point_forecast_report: no cases");
  ScoreReport r;
  r.cases = static_cast<long>(cases.size());
  RankHistogram hist(rank_bins);
  const auto n = cases.size();
  std::vector<double> med_w(n), med_t(n), mean_w(n), mean_t(n);
  std::vector<double> med_ew(n), med_et(n), mean_ew(n), mean_et(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = cases[i];
    r.mean_es += c.es;
    r.mean_ds += c.ds;
    r.ee_median += (c.median - c.obs).norm();
    r.ee_mean += (c.mean - c.obs).norm();
    hist.add(c.rank);
    med_w[i] = c.median(0);
    med_t[i] = c.median(1);
    mean_w[i] = c.mean(0);
    mean_t[i] = c.mean(1);
    med_ew[i] = c.median(0) - c.obs(0);
    med_et[i] = c.median(1) - c.obs(1);
    mean_ew[i] = c.mean(0) - c.obs(0);
    mean_et[i] = c.mean(1) - c.obs(1);
  }
  const double dn = static_cast<double>(n);
  r.mean_es /= dn;
  r.mean_ds /= dn;
  r.ee_median /= dn;
  r.ee_mean /= dn;
  r.delta = reliability_index(hist);
  r.rho_median = correlation(med_w, med_t);
  r.rho_mean = correlation(mean_w, mean_t);
  r.rho_err_median = correlation(med_ew, med_et);
  r.rho_err_mean = correlation(mean_ew, mean_et);
  if (histogram) *histogram = std::move(hist);
  return r;
}

}  // namespace bivemos

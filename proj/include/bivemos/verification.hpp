// Multivariate verification: energy score, multivariate rank histograms and
// the reliability index, determinant sharpness, spatial median and the
// point-forecast summary.

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace bivemos {

enum class EsPairing {
  Consecutive,  ///< second term over (j, j+1) pairs, as in the MC estimator
  AllPairs,     ///< all n^2 pairs; lower variance, O(n^2)
};

/// Monte Carlo energy score of a sample (columns) at obs.  Throws for n < 2.
/// Individual evaluations can be slightly negative; they are not clamped.
double energy_score_mc(const Eigen::Matrix2Xd& sample, const Eigen::Vector2d& obs,
                       EsPairing pairing = EsPairing::Consecutive);

/// Energy score of the empirical law of an ensemble.  Throws for M < 1.
double energy_score_ensemble(const Eigen::Matrix2Xd& members, const Eigen::Vector2d& obs);

/// Rank of obs in {1, ..., M + 1} under the componentwise pre-rank ordering.
/// Pre-rank ties are broken uniformly at random using `seed`.
int multivariate_rank(const Eigen::Matrix2Xd& ensemble, const Eigen::Vector2d& obs,
                      std::uint64_t seed);

class RankHistogram {
 public:
  explicit RankHistogram(int bins = 0) : counts_(static_cast<std::size_t>(bins), 0) {}

  /// rank in {1, ..., bins}
  void add(int rank);
  int bins() const { return static_cast<int>(counts_.size()); }
  long total() const;
  const std::vector<long>& counts() const { return counts_; }
  std::vector<double> relative_freqs() const;

 private:
  std::vector<long> counts_;
};

/// Sum over bins of |rho_r - 1/(M+1)|; lies in [0, 2].  Throws when empty.
double reliability_index(const RankHistogram& hist);

/// Draws n points (columns) from a case's predictive law.
using LawSampler = std::function<Eigen::Matrix2Xd(Eigen::Index n, std::uint64_t seed)>;

/// Per case: samples_per_case draws from samplers[i], then the rank of
/// observations[i] among them.  Case i uses seeds derived from (seed, i).
RankHistogram rank_histogram_for_law(std::span<const LawSampler> samplers,
                                     std::span<const Eigen::Vector2d> observations,
                                     int samples_per_case = 100, std::uint64_t seed = 0);

/// (det cov)^(1/(2d)).  The matrix is symmetrized; a negative determinant
/// from rounding is clamped to 0.
double determinant_sharpness(const Eigen::MatrixXd& cov);

/// Unbiased sample covariance of the columns.
Eigen::Matrix2d sample_covariance(const Eigen::Matrix2Xd& points);

struct SpatialMedian {
  Eigen::Vector2d point;
  /// false when all points lie on one line (the minimizer may not be unique)
  bool unique = true;
  int iterations = 0;
};

/// Minimizer of sum_i |alpha - x_i| (Weiszfeld iteration with the
/// Vardi-Zhang correction at data points, simplex polish if it stalls).
SpatialMedian spatial_median(const Eigen::Matrix2Xd& points);

/// Everything the report needs about one verified case.
struct ScoredCase {
  double es = 0.0;
  int rank = 1;
  double ds = 0.0;
  Eigen::Vector2d median;
  Eigen::Vector2d mean;
  Eigen::Vector2d obs;
};

struct ScoreReport {
  double mean_es = 0.0;
  double delta = 0.0;
  double mean_ds = 0.0;
  double ee_median = 0.0;
  double ee_mean = 0.0;
  std::optional<double> rho_median, rho_mean;
  std::optional<double> rho_err_median, rho_err_mean;
  long cases = 0;
};

/// Pearson correlation; nullopt when either input has zero variance.
std::optional<double> correlation(std::span<const double> x, std::span<const double> y);

/// Aggregates scored cases; ranks are binned into rank_bins = M + 1 bins.
ScoreReport point_forecast_report(std::span<const ScoredCase> cases, int rank_bins,
                                  RankHistogram* histogram = nullptr);

}  // namespace bivemos

// Rolling-window calibration, verification of all methods on identical
// cases, report writers and model persistence.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bivemos/copula.hpp"
#include "bivemos/dataset.hpp"
#include "bivemos/emos.hpp"
#include "bivemos/verification.hpp"

namespace bivemos {

enum class Method { BivariateEmos, IndependentEmos, Copula, Raw };

Method parse_method(std::string_view name);
std::string method_name(Method m);
/// Row label in the score table ("EMOS", "Indep. EMOS", "Copula", "Raw ensemble").
std::string method_label(Method m);
std::vector<Method> parse_method_list(std::string_view comma_list);

struct IndependentEmosModel {
  UnivariateEmosParams wind;
  UnivariateEmosParams temp;
};

struct CopulaEmosModel {
  IndependentEmosModel margins;
  CopulaModel copula;
};

using FittedModel = std::variant<std::monostate, BivariateEmosParams, IndependentEmosModel, CopulaEmosModel>;

struct DayModel {
  Date date{};
  FittedModel model;
  int training_cases = 0;
  bool converged = true;
  double training_score = 0.0;
};

struct TimingRecord {
  Date date{};
  std::string method;
  double seconds = 0.0;
};

enum class CopulaHistoryFit {
  Rolling,  ///< margins refitted on rolling windows over the history period
  Pooled,   ///< one margin fit on the whole history period
};

struct CalibrationConfig {
  OptimizerConfig optimizer{};
  /// Start C and D from the previous day's estimates instead of the fixed
  /// values; forces serial execution.
  bool warm_start_previous = false;
  bool nonnegative_univariate = false;
  CopulaHistoryFit copula_history = CopulaHistoryFit::Rolling;
  bool parallel = true;
};

struct CalibrationResult {
  Method method = Method::Raw;
  GroupSpec groups;
  int training_length_days = 40;
  std::vector<DayModel> models;
  std::vector<TimingRecord> timings;
  std::vector<std::string> diagnostics;

  const DayModel* model_for(Date d) const;
};

/// Copula correlation from a separate history dataset (same group layout).
CopulaModel fit_copula_correlation(const Dataset& history, int training_days, const CalibrationConfig& cfg);

/// Fits `method` for each verification date of the plan on the preceding
/// window, pooling all stations.  Dates whose window is too small are
/// skipped with a diagnostic.  The copula method requires `history`
/// (ConfigError otherwise).
CalibrationResult rolling_calibrate(const Dataset& data, const WindowPlan& plan, Method method,
                                    const CalibrationConfig& cfg, const Dataset* history = nullptr);

struct VerificationConfig {
  int es_samples = 10000;
  int rank_samples = 100;
  std::uint64_t seed = 20240101;
  EsPairing pairing = EsPairing::Consecutive;
  bool parallel = true;
};

/// Observed cases on the plan's verification dates that every method scores.
std::vector<ForecastCase> verification_cases(const Dataset& data, const WindowPlan& plan);

/// Scores one case under a fitted model.  `case_seed` fixes all sampling.
ScoredCase score_case(const FittedModel& model, const ForecastCase& c, const GroupSpec& groups,
                      const VerificationConfig& cfg, std::uint64_t case_seed);

struct VerifiedCase {
  Date date{};
  std::string station;
  ScoredCase scores;
};

/// Scores every case that has a model for its date; case seeds depend only
/// on (cfg.seed, date, station) so methods are compared on common draws.
std::vector<VerifiedCase> verify_calibration(std::span<const ForecastCase> cases,
                                             const CalibrationResult& calibration,
                                             const VerificationConfig& cfg);

struct TimingSummary {
  double median = 0.0;
  double mean = 0.0;
  double std_dev = 0.0;
  int days = 0;
};

TimingSummary summarize_timings(std::span<const TimingRecord> timings);

struct MethodOutcome {
  Method method = Method::Raw;
  std::string label;
  ScoreReport report;
  RankHistogram histogram;
  TimingSummary timing;
  std::vector<VerifiedCase> cases;
  CalibrationResult calibration;
};

struct ExperimentConfig {
  CalibrationConfig calibration{};
  VerificationConfig verification{};
};

struct ExperimentResult {
  std::vector<MethodOutcome> outcomes;
};

/// Calibrates and verifies each method on the same cases and seeds.
ExperimentResult run_experiment(const Dataset& data, const WindowPlan& plan, std::span<const Method> methods,
                                const ExperimentConfig& cfg, const Dataset* history = nullptr);

MethodOutcome summarize_outcome(Method method, std::vector<VerifiedCase> cases, int rank_bins,
                                CalibrationResult calibration);

/// Tab-separated score table, one row per method.
void write_score_table(std::ostream& out, std::span<const MethodOutcome> outcomes);
/// Long-format rank histogram counts: method, rank, count.
void write_rank_histograms(std::ostream& out, std::span<const MethodOutcome> outcomes);

/// Median / mean / std. dev. rows, one column per labelled timing series.
struct TimingColumn {
  std::string label;
  TimingSummary summary;
};
void write_timing_table(std::ostream& out, std::span<const TimingColumn> columns);

/// JSON persistence of a calibration run.
std::string calibration_to_json(const CalibrationResult& calibration);
CalibrationResult calibration_from_json(const std::string& text);
void save_calibration(const std::string& path, const CalibrationResult& calibration);
CalibrationResult load_calibration(const std::string& path);

/// Runs fn(i) for i in [0, n), on worker threads when parallel is set.
void parallel_for(std::size_t n, bool parallel, const std::function<void(std::size_t)>& fn);

}  // namespace bivemos

// Synthetic ensemble/observation generator.
//
// Each (day, station) gets a latent weather state lambda = climatology +
// station offset + seasonal temperature cycle + AR(1) anomaly.  Members are
// drawn from N2^0(lambda + group bias, dispersion^2 * Sigma_spread).  The
// observation is drawn either
//   - "emos":         from the bivariate EMOS law of known parameters given
//                     the members (the model is then exactly true), or
//   - "exchangeable": from N2^0(lambda, Sigma_spread), i.e. from the same law
//                     as the members when dispersion = 1.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bivemos/dataset.hpp"

namespace bivemos {

enum class TruthMode { Emos, Exchangeable };

struct SyntheticSpec {
  int stations = 10;
  int days = 100;
  std::string start_date = "2012-04-01";
  std::string groups = "1,10";
  double missing_day_rate = 0.0;
  double missing_obs_rate = 0.0;

  // Climatology of the latent state.
  double wind_mean = 6.0;
  double wind_sd = 2.0;
  double temp_mean = 283.0;
  double temp_sd = 4.0;
  double climate_corr = 0.1;
  double seasonal_amplitude = 8.0;
  double station_wind_sd = 1.0;
  double station_temp_sd = 2.0;
  double persistence = 0.6;

  // Ensemble scatter around the latent state.
  double dispersion = 1.0;
  double spread_wind_sd = 1.5;
  double spread_temp_sd = 2.0;
  double spread_corr = 0.3;
  /// One (wind, temp) bias per group; empty means no bias.
  std::vector<Vector2d> group_bias;

  TruthMode truth = TruthMode::Emos;
  /// Generating EMOS parameters; b empty means I / M for every group.
  BivariateEmosParams truth_params = default_truth();

  static BivariateEmosParams default_truth();
  GroupSpec group_spec() const { return GroupSpec::parse(groups); }
  /// Fills b with I / M when it is empty; throws ConfigError on mismatch.
  BivariateEmosParams resolved_truth() const;
  /// Throws ConfigError on an invalid spec.
  void validate() const;
};

/// Reads a generator spec from JSON; absent keys keep their defaults.
SyntheticSpec parse_synthetic_spec(const std::string& json_text);
SyntheticSpec load_synthetic_spec(const std::string& path);
std::string synthetic_spec_to_json(const SyntheticSpec& spec);

Dataset synthesize_dataset(const SyntheticSpec& spec, std::uint64_t seed);

/// Named layouts used by tests and documentation: "aladin" (10 stations,
/// groups 1,10) and "uwme" (90 stations, 8 distinguishable members).
SyntheticSpec preset_spec(const std::string& name);

}  // namespace bivemos

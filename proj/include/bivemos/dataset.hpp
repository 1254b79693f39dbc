// Forecast/observation datasets, the CSV exchange format and rolling
// training windows.
//
// CSV layout (header required, dates ISO-8601, wind m/s, temperature K):
//
//   date,station,obs_wind,obs_temp,m1_wind,m1_temp,...,mM_wind,mM_temp
//
// Empty observation fields mark a case without a verifying observation: it
// can be forecast but is excluded from training and scoring.

#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bivemos/emos.hpp"

namespace bivemos {

/// Invalid user-facing configuration (CLI arguments, missing inputs).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-level ingestion failure (missing columns, empty file, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Date parse_date(std::string_view text);
std::string format_date(Date d);

struct DatasetMetadata {
  std::string wind = "wind speed (m/s)";
  std::string temp = "temperature (K)";
  std::string source;
};

/// Cases sorted by (date, station); one GroupSpec for all of them.
struct Dataset {
  std::vector<ForecastCase> cases;
  GroupSpec groups;
  DatasetMetadata metadata;

  /// Distinct dates, ascending.
  std::vector<Date> dates() const;
  /// Dates with at least one observed case, ascending.
  std::vector<Date> available_dates() const;
  std::vector<ForecastCase> cases_on(Date d) const;
};

struct LoadResult {
  Dataset data;
  /// Line-numbered reasons for rows that were rejected.
  std::vector<std::string> rejected;
};

/// Parses the CSV format.  Rows violating case invariants are rejected with
/// a diagnostic; structural problems throw DataError.
LoadResult read_dataset(std::istream& in, const GroupSpec& groups, std::string source = "<stream>");
LoadResult load_dataset(const std::string& path, const GroupSpec& groups);

void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::string& path, const Dataset& data);

/// Sorts cases and rejects duplicate (date, station) pairs.
void normalize(Dataset& data);

struct WindowPlan {
  int training_length_days = 40;
  std::vector<Date> verification_dates;
};

/// Every available date preceded by at least `training_days` available dates
/// (optionally restricted to [first, last]).  Training windows count
/// available days, so dates without data are skipped.
WindowPlan make_window_plan(const Dataset& data, int training_days,
                            std::optional<Date> first = std::nullopt,
                            std::optional<Date> last = std::nullopt);

/// Observed cases of the `training_days` most recent available dates strictly
/// before `date`, pooled over all stations.
std::vector<ForecastCase> training_window(const Dataset& data, Date date, int training_days);

}  // namespace bivemos

#include "bivemos/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace bivemos {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

bool case_less(const ForecastCase& a, const ForecastCase& b) {
  return a.date != b.date ? a.date < b.date : a.station < b.station;
}

}  // namespace

Date parse_date(std::string_view text) {
  text = trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  auto field = [&](std::string_view s, auto& out) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
  };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !field(text.substr(0, 4), y) ||
      !field(text.substr(5, 2), m) || !field(text.substr(8, 2), d)) {
    throw std::invalid_argument("malformed date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw std::invalid_argument("invalid calendar date '" + std::string(text) + "'");
  return std::chrono::sys_days{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<Date> Dataset::dates() const {
  std::vector<Date> out;
  for (const auto& c : cases) {
    if (out.empty() || out.back() != c.date) out.push_back(c.date);
  }
  return out;
}

std::vector<Date> Dataset::available_dates() const {
  std::vector<Date> out;
  for (const auto& c : cases) {
    if (c.observation && (out.empty() || out.back() != c.date)) out.push_back(c.date);
  }
  return out;
}

std::vector<ForecastCase> Dataset::cases_on(Date d) const {
  const auto lo = std::lower_bound(cases.begin(), cases.end(), d,
                                   [](const ForecastCase& c, Date v) { return c.date < v; });
  std::vector<ForecastCase> out;
  for (auto it = lo; it != cases.end() && it->date == d; ++it) out.push_back(*it);
  return out;
}

void normalize(Dataset& data) {
  std::stable_sort(data.cases.begin(), data.cases.end(), case_less);
  for (std::size_t i = 1; i < data.cases.size(); ++i) {
    if (data.cases[i].date == data.cases[i - 1].date && data.cases[i].station == data.cases[i - 1].station) {
      throw DataError("duplicate case " + format_date(data.cases[i].date) + " / " + data.cases[i].station);
    }
  }
}

LoadResult read_dataset(std::istream& in, const GroupSpec& groups, std::string source) {
  LoadResult result;
  result.data.groups = groups;
  result.data.metadata.source = source;

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw DataError(source + ": empty file");
  const auto header = split(trim(line), ',');
  const char* required[] = {"date", "station", "obs_wind", "obs_temp"};
  for (std::size_t i = 0; i < 4; ++i) {
    if (header.size() <= i || trim(header[i]) != required[i]) {
      throw DataError(source + ": missing required column '" + required[i] + "' at position " +
                      std::to_string(i + 1));
    }
  }
  if ((header.size() - 4) % 2 != 0 || header.size() < 6) {
    throw DataError(source + ": member columns must come in (wind, temp) pairs");
  }
  const int members = static_cast<int>((header.size() - 4) / 2);
  for (int j = 0; j < members; ++j) {
    const std::string prefix = "m" + std::to_string(j + 1);
    if (trim(header[4 + 2 * j]) != prefix + "_wind" || trim(header[5 + 2 * j]) != prefix + "_temp") {
      throw DataError(source + ": expected columns " + prefix + "_wind," + prefix + "_temp");
    }
  }
  if (members != groups.members()) {
    throw DataError(source + ": file has " + std::to_string(members) + " members, group spec '" +
                    groups.to_string() + "' expects " + std::to_string(groups.members()));
  }

  std::set<std::pair<Date, std::string>> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != header.size()) {
      throw DataError(where + "inconsistent member count (" + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()) + ")");
    }
    ForecastCase c;
    try {
      c.date = parse_date(fields[0]);
    } catch (const std::invalid_argument& e) {
      result.rejected.push_back(where + e.what());
      continue;
    }
    c.station = std::string(trim(fields[1]));
    if (c.station.empty()) {
      result.rejected.push_back(where + "empty station identifier");
      continue;
    }
    const auto ow = parse_number(fields[2]);
    const auto ot = parse_number(fields[3]);
    const bool ow_blank = trim(fields[2]).empty();
    const bool ot_blank = trim(fields[3]).empty();
    if (ow_blank && ot_blank) {
      c.observation.reset();
    } else if (!ow || !ot) {
      result.rejected.push_back(where + "observation must be two numbers or two empty fields");
      continue;
    } else if (*ow < 0.0) {
      result.rejected.push_back(where + "negative observed wind speed " + format_number(*ow));
      continue;
    } else {
      c.observation = Vector2d(*ow, *ot);
    }
    c.members.resize(2, members);
    std::string problem;
    for (int j = 0; j < members && problem.empty(); ++j) {
      const auto w = parse_number(fields[4 + 2 * j]);
      const auto t = parse_number(fields[5 + 2 * j]);
      if (!w || !t) {
        problem = "member " + std::to_string(j + 1) + " is not numeric";
      } else if (*w < 0.0) {
        problem = "member " + std::to_string(j + 1) + " has negative wind speed " + format_number(*w);
      } else {
        c.members.col(j) = Vector2d(*w, *t);
      }
    }
    if (!problem.empty()) {
      result.rejected.push_back(where + problem);
      continue;
    }
    if (!seen.emplace(c.date, c.station).second) {
      result.rejected.push_back(where + "duplicate (date, station) " + format_date(c.date) + " / " + c.station);
      continue;
    }
    result.data.cases.push_back(std::move(c));
  }
  if (result.data.cases.empty()) throw DataError(source + ": no valid data rows");
  normalize(result.data);
  return result;
}

LoadResult load_dataset(const std::string& path, const GroupSpec& groups) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_dataset(in, groups, path);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  const int members = data.groups.members();
  out << "date,station,obs_wind,obs_temp";
  for (int j = 1; j <= members; ++j) out << ",m" << j << "_wind,m" << j << "_temp";
  out << '\n';
  for (const auto& c : data.cases) {
    out << format_date(c.date) << ',' << c.station << ',';
    if (c.observation) {
      out << format_number((*c.observation)(0)) << ',' << format_number((*c.observation)(1));
    } else {
      out << ',';
    }
    for (Eigen::Index j = 0; j < c.members.cols(); ++j) {
      out << ',' << format_number(c.members(0, j)) << ',' << format_number(c.members(1, j));
    }
    out << '\n';
  }
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_dataset(out, data);
}

WindowPlan make_window_plan(const Dataset& data, int training_days, std::optional<Date> first,
                            std::optional<Date> last) {
  if (training_days < 1) throw ConfigError("training length must be at least one day");
  WindowPlan plan;
  plan.training_length_days = training_days;
  const auto available = data.available_dates();
  for (std::size_t i = static_cast<std::size_t>(training_days); i < available.size(); ++i) {
    if (first && available[i] < *first) continue;
    if (last && available[i] > *last) continue;
    plan.verification_dates.push_back(available[i]);
  }
  return plan;
}

std::vector<ForecastCase> training_window(const Dataset& data, Date date, int training_days) {
  const auto available = data.available_dates();
  const auto upper = std::lower_bound(available.begin(), available.end(), date);
  const auto count = std::min<std::ptrdiff_t>(training_days, upper - available.begin());
  if (count <= 0) return {};
  const Date start = *(upper - count);
  std::vector<ForecastCase> out;
  for (const auto& c : data.cases) {
    if (c.date >= date) break;
    if (c.date >= start && c.observation) out.push_back(c);
  }
  return out;
}

}  // namespace bivemos

#include "bivemos/synthesize.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace bivemos {

using nlohmann::json;

BivariateEmosParams SyntheticSpec::default_truth() {
  BivariateEmosParams p;
  p.a = Vector2d(0.5, 0.5);
  p.c_factor << 1.2, 0.0, 0.5, 1.5;
  p.d = 0.6 * Matrix2d::Identity();
  return p;
}

BivariateEmosParams SyntheticSpec::resolved_truth() const {
  const GroupSpec g = group_spec();
  BivariateEmosParams p = truth_params;
  if (p.b.empty()) p.b.assign(g.groups(), Matrix2d::Identity() / g.members());
  if (static_cast<int>(p.b.size()) != g.groups()) {
    throw ConfigError("synthetic spec: truth has " + std::to_string(p.b.size()) +
                      " B matrices but groups '" + groups + "' define " + std::to_string(g.groups()));
  }
  return p;
}

void SyntheticSpec::validate() const {
  GroupSpec g;
  try {
    g = group_spec();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  if (g.members() < 2) throw ConfigError("synthetic spec: at least two members required");
  if (stations < 1 || days < 1) throw ConfigError("synthetic spec: stations and days must be positive");
  if (missing_day_rate < 0.0 || missing_day_rate >= 1.0 || missing_obs_rate < 0.0 || missing_obs_rate >= 1.0) {
    throw ConfigError("synthetic spec: missing rates must lie in [0, 1)");
  }
  if (!(dispersion > 0.0) || !(spread_wind_sd > 0.0) || !(spread_temp_sd > 0.0) || std::abs(spread_corr) >= 1.0) {
    throw ConfigError("synthetic spec: ensemble dispersion and spread must be positive, |corr| < 1");
  }
  if (!(wind_sd >= 0.0) || !(temp_sd >= 0.0) || std::abs(climate_corr) >= 1.0 || persistence < 0.0 ||
      persistence >= 1.0) {
    throw ConfigError("synthetic spec: invalid climatology");
  }
  if (!group_bias.empty() && static_cast<int>(group_bias.size()) != g.groups()) {
    throw ConfigError("synthetic spec: group_bias needs one entry per group");
  }
  try {
    parse_date(start_date);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  resolved_truth();
}

namespace {

Matrix2d matrix_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ConfigError("synthetic spec: 2x2 matrices are 4 numbers, row-major");
  Matrix2d m;
  m << j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>();
  return m;
}

json matrix_to_json(const Matrix2d& m) { return json::array({m(0, 0), m(0, 1), m(1, 0), m(1, 1)}); }

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Matrix2d covariance(double sd_a, double sd_b, double corr) {
  Matrix2d m;
  m << sd_a * sd_a, corr * sd_a * sd_b, corr * sd_a * sd_b, sd_b * sd_b;
  return m;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const std::string& json_text) {
  SyntheticSpec s;
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  try {
    for (const char* section : {"climate", "ensemble", "truth"}) {
      if (j.contains(section) && !j.at(section).is_object()) {
        throw ConfigError(std::string("synthetic spec: '") + section + "' must be an object");
      }
    }
    if (j.contains("preset")) s = preset_spec(j.at("preset").get<std::string>());
    read_if(j, "stations", s.stations);
    read_if(j, "days", s.days);
    read_if(j, "start_date", s.start_date);
    read_if(j, "groups", s.groups);
    read_if(j, "missing_day_rate", s.missing_day_rate);
    read_if(j, "missing_obs_rate", s.missing_obs_rate);
    if (j.contains("climate")) {
      const auto& c = j.at("climate");
      read_if(c, "wind_mean", s.wind_mean);
      read_if(c, "wind_sd", s.wind_sd);
      read_if(c, "temp_mean", s.temp_mean);
      read_if(c, "temp_sd", s.temp_sd);
      read_if(c, "correlation", s.climate_corr);
      read_if(c, "seasonal_amplitude", s.seasonal_amplitude);
      read_if(c, "station_wind_sd", s.station_wind_sd);
      read_if(c, "station_temp_sd", s.station_temp_sd);
      read_if(c, "persistence", s.persistence);
    }
    if (j.contains("ensemble")) {
      const auto& e = j.at("ensemble");
      read_if(e, "dispersion", s.dispersion);
      read_if(e, "spread_wind_sd", s.spread_wind_sd);
      read_if(e, "spread_temp_sd", s.spread_temp_sd);
      read_if(e, "spread_corr", s.spread_corr);
      if (e.contains("group_bias")) {
        s.group_bias.clear();
        for (const auto& b : e.at("group_bias")) s.group_bias.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
      }
    }
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      if (t.contains("mode")) {
        const auto mode = t.at("mode").get<std::string>();
        if (mode == "emos") {
          s.truth = TruthMode::Emos;
        } else if (mode == "exchangeable") {
          s.truth = TruthMode::Exchangeable;
        } else {
          throw ConfigError("synthetic spec: truth.mode must be 'emos' or 'exchangeable'");
        }
      }
      if (t.contains("a")) s.truth_params.a = Vector2d(t.at("a").at(0).get<double>(), t.at("a").at(1).get<double>());
      if (t.contains("b")) {
        s.truth_params.b.clear();
        for (const auto& b : t.at("b")) s.truth_params.b.push_back(matrix_from_json(b));
      }
      if (t.contains("c_factor")) s.truth_params.c_factor = matrix_from_json(t.at("c_factor"));
      if (t.contains("d")) s.truth_params.d = matrix_from_json(t.at("d"));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generator spec '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_synthetic_spec(buf.str());
}

std::string synthetic_spec_to_json(const SyntheticSpec& s) {
  json j;
  j["stations"] = s.stations;
  j["days"] = s.days;
  j["start_date"] = s.start_date;
  j["groups"] = s.groups;
  j["missing_day_rate"] = s.missing_day_rate;
  j["missing_obs_rate"] = s.missing_obs_rate;
  j["climate"] = {{"wind_mean", s.wind_mean},
                  {"wind_sd", s.wind_sd},
                  {"temp_mean", s.temp_mean},
                  {"temp_sd", s.temp_sd},
                  {"correlation", s.climate_corr},
                  {"seasonal_amplitude", s.seasonal_amplitude},
                  {"station_wind_sd", s.station_wind_sd},
                  {"station_temp_sd", s.station_temp_sd},
                  {"persistence", s.persistence}};
  json bias = json::array();
  for (const auto& b : s.group_bias) bias.push_back({b(0), b(1)});
  j["ensemble"] = {{"dispersion", s.dispersion},
                   {"spread_wind_sd", s.spread_wind_sd},
                   {"spread_temp_sd", s.spread_temp_sd},
                   {"spread_corr", s.spread_corr},
                   {"group_bias", bias}};
  json b = json::array();
  for (const auto& m : s.truth_params.b) b.push_back(matrix_to_json(m));
  j["truth"] = {{"mode", s.truth == TruthMode::Emos ? "emos" : "exchangeable"},
                {"a", {s.truth_params.a(0), s.truth_params.a(1)}},
                {"b", b},
                {"c_factor", matrix_to_json(s.truth_params.c_factor)},
                {"d", matrix_to_json(s.truth_params.d)}};
  return j.dump(2);
}

Dataset synthesize_dataset(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const GroupSpec groups = spec.group_spec();
  const BivariateEmosParams truth = spec.resolved_truth();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Dataset data;
  data.groups = groups;
  data.metadata.source = "synthetic (seed " + std::to_string(seed) + ")";

  const int width = static_cast<int>(std::to_string(spec.stations).size());
  std::vector<std::string> names(spec.stations);
  std::vector<Vector2d> offsets(spec.stations);
  std::vector<Vector2d> anomaly(spec.stations, Vector2d::Zero());
  const Matrix2d clim_chol = covariance(spec.wind_sd, spec.temp_sd, spec.climate_corr).llt().matrixL();
  for (int s = 0; s < spec.stations; ++s) {
    std::string id = std::to_string(s + 1);
    names[s] = "S" + std::string(static_cast<std::size_t>(width) - id.size(), '0') + id;
    offsets[s] = Vector2d(spec.station_wind_sd * gauss(rng), spec.station_temp_sd * gauss(rng));
    anomaly[s] = clim_chol * Vector2d(gauss(rng), gauss(rng));
  }

  const Matrix2d member_scale = spec.dispersion * spec.dispersion *
                                covariance(spec.spread_wind_sd, spec.spread_temp_sd, spec.spread_corr);
  const Matrix2d obs_scale = covariance(spec.spread_wind_sd, spec.spread_temp_sd, spec.spread_corr);
  const double innovation = std::sqrt(1.0 - spec.persistence * spec.persistence);
  const Date start = parse_date(spec.start_date);

  for (int day = 0; day < spec.days; ++day) {
    const Date date = start + std::chrono::days{day};
    const bool missing_day = unif(rng) < spec.missing_day_rate;
    const double doy = static_cast<double>(
        (date - std::chrono::sys_days{std::chrono::year_month_day{std::chrono::year_month_day{date}.year(),
                                                                  std::chrono::January, std::chrono::day{1}}})
            .count());
    const double seasonal = spec.seasonal_amplitude * std::sin(2.0 * std::numbers::pi * (doy - 105.0) / 365.25);
    for (int s = 0; s < spec.stations; ++s) {
      anomaly[s] = spec.persistence * anomaly[s] + innovation * clim_chol * Vector2d(gauss(rng), gauss(rng));
      const Vector2d latent = Vector2d(spec.wind_mean, spec.temp_mean + seasonal) + offsets[s] + anomaly[s];

      ForecastCase c;
      c.date = date;
      c.station = names[s];
      c.members.resize(2, groups.members());
      for (int j = 0; j < groups.members(); ++j) {
        const int k = groups.member_to_group()[j];
        const Vector2d loc = spec.group_bias.empty() ? latent : Vector2d(latent + spec.group_bias[k]);
        const TruncBivariateNormald law(loc, member_scale);
        c.members.col(j) = sample(law, 1, rng).col(0);
      }

      if (spec.truth == TruthMode::Emos) {
        const auto law = predictive_law(truth, c, groups);
        if (!law) throw ConfigError("synthetic spec: truth parameters give a singular scale matrix");
        c.observation = Vector2d(sample(*law, 1, rng).col(0));
      } else {
        const TruncBivariateNormald law(latent, obs_scale);
        c.observation = Vector2d(sample(law, 1, rng).col(0));
      }
      if (unif(rng) < spec.missing_obs_rate) c.observation.reset();
      if (!missing_day) data.cases.push_back(std::move(c));
    }
  }
  normalize(data);
  return data;
}

SyntheticSpec preset_spec(const std::string& name) {
  SyntheticSpec s;
  if (name == "aladin") {
    s.stations = 10;
    s.days = 100;
    s.groups = "1,10";
    s.start_date = "2012-04-01";
    return s;
  }
  if (name == "uwme") {
    s.stations = 90;
    s.days = 60;
    s.groups = "1x8";
    s.start_date = "2007-11-01";
    s.dispersion = 0.5;
    return s;
  }
  throw ConfigError("unknown preset '" + name + "' (expected aladin or uwme)");
}

}  // namespace bivemos

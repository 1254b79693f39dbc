#include "bivemos/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "bivemos/seed.hpp"

namespace bivemos {

// ---------------------------------------------------------------------------
// Method names

Method parse_method(std::string_view name) {
  if (name == "bivariate-emos" || name == "emos") return Method::BivariateEmos;
  if (name == "independent-emos" || name == "indep") return Method::IndependentEmos;
  if (name == "copula") return Method::Copula;
  if (name == "raw") return Method::Raw;
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected bivariate-emos, independent-emos, copula or raw)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::BivariateEmos: return "bivariate-emos";
    case Method::IndependentEmos: return "independent-emos";
    case Method::Copula: return "copula";
    case Method::Raw: return "raw";
  }
  return "raw";
}

std::string method_label(Method m) {
  switch (m) {
    case Method::BivariateEmos: return "EMOS";
    case Method::IndependentEmos: return "Indep. EMOS";
    case Method::Copula: return "Copula";
    case Method::Raw: return "Raw ensemble";
  }
  return "Raw ensemble";
}

std::vector<Method> parse_method_list(std::string_view comma_list) {
  std::vector<Method> out;
  std::size_t pos = 0;
  while (pos <= comma_list.size()) {
    const auto comma = std::min(comma_list.find(',', pos), comma_list.size());
    const auto token = comma_list.substr(pos, comma - pos);
    if (!token.empty()) out.push_back(parse_method(token));
    pos = comma + 1;
  }
  if (out.empty()) throw ConfigError("empty method list");
  return out;
}

// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, bool parallel, const std::function<void(std::size_t)>& fn) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (!parallel || hw == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  const auto threads = std::min<std::size_t>(hw, n);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

const DayModel* CalibrationResult::model_for(Date d) const {
  const auto it = std::lower_bound(models.begin(), models.end(), d,
                                   [](const DayModel& m, Date v) { return m.date < v; });
  return it != models.end() && it->date == d ? &*it : nullptr;
}

// ---------------------------------------------------------------------------
// Calibration

namespace {

IndependentEmosModel fit_independent(std::span<const ForecastCase> training, const GroupSpec& groups,
                                     const CalibrationConfig& cfg, bool& converged, double& score) {
  UnivariateFitOptions options;
  options.optimizer = cfg.optimizer;
  options.nonnegative_coeffs = cfg.nonnegative_univariate;
  const auto wind = fit_univariate(training, Variable::Wind, groups, options);
  const auto temp = fit_univariate(training, Variable::Temp, groups, options);
  converged = wind.optim.converged && temp.optim.converged;
  score = wind.score + temp.score;
  return {wind.params, temp.params};
}

std::pair<UnivariateLaw, UnivariateLaw> margins_for(const IndependentEmosModel& m, const ForecastCase& c,
                                                    const GroupSpec& groups) {
  return {univariate_law(m.wind, c, Variable::Wind, groups), univariate_law(m.temp, c, Variable::Temp, groups)};
}

}  // namespace

CopulaModel fit_copula_correlation(const Dataset& history, int training_days, const CalibrationConfig& cfg) {
  std::vector<CopulaHistoryCase> pairs;
  bool converged = false;
  double score = 0.0;
  if (cfg.copula_history == CopulaHistoryFit::Pooled) {
    std::vector<ForecastCase> observed;
    for (const auto& c : history.cases) {
      if (c.observation) observed.push_back(c);
    }
    const auto model = fit_independent(observed, history.groups, cfg, converged, score);
    for (const auto& c : observed) pairs.push_back({margins_for(model, c, history.groups), *c.observation});
  } else {
    const WindowPlan plan = make_window_plan(history, training_days);
    std::vector<std::vector<CopulaHistoryCase>> per_day(plan.verification_dates.size());
    parallel_for(per_day.size(), cfg.parallel, [&](std::size_t i) {
      const Date d = plan.verification_dates[i];
      const auto window = training_window(history, d, training_days);
      bool conv = false;
      double s = 0.0;
      IndependentEmosModel model;
      try {
        model = fit_independent(window, history.groups, cfg, conv, s);
      } catch (const FitError&) {
        return;
      }
      for (const auto& c : history.cases_on(d)) {
        if (c.observation) per_day[i].push_back({margins_for(model, c, history.groups), *c.observation});
      }
    });
    for (auto& day : per_day) pairs.insert(pairs.end(), day.begin(), day.end());
  }
  if (pairs.size() < 2) throw ConfigError("correlation history yields fewer than two usable cases");
  return estimate_correlation(pairs);
}

CalibrationResult rolling_calibrate(const Dataset& data, const WindowPlan& plan, Method method,
                                    const CalibrationConfig& cfg, const Dataset* history) {
  CalibrationResult result;
  result.method = method;
  result.groups = data.groups;
  result.training_length_days = plan.training_length_days;

  std::optional<CopulaModel> copula;
  if (method == Method::Copula) {
    if (!history) throw ConfigError("the copula method requires a correlation-history dataset");
    if (!(history->groups == data.groups)) {
      throw ConfigError("correlation-history dataset has a different member layout");
    }
    copula = fit_copula_correlation(*history, plan.training_length_days, cfg);
  }

  const auto& dates = plan.verification_dates;
  std::vector<std::optional<DayModel>> slots(dates.size());
  std::vector<double> seconds(dates.size(), 0.0);
  std::vector<std::string> notes(dates.size());
  std::optional<BivariateEmosParams> previous;

  auto fit_day = [&](std::size_t i) {
    const Date d = dates[i];
    DayModel day;
    day.date = d;
    if (method == Method::Raw) {
      day.model = std::monostate{};
      slots[i] = std::move(day);
      return;
    }
    const auto window = training_window(data, d, plan.training_length_days);
    day.training_cases = static_cast<int>(window.size());
    try {
      const auto start = std::chrono::steady_clock::now();
      if (method == Method::BivariateEmos) {
        BivariateFitOptions options;
        options.optimizer = cfg.optimizer;
        if (cfg.warm_start_previous && previous) {
          options.initial_c_factor = previous->c_factor;
          options.initial_d = previous->d;
        }
        const auto fit = fit_bivariate(window, data.groups, options);
        day.model = fit.params;
        day.converged = fit.optim.converged;
        day.training_score = fit.score;
        previous = fit.params;
      } else {
        IndependentEmosModel margins = fit_independent(window, data.groups, cfg, day.converged, day.training_score);
        if (method == Method::IndependentEmos) {
          day.model = std::move(margins);
        } else {
          day.model = CopulaEmosModel{std::move(margins), *copula};
        }
      }
      seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      slots[i] = std::move(day);
    } catch (const FitError& e) {
      notes[i] = format_date(d) + ": skipped: " + e.what();
    }
  };

  const bool serial = cfg.warm_start_previous && method == Method::BivariateEmos;
  parallel_for(dates.size(), cfg.parallel && !serial, fit_day);

  for (std::size_t i = 0; i < dates.size(); ++i) {
    if (!notes[i].empty()) result.diagnostics.push_back(notes[i]);
    if (!slots[i]) continue;
    result.models.push_back(std::move(*slots[i]));
    result.timings.push_back({dates[i], method_name(method), seconds[i]});
  }
  if (copula) {
    result.diagnostics.push_back("copula correlation from history: " + std::to_string(copula->gamma));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Verification

std::vector<ForecastCase> verification_cases(const Dataset& data, const WindowPlan& plan) {
  std::vector<ForecastCase> out;
  for (const Date d : plan.verification_dates) {
    for (auto& c : data.cases_on(d)) {
      if (c.observation) out.push_back(std::move(c));
    }
  }
  return out;
}

namespace {

std::uint64_t case_key(std::uint64_t seed, const ForecastCase& c) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the station id
  for (const unsigned char ch : c.station) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(c.date.time_since_epoch().count())), h);
}

ScoredCase score_sample_method(const Eigen::Matrix2Xd& es_sample, const Eigen::Matrix2Xd& rank_sample,
                               const Vector2d& obs, const VerificationConfig& cfg, std::uint64_t case_seed) {
  ScoredCase s;
  s.obs = obs;
  s.es = energy_score_mc(es_sample, obs, cfg.pairing);
  s.rank = multivariate_rank(rank_sample, obs, derive_seed(case_seed, 2));
  s.median = spatial_median(es_sample).point;
  return s;
}

}  // namespace

ScoredCase score_case(const FittedModel& model, const ForecastCase& c, const GroupSpec& groups,
                      const VerificationConfig& cfg, std::uint64_t case_seed) {
  if (!c.observation) throw std::invalid_argument("score_case: case has no observation");
  const Vector2d obs = *c.observation;
  const std::uint64_t es_seed = derive_seed(case_seed, 0);
  const std::uint64_t rank_seed = derive_seed(case_seed, 1);

  if (std::holds_alternative<std::monostate>(model)) {
    ScoredCase s;
    s.obs = obs;
    s.es = energy_score_ensemble(c.members, obs);
    s.rank = multivariate_rank(c.members, obs, derive_seed(case_seed, 2));
    const auto stats = ensemble_stats(c);
    s.ds = determinant_sharpness(stats.cov);
    s.median = spatial_median(c.members).point;
    s.mean = stats.mean;
    return s;
  }

  if (const auto* p = std::get_if<BivariateEmosParams>(&model)) {
    auto law = predictive_law(*p, c, groups);
    if (!law) {
      // Singular scale for an unseen ensemble; regularize minimally.
      const Matrix2Xd sums = group_sums(c, groups);
      Vector2d location = p->a;
      for (int k = 0; k < groups.groups(); ++k) location += p->b[k] * sums.col(k);
      const Matrix2d scale = p->c() + p->d * ensemble_stats(c).cov * p->d.transpose() + 1e-8 * Matrix2d::Identity();
      law = TruncBivariateNormald(location, scale);
    }
    const auto es_sample = sample(*law, cfg.es_samples, es_seed);
    const auto rank_sample = sample(*law, cfg.rank_samples, rank_seed);
    ScoredCase s = score_sample_method(es_sample, rank_sample, obs, cfg, case_seed);
    const auto mom = moments(*law);
    s.ds = determinant_sharpness(mom.xi);
    s.mean = mom.kappa;
    return s;
  }

  const IndependentEmosModel& margins_model = std::holds_alternative<IndependentEmosModel>(model)
                                                  ? std::get<IndependentEmosModel>(model)
                                                  : std::get<CopulaEmosModel>(model).margins;
  const CopulaModel copula = std::holds_alternative<CopulaEmosModel>(model)
                                 ? std::get<CopulaEmosModel>(model).copula
                                 : CopulaModel{0.0};
  const auto margins = margins_for(margins_model, c, groups);
  const auto es_sample = copula_sample(margins, copula, cfg.es_samples, es_seed);
  const auto rank_sample = copula_sample(margins, copula, cfg.rank_samples, rank_seed);
  ScoredCase s = score_sample_method(es_sample, rank_sample, obs, cfg, case_seed);
  if (std::holds_alternative<IndependentEmosModel>(model)) {
    Matrix2d cov = Matrix2d::Zero();
    cov(0, 0) = univ_variance(margins.first);
    cov(1, 1) = univ_variance(margins.second);
    s.ds = determinant_sharpness(cov);
    s.mean = Vector2d(univ_mean(margins.first), univ_mean(margins.second));
  } else {
    s.ds = determinant_sharpness(sample_covariance(es_sample));
    s.mean = es_sample.rowwise().mean();
  }
  return s;
}

std::vector<VerifiedCase> verify_calibration(std::span<const ForecastCase> cases,
                                             const CalibrationResult& calibration,
                                             const VerificationConfig& cfg) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (cases[i].observation && calibration.model_for(cases[i].date)) usable.push_back(i);
  }
  std::vector<VerifiedCase> out(usable.size());
  parallel_for(usable.size(), cfg.parallel, [&](std::size_t k) {
    const auto& c = cases[usable[k]];
    const DayModel* day = calibration.model_for(c.date);
    out[k] = {c.date, c.station, score_case(day->model, c, calibration.groups, cfg, case_key(cfg.seed, c))};
  });
  return out;
}

TimingSummary summarize_timings(std::span<const TimingRecord> timings) {
  TimingSummary s;
  s.days = static_cast<int>(timings.size());
  if (timings.empty()) return s;
  std::vector<double> v;
  v.reserve(timings.size());
  for (const auto& t : timings) v.push_back(t.seconds);
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  s.median = n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (const double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std_dev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return s;
}

MethodOutcome summarize_outcome(Method method, std::vector<VerifiedCase> cases, int rank_bins,
                                CalibrationResult calibration) {
  MethodOutcome out;
  out.method = method;
  out.label = method_label(method);
  std::vector<ScoredCase> scored;
  scored.reserve(cases.size());
  for (const auto& c : cases) scored.push_back(c.scores);
  out.histogram = RankHistogram(rank_bins);
  if (!scored.empty()) out.report = point_forecast_report(scored, rank_bins, &out.histogram);
  out.timing = summarize_timings(calibration.timings);
  out.cases = std::move(cases);
  out.calibration = std::move(calibration);
  return out;
}

ExperimentResult run_experiment(const Dataset& data, const WindowPlan& plan, std::span<const Method> methods,
                                const ExperimentConfig& cfg, const Dataset* history) {
  for (const Method m : methods) {
    if (m == Method::Copula && !history) {
      throw ConfigError("the copula method requires a correlation-history dataset");
    }
  }
  const auto cases = verification_cases(data, plan);
  ExperimentResult result;
  for (const Method m : methods) {
    auto calibration = rolling_calibrate(data, plan, m, cfg.calibration, history);
    auto verified = verify_calibration(cases, calibration, cfg.verification);
    const int bins = m == Method::Raw ? data.groups.members() + 1 : cfg.verification.rank_samples + 1;
    result.outcomes.push_back(summarize_outcome(m, std::move(verified), bins, std::move(calibration)));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

void write_score_table(std::ostream& out, std::span<const MethodOutcome> outcomes) {
  out << "method\tES\tDelta\tDS\tEE_median\trho_median\trho_err_median\tEE_mean\trho_mean\trho_err_mean\tcases\n";
  for (const auto& o : outcomes) {
    const auto& r = o.report;
    out << o.label << '\t' << fmt(r.mean_es) << '\t' << fmt(r.delta) << '\t' << fmt(r.mean_ds) << '\t'
        << fmt(r.ee_median) << '\t' << fmt(r.rho_median) << '\t' << fmt(r.rho_err_median) << '\t'
        << fmt(r.ee_mean) << '\t' << fmt(r.rho_mean) << '\t' << fmt(r.rho_err_mean) << '\t' << r.cases << '\n';
  }
}

void write_rank_histograms(std::ostream& out, std::span<const MethodOutcome> outcomes) {
  out << "method\trank\tcount\n";
  for (const auto& o : outcomes) {
    const auto& counts = o.histogram.counts();
    for (std::size_t r = 0; r < counts.size(); ++r) {
      out << o.label << '\t' << r + 1 << '\t' << counts[r] << '\n';
    }
  }
}

void write_timing_table(std::ostream& out, std::span<const TimingColumn> columns) {
  out << "statistic";
  for (const auto& c : columns) out << '\t' << c.label;
  out << "\nmedian";
  for (const auto& c : columns) out << '\t' << fmt(c.summary.median, 3);
  out << "\nmean";
  for (const auto& c : columns) out << '\t' << fmt(c.summary.mean, 3);
  out << "\nstd. dev.";
  for (const auto& c : columns) out << '\t' << fmt(c.summary.std_dev, 3);
  out << "\ndays";
  for (const auto& c : columns) out << '\t' << c.summary.days;
  out << '\n';
}

// ---------------------------------------------------------------------------
// Model persistence

namespace {

using nlohmann::json;

json to_json_vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json_mat(const Matrix2d& m) { return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)}; }

Matrix2d mat_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("expected a 2x2 matrix as four numbers (row-major)");
  Matrix2d m;
  m << j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>();
  return m;
}

Eigen::VectorXd vec_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json univariate_to_json(const UnivariateEmosParams& p) {
  return {{"intercept", p.intercept}, {"coeffs", to_json_vec(p.member_coeffs)}, {"var_c", p.var_c}, {"var_d", p.var_d}};
}

UnivariateEmosParams univariate_from_json(const json& j) {
  UnivariateEmosParams p;
  p.intercept = j.at("intercept").get<double>();
  p.member_coeffs = vec_from_json(j.at("coeffs"));
  p.var_c = j.at("var_c").get<double>();
  p.var_d = j.at("var_d").get<double>();
  return p;
}

json model_to_json(const FittedModel& model) {
  if (const auto* p = std::get_if<BivariateEmosParams>(&model)) {
    json b = json::array();
    for (const auto& bk : p->b) b.push_back(to_json_mat(bk));
    return {{"a", to_json_vec(p->a)}, {"b", b}, {"c_factor", to_json_mat(p->c_factor)}, {"d", to_json_mat(p->d)}};
  }
  if (const auto* p = std::get_if<IndependentEmosModel>(&model)) {
    return {{"wind", univariate_to_json(p->wind)}, {"temp", univariate_to_json(p->temp)}};
  }
  if (const auto* p = std::get_if<CopulaEmosModel>(&model)) {
    return {{"wind", univariate_to_json(p->margins.wind)},
            {"temp", univariate_to_json(p->margins.temp)},
            {"gamma", p->copula.gamma}};
  }
  return json::object();
}

FittedModel model_from_json(Method method, const json& j, const GroupSpec& groups) {
  switch (method) {
    case Method::BivariateEmos: {
      BivariateEmosParams p;
      const auto a = j.at("a").get<std::vector<double>>();
      if (a.size() != 2) throw DataError("bivariate model: 'a' must have two entries");
      p.a = Vector2d(a[0], a[1]);
      for (const auto& bk : j.at("b")) p.b.push_back(mat_from_json(bk));
      if (static_cast<int>(p.b.size()) != groups.groups()) {
        throw DataError("bivariate model: " + std::to_string(p.b.size()) + " B matrices for " +
                        std::to_string(groups.groups()) + " groups");
      }
      p.c_factor = mat_from_json(j.at("c_factor"));
      p.d = mat_from_json(j.at("d"));
      return p;
    }
    case Method::IndependentEmos:
      return IndependentEmosModel{univariate_from_json(j.at("wind")), univariate_from_json(j.at("temp"))};
    case Method::Copula:
      return CopulaEmosModel{{univariate_from_json(j.at("wind")), univariate_from_json(j.at("temp"))},
                             CopulaModel{j.at("gamma").get<double>()}};
    case Method::Raw:
      break;
  }
  return std::monostate{};
}

}  // namespace

std::string calibration_to_json(const CalibrationResult& calibration) {
  json models = json::array();
  for (const auto& m : calibration.models) {
    models.push_back({{"date", format_date(m.date)},
                      {"training_cases", m.training_cases},
                      {"converged", m.converged},
                      {"training_score", m.training_score},
                      {"params", model_to_json(m.model)}});
  }
  json timings = json::array();
  for (const auto& t : calibration.timings) {
    timings.push_back({{"date", format_date(t.date)}, {"seconds", t.seconds}});
  }
  const json doc = {{"method", method_name(calibration.method)},
                    {"groups", calibration.groups.to_string()},
                    {"training_days", calibration.training_length_days},
                    {"models", models},
                    {"timings", timings},
                    {"diagnostics", calibration.diagnostics}};
  return doc.dump(2);
}

CalibrationResult calibration_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    CalibrationResult r;
    r.method = parse_method(doc.at("method").get<std::string>());
    r.groups = GroupSpec::parse(doc.at("groups").get<std::string>());
    r.training_length_days = doc.at("training_days").get<int>();
    for (const auto& m : doc.at("models")) {
      DayModel day;
      day.date = parse_date(m.at("date").get<std::string>());
      day.training_cases = m.value("training_cases", 0);
      day.converged = m.value("converged", true);
      day.training_score = m.value("training_score", 0.0);
      day.model = model_from_json(r.method, m.at("params"), r.groups);
      r.models.push_back(std::move(day));
    }
    std::sort(r.models.begin(), r.models.end(), [](const DayModel& a, const DayModel& b) { return a.date < b.date; });
    for (const auto& t : doc.value("timings", json::array())) {
      r.timings.push_back({parse_date(t.at("date").get<std::string>()), method_name(r.method),
                           t.at("seconds").get<double>()});
    }
    r.diagnostics = doc.value("diagnostics", std::vector<std::string>{});
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

void save_calibration(const std::string& path, const CalibrationResult& calibration) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << calibration_to_json(calibration) << '\n';
}

CalibrationResult load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return calibration_from_json(text.str());
}

}  // namespace bivemos

// bivemos: calibrate, verify, simulate and benchmark bivariate EMOS.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bivemos/experiment.hpp"
#include "bivemos/synthesize.hpp"

namespace fs = std::filesystem;
using namespace bivemos;

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 1;

struct DataArgs {
  std::string path;
  std::string groups = "1,10";
  int train_days = 40;
  std::string first;
  std::string last;
};

void add_data_options(CLI::App* cmd, DataArgs& a, bool with_groups = true) {
  cmd->add_option("--data", a.path, "Forecast/observation CSV")->required()->check(CLI::ExistingFile);
  if (with_groups) cmd->add_option("--groups", a.groups, "Exchangeable group sizes, e.g. 1,10 or 1x8");
  cmd->add_option("--train-days", a.train_days, "Training window length in available days")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--first", a.first, "First verification date (YYYY-MM-DD)");
  cmd->add_option("--last", a.last, "Last verification date (YYYY-MM-DD)");
}

Dataset load_or_fail(const std::string& path, const GroupSpec& groups) {
  auto loaded = load_dataset(path, groups);
  for (const auto& r : loaded.rejected) std::cerr << "warning: rejected row " << r << '\n';
  return std::move(loaded.data);
}

std::optional<Date> optional_date(const std::string& text) {
  if (text.empty()) return std::nullopt;
  try {
    return parse_date(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

WindowPlan plan_for(const Dataset& data, const DataArgs& a) {
  auto plan = make_window_plan(data, a.train_days, optional_date(a.first), optional_date(a.last));
  if (plan.verification_dates.empty()) {
    throw ConfigError("no verification dates: the data cover fewer than " + std::to_string(a.train_days + 1) +
                      " available days in the requested range");
  }
  return plan;
}

OptimizerMethod parse_optimizer(const std::string& name) {
  if (name == "simplex" || name == "nelder-mead") return OptimizerMethod::Simplex;
  if (name == "quasi-newton" || name == "bfgs") return OptimizerMethod::QuasiNewton;
  throw ConfigError("unknown optimizer '" + name + "' (expected simplex or quasi-newton)");
}

std::string optimizer_name(OptimizerMethod m) {
  return m == OptimizerMethod::Simplex ? "simplex" : "quasi-newton";
}

template <typename Writer>
void write_file(const std::string& path, Writer&& writer) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  writer(out);
}

void print_diagnostics(const CalibrationResult& r) {
  for (const auto& d : r.diagnostics) std::cerr << "note: " << d << '\n';
}

CalibrationResult raw_calibration(const GroupSpec& groups, std::span<const Date> dates) {
  CalibrationResult r;
  r.method = Method::Raw;
  r.groups = groups;
  for (const Date d : dates) r.models.push_back(DayModel{d, std::monostate{}, 0, true, 0.0});
  return r;
}

int rank_bins_for(Method m, const GroupSpec& groups, const VerificationConfig& cfg) {
  return m == Method::Raw ? groups.members() + 1 : cfg.rank_samples + 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bivariate EMOS calibration and verification of wind/temperature ensembles"};
  app.require_subcommand(1);

  // simulate
  std::string sim_spec;
  std::uint64_t sim_seed = 1;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic forecast/observation CSV");
  simulate->add_option("--spec", sim_spec, "Generator spec JSON file or preset name (aladin, uwme)")->required();
  simulate->add_option("--seed", sim_seed, "Random seed");
  simulate->add_option("--out", sim_out, "Output CSV")->required();

  // calibrate
  DataArgs cal;
  std::string cal_method = "bivariate-emos";
  std::string cal_out;
  std::string cal_history;
  std::string cal_optimizer = "simplex";
  bool cal_warm = false;
  bool cal_serial = false;
  bool cal_nonneg = false;
  bool cal_pooled = false;
  int cal_max_evals = 0;
  auto* calibrate = app.add_subcommand("calibrate", "Fit one method on rolling training windows");
  add_data_options(calibrate, cal);
  calibrate->add_option("--method", cal_method, "bivariate-emos, independent-emos or copula");
  calibrate->add_option("--out", cal_out, "Output directory (models.json, timing.tsv)")->required();
  calibrate->add_option("--history", cal_history, "Separate history CSV for the copula correlation");
  calibrate->add_option("--optimizer", cal_optimizer, "simplex or quasi-newton");
  calibrate->add_option("--max-evals", cal_max_evals, "Objective evaluation budget per fit (0 = 500 x parameters)")
      ->check(CLI::NonNegativeNumber);
  calibrate->add_flag("--warm-start", cal_warm, "Start scale parameters from the previous day's estimates");
  calibrate->add_flag("--serial", cal_serial, "Fit days one after another");
  calibrate->add_flag("--nonnegative", cal_nonneg, "Constrain univariate member coefficients to be nonnegative");
  calibrate->add_flag("--pooled-history", cal_pooled, "Fit copula history margins once instead of rolling");

  // verify
  std::vector<std::string> ver_models;
  std::string ver_data;
  VerificationConfig ver_cfg;
  std::string ver_out;
  std::string ver_hist;
  bool ver_raw = false;
  bool ver_all_pairs = false;
  bool ver_serial = false;
  auto* verify = app.add_subcommand("verify", "Score fitted models on their verification dates");
  verify->add_option("--models", ver_models, "Calibration output directory (repeatable)")->required();
  verify->add_option("--data", ver_data, "Forecast/observation CSV")->required()->check(CLI::ExistingFile);
  verify->add_option("--es-samples", ver_cfg.es_samples, "Monte Carlo sample size for ES and median")
      ->check(CLI::Range(2, 100000000));
  verify->add_option("--rank-samples", ver_cfg.rank_samples, "Sample size for multivariate ranks")
      ->check(CLI::PositiveNumber);
  verify->add_option("--seed", ver_cfg.seed, "Scoring seed");
  verify->add_option("--out", ver_out, "Score table (TSV)")->required();
  verify->add_option("--histograms", ver_hist, "Rank histogram counts (TSV)");
  verify->add_flag("--raw", ver_raw, "Append a raw-ensemble row");
  verify->add_flag("--all-pairs", ver_all_pairs, "Energy score over all sample pairs");
  verify->add_flag("--serial", ver_serial, "Score cases one after another");

  // run
  DataArgs run;
  std::string run_methods = "bivariate-emos,independent-emos,copula,raw";
  std::string run_history;
  std::string run_out;
  ExperimentConfig run_cfg;
  std::string run_optimizer = "simplex";
  auto* run_cmd = app.add_subcommand("run", "Calibrate and verify several methods on identical cases");
  add_data_options(run_cmd, run);
  run_cmd->add_option("--methods", run_methods, "Comma-separated method list");
  run_cmd->add_option("--history", run_history, "Separate history CSV for the copula correlation");
  run_cmd->add_option("--optimizer", run_optimizer, "simplex or quasi-newton");
  run_cmd->add_option("--max-evals", run_cfg.calibration.optimizer.max_evals,
                      "Objective evaluation budget per fit (0 = 500 x parameters)")
      ->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--es-samples", run_cfg.verification.es_samples, "Monte Carlo sample size")
      ->check(CLI::Range(2, 100000000));
  run_cmd->add_option("--rank-samples", run_cfg.verification.rank_samples, "Sample size for ranks")
      ->check(CLI::PositiveNumber);
  run_cmd->add_option("--seed", run_cfg.verification.seed, "Scoring seed");
  run_cmd->add_option("--out", run_out, "Output directory (scores.tsv, ranks.tsv, timing.tsv)")->required();

  // bench
  DataArgs bench;
  std::string bench_methods = "bivariate-emos";
  std::string bench_optimizer = "both";
  std::string bench_out;
  int bench_days = 0;
  int bench_max_evals = 0;
  auto* bench_cmd = app.add_subcommand("bench", "Time parameter estimation per verification day");
  add_data_options(bench_cmd, bench);
  bench_cmd->add_option("--methods", bench_methods, "Comma-separated method list");
  bench_cmd->add_option("--optimizer", bench_optimizer, "simplex, quasi-newton or both");
  bench_cmd->add_option("--days", bench_days, "Limit to the first N verification days (0 = all)");
  bench_cmd->add_option("--max-evals", bench_max_evals, "Objective evaluation budget per fit (0 = 500 x parameters)")
      ->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--out", bench_out, "Timing table (TSV); stdout when omitted");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      SyntheticSpec spec = fs::exists(sim_spec) ? load_synthetic_spec(sim_spec) : preset_spec(sim_spec);
      const Dataset data = synthesize_dataset(spec, sim_seed);
      save_dataset(sim_out, data);
      std::cerr << "wrote " << data.cases.size() << " cases to " << sim_out << '\n';
      return 0;
    }

    if (*calibrate) {
      const GroupSpec groups = GroupSpec::parse(cal.groups);
      const Method method = parse_method(cal_method);
      if (method == Method::Raw) throw ConfigError("the raw ensemble has nothing to calibrate");
      const Dataset data = load_or_fail(cal.path, groups);
      std::optional<Dataset> history;
      if (!cal_history.empty()) history = load_or_fail(cal_history, groups);
      CalibrationConfig cfg;
      cfg.optimizer.method = parse_optimizer(cal_optimizer);
      cfg.optimizer.max_evals = cal_max_evals;
      cfg.warm_start_previous = cal_warm;
      cfg.parallel = !cal_serial;
      cfg.nonnegative_univariate = cal_nonneg;
      cfg.copula_history = cal_pooled ? CopulaHistoryFit::Pooled : CopulaHistoryFit::Rolling;
      const auto result =
          rolling_calibrate(data, plan_for(data, cal), method, cfg, history ? &*history : nullptr);
      print_diagnostics(result);
      fs::create_directories(cal_out);
      save_calibration((fs::path(cal_out) / "models.json").string(), result);
      const TimingColumn column{method_label(method) + " (" + optimizer_name(cfg.optimizer.method) + ")",
                                summarize_timings(result.timings)};
      write_file((fs::path(cal_out) / "timing.tsv").string(),
                 [&](std::ostream& out) { write_timing_table(out, std::span(&column, 1)); });
      std::cerr << "fitted " << result.models.size() << " days\n";
      return 0;
    }

    if (*verify) {
      ver_cfg.pairing = ver_all_pairs ? EsPairing::AllPairs : EsPairing::Consecutive;
      ver_cfg.parallel = !ver_serial;
      std::vector<CalibrationResult> calibrations;
      for (const auto& dir : ver_models) {
        fs::path p(dir);
        if (fs::is_directory(p)) p /= "models.json";
        calibrations.push_back(load_calibration(p.string()));
      }
      const GroupSpec groups = calibrations.front().groups;
      for (const auto& c : calibrations) {
        if (!(c.groups == groups)) throw ConfigError("model sets use different group layouts");
      }
      const Dataset data = load_or_fail(ver_data, groups);
      // Common dates so every method sees identical cases.
      std::vector<Date> dates;
      for (const auto& m : calibrations.front().models) {
        if (std::all_of(calibrations.begin(), calibrations.end(),
                        [&](const CalibrationResult& c) { return c.model_for(m.date) != nullptr; })) {
          dates.push_back(m.date);
        }
      }
      if (ver_raw) calibrations.push_back(raw_calibration(groups, dates));
      WindowPlan plan;
      plan.verification_dates = dates;
      const auto cases = verification_cases(data, plan);
      if (cases.empty()) throw ConfigError("no observed cases on the models' verification dates");
      std::vector<MethodOutcome> outcomes;
      for (auto& c : calibrations) {
        auto scored = verify_calibration(cases, c, ver_cfg);
        const Method m = c.method;
        outcomes.push_back(summarize_outcome(m, std::move(scored), rank_bins_for(m, groups, ver_cfg), std::move(c)));
      }
      write_file(ver_out, [&](std::ostream& out) { write_score_table(out, outcomes); });
      if (!ver_hist.empty()) write_file(ver_hist, [&](std::ostream& out) { write_rank_histograms(out, outcomes); });
      write_score_table(std::cout, outcomes);
      return 0;
    }

    if (*run_cmd) {
      const GroupSpec groups = GroupSpec::parse(run.groups);
      const auto methods = parse_method_list(run_methods);
      const Dataset data = load_or_fail(run.path, groups);
      std::optional<Dataset> history;
      if (!run_history.empty()) history = load_or_fail(run_history, groups);
      run_cfg.calibration.optimizer.method = parse_optimizer(run_optimizer);
      const auto result = run_experiment(data, plan_for(data, run), methods, run_cfg, history ? &*history : nullptr);
      fs::create_directories(run_out);
      const fs::path dir(run_out);
      write_file((dir / "scores.tsv").string(), [&](std::ostream& out) { write_score_table(out, result.outcomes); });
      write_file((dir / "ranks.tsv").string(),
                 [&](std::ostream& out) { write_rank_histograms(out, result.outcomes); });
      std::vector<TimingColumn> columns;
      for (const auto& o : result.outcomes) {
        print_diagnostics(o.calibration);
        if (o.method != Method::Raw) columns.push_back({o.label, o.timing});
      }
      write_file((dir / "timing.tsv").string(), [&](std::ostream& out) { write_timing_table(out, columns); });
      write_score_table(std::cout, result.outcomes);
      return 0;
    }

    if (*bench_cmd) {
      const GroupSpec groups = GroupSpec::parse(bench.groups);
      const auto methods = parse_method_list(bench_methods);
      std::vector<OptimizerMethod> optimizers;
      if (bench_optimizer == "both") {
        optimizers = {OptimizerMethod::Simplex, OptimizerMethod::QuasiNewton};
      } else {
        optimizers = {parse_optimizer(bench_optimizer)};
      }
      const Dataset data = load_or_fail(bench.path, groups);
      WindowPlan plan = plan_for(data, bench);
      if (bench_days > 0 && plan.verification_dates.size() > static_cast<std::size_t>(bench_days)) {
        plan.verification_dates.resize(static_cast<std::size_t>(bench_days));
      }
      std::vector<TimingColumn> columns;
      for (const Method m : methods) {
        if (m == Method::Raw || m == Method::Copula) {
          throw ConfigError("bench times estimation for bivariate-emos and independent-emos only");
        }
        for (const auto opt : optimizers) {
          CalibrationConfig cfg;
          cfg.optimizer.method = opt;
          cfg.optimizer.max_evals = bench_max_evals;
          cfg.parallel = false;
          const auto result = rolling_calibrate(data, plan, m, cfg);
          print_diagnostics(result);
          const auto converged = std::count_if(result.models.begin(), result.models.end(),
                                               [](const DayModel& d) { return d.converged; });
          std::cerr << method_label(m) << " (" << optimizer_name(opt) << "): " << converged << "/"
                    << result.models.size() << " days converged\n";
          columns.push_back({method_label(m) + " (" + optimizer_name(opt) + ")", summarize_timings(result.timings)});
        }
      }
      if (bench_out.empty()) {
        write_timing_table(std::cout, columns);
      } else {
        write_file(bench_out, [&](std::ostream& out) { write_timing_table(out, columns); });
      }
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return 0;
}

// ivfalsify: command-line front end for falsification runs and simulation
// campaigns.
//
// Exit status: 0 completed and not rejected; 1 completed and rejected;
// 2 usage or data error.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ivf/ivf.hpp"

namespace {

struct DataOptions {
  std::string input;
  std::string z = "z";
  std::string d = "d";
  std::string y = "y";
  std::vector<std::string> covariates;
  std::optional<double> treat_above;
  std::vector<std::string> bins;
  std::string dichotomize = "none";
};

struct RunOptions {
  double alpha = 0.05;
  std::string method = "auto";
  std::optional<double> gamma;
  std::string format = "text";
  std::string mode = "gail-simon";
  std::string gs_zero_se = "correct";
  std::string gs_weights = "usable";
};

void add_data_flags(CLI::App* cmd, DataOptions& o, bool covariates) {
  cmd->add_option("-i,--input", o.input, "CSV file with a header row")->required()->check(CLI::ExistingFile);
  cmd->add_option("--z", o.z, "instrument column")->capture_default_str();
  cmd->add_option("--d", o.d, "treatment column")->capture_default_str();
  cmd->add_option("--y", o.y, "outcome column")->capture_default_str();
  if (covariates)
    cmd->add_option("--covariates", o.covariates, "covariate columns to cross-classify")->delimiter(',');
  cmd->add_option("--treat-above", o.treat_above, "binarize treatment as 1{d > value}");
  cmd->add_option("--bin", o.bins, "bin a numeric covariate: column=width (floor(x / width))");
  cmd->add_option("--dichotomize", o.dichotomize, "outcome preprocessing")
      ->check(CLI::IsMember({"none", "median"}))
      ->capture_default_str();
}

void add_run_flags(CLI::App* cmd, RunOptions& o, bool tests) {
  cmd->add_option("--alpha", o.alpha, "overall level")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  if (tests) {
    cmd->add_option("--method", o.method, "2x2 test: auto uses Wald when both arms have >= 200 units")
        ->check(CLI::IsMember({"auto", "wald", "boschloo", "berger-boos"}))
        ->capture_default_str();
    cmd->add_option("--gamma", o.gamma, "Berger-Boos confidence parameter (berger-boos only)");
  }
  cmd->add_option("--format", o.format, "report format")->check(CLI::IsMember({"text", "json"}))->capture_default_str();
}

ivf::CsvSchema schema_from(const DataOptions& o) {
  ivf::CsvSchema s;
  s.z = o.z;
  s.d = o.d;
  s.y = o.y;
  s.covariates = o.covariates;
  s.treatment_above = o.treat_above;
  for (const auto& b : o.bins) {
    const auto eq = b.find('=');
    if (eq == std::string::npos) throw ivf::ConfigError("--bin expects column=width, got '" + b + "'");
    try {
      s.bin_widths[b.substr(0, eq)] = std::stod(b.substr(eq + 1));
    } catch (const std::exception&) {
      throw ivf::ConfigError("--bin width is not a number in '" + b + "'");
    }
  }
  return s;
}

ivf::StratifiedCounts load(const DataOptions& o) {
  auto records = ivf::ingest_csv(o.input, schema_from(o));
  if (records.empty()) throw ivf::EstimationError("input has no data rows");
  if (o.dichotomize == "median") records = ivf::dichotomize_median(std::move(records));
  return ivf::tabulate(records);
}

ivf::TestOptions test_options(const RunOptions& o) {
  ivf::TestOptions t;
  t.method = ivf::io::method_from_string(o.method);
  if (o.gamma && t.method != ivf::MethodChoice::berger_boos)
    throw ivf::ConfigError("--gamma is only meaningful with --method berger-boos");
  t.gamma = o.gamma;
  return t;
}

int emit(const ivf::FalsifyReport& r, const std::string& format) {
  if (format == "json") std::cout << ivf::io::to_json(r).dump(2) << '\n';
  else std::cout << ivf::io::to_text(r);
  return r.overall_reject ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Falsification tests for the instrumental variable model"};
  app.require_subcommand(1);

  DataOptions uncond_data, cond_data, disc_data;
  RunOptions uncond_run, cond_run, disc_run;

  auto* uncond = app.add_subcommand("falsify-unconditional", "test the four binary instrumental inequalities");
  add_data_flags(uncond, uncond_data, false);
  add_run_flags(uncond, uncond_run, true);

  auto* cond = app.add_subcommand("falsify-conditional", "test the inequalities within covariate strata");
  add_data_flags(cond, cond_data, true);
  add_run_flags(cond, cond_run, true);
  cond->add_option("--mode", cond_run.mode, "gail-simon (alpha/4 each) or per-level (alpha/(2K) each)")
      ->check(CLI::IsMember({"gail-simon", "per-level"}))
      ->capture_default_str();
  cond->add_option("--gs-zero-se", cond_run.gs_zero_se, "Gail-Simon handling of zero-variance strata")
      ->check(CLI::IsMember({"correct", "skip", "infinite"}))
      ->capture_default_str();
  cond->add_option("--gs-weights", cond_run.gs_weights, "strata counted in the chi-bar-squared weights")
      ->check(CLI::IsMember({"usable", "all"}))
      ->capture_default_str();

  auto* disc = app.add_subcommand("falsify-discrete", "multi-level instrument and treatment");
  add_data_flags(disc, disc_data, true);
  add_run_flags(disc, disc_run, true);

  std::string config_path, log_path;
  std::string sim_format = "text";
  unsigned threads = ivf::sim::default_threads();
  auto* simulate = app.add_subcommand("simulate", "run Monte Carlo scenarios from a JSON config");
  simulate->add_option("-c,--config", config_path, "scenario file")->required()->check(CLI::ExistingFile);
  simulate->add_option("--log", log_path, "CSV log to append results to");
  simulate->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--format", sim_format, "stdout format")->check(CLI::IsMember({"text", "json"}))->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (uncond->parsed()) {
      const auto s = load(uncond_data);
      const auto t = s.collapsed();
      if (!t.is_binary()) throw ivf::ConfigError("instrument or treatment has more than two levels; use falsify-discrete");
      return emit(ivf::test_unconditional(t, uncond_run.alpha, test_options(uncond_run)), uncond_run.format);
    }
    if (cond->parsed()) {
      const auto s = load(cond_data);
      if (!s.strata.begin()->second.is_binary())
        throw ivf::ConfigError("instrument or treatment has more than two levels; use falsify-discrete");
      if (cond_run.mode == "per-level")
        return emit(ivf::test_conditional_perlevel(s, cond_run.alpha, test_options(cond_run)), cond_run.format);
      if (cond_run.method != "auto" || cond_run.gamma)
        throw ivf::ConfigError("--method/--gamma apply to --mode per-level only");
      ivf::GsOptions gs;
      gs.zero_se = cond_run.gs_zero_se == "correct" ? ivf::ZeroSe::correct
                   : cond_run.gs_zero_se == "skip"  ? ivf::ZeroSe::skip
                                                    : ivf::ZeroSe::infinite;
      gs.weights = cond_run.gs_weights == "all" ? ivf::WeightBasis::all : ivf::WeightBasis::usable;
      return emit(ivf::test_conditional_gs(s, cond_run.alpha, gs), cond_run.format);
    }
    if (disc->parsed()) {
      const auto s = load(disc_data);
      if (disc_data.covariates.empty())
        return emit(ivf::test_discrete(s.collapsed(), disc_run.alpha, test_options(disc_run)), disc_run.format);
      return emit(ivf::test_conditional_discrete(s, disc_run.alpha, test_options(disc_run)), disc_run.format);
    }
    if (simulate->parsed()) {
      const auto scenarios = ivf::io::load_scenarios(config_path);
      std::vector<std::string> rows;
      nlohmann::json out = nlohmann::json::array();
      for (const auto& sc : scenarios) {
        const auto r = ivf::sim::mc_rejection_rate(sc.spec, sc.n, sc.reps, sc.seed, sc.test, threads);
        rows.push_back(ivf::io::sim_log_row(sc, r));
        out.push_back({{"scenario_id", sc.id}, {"n", sc.n}, {"reps", r.reps}, {"rejections", r.rejections},
                       {"unevaluable", r.unevaluable}, {"rate", r.rate}, {"mc_se", r.mc_se}, {"seed", r.seed}});
      }
      if (!log_path.empty()) ivf::io::append_sim_log(log_path, rows);
      if (sim_format == "json") {
        std::cout << nlohmann::json{{"schema_version", ivf::io::kSchemaVersion}, {"results", out}}.dump(2) << '\n';
      } else {
        std::cout << ivf::io::kSimLogHeader << '\n';
        for (const auto& r : rows) std::cout << r << '\n';
      }
      return 0;
    }
  } catch (const ivf::Error& e) {
    std::cerr << "ivfalsify: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ivfalsify: unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}

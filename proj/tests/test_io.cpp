#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ivf/io.hpp"

using namespace ivf;

namespace {

TestOptions wald() { return {MethodChoice::wald, std::nullopt}; }

void expect_same(const FalsifyReport& a, const FalsifyReport& b) {
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.alpha, b.alpha);
  EXPECT_EQ(a.overall_reject, b.overall_reject);
  ASSERT_EQ(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto &x = a.entries[i], &y = b.entries[i];
    EXPECT_EQ(x.id, y.id);
    EXPECT_EQ(x.stratum, y.stratum);
    EXPECT_EQ(x.level, y.level);
    EXPECT_EQ(x.p_value, y.p_value);
    EXPECT_EQ(x.reject, y.reject);
    EXPECT_EQ(x.evaluable, y.evaluable);
    EXPECT_EQ(x.method, y.method);
    EXPECT_EQ(x.strata_used, y.strata_used);
  }
  ASSERT_EQ(a.acde_signs.size(), b.acde_signs.size());
  for (std::size_t i = 0; i < a.acde_signs.size(); ++i) {
    EXPECT_EQ(a.acde_signs[i].d, b.acde_signs[i].d);
    EXPECT_EQ(a.acde_signs[i].sign, b.acde_signs[i].sign);
    EXPECT_EQ(a.acde_signs[i].stratum, b.acde_signs[i].stratum);
  }
  EXPECT_EQ(a.metadata.strata, b.metadata.strata);
  EXPECT_EQ(a.metadata.dropped_strata, b.metadata.dropped_strata);
  EXPECT_EQ(a.metadata.notes, b.metadata.notes);
  EXPECT_EQ(a.metadata.gamma, b.metadata.gamma);
}

FalsifyReport rejected_report() {
  const auto spec = sim::boundary_spec({sim::RegimeKind::exterior, {0, 1}});
  return test_unconditional(sim::sample_arms(spec, 2000, 2000, 4), 0.05, wald());
}

}  // namespace

TEST(Json, RoundTripEveryModel) {
  const auto spec = sim::boundary_spec({sim::RegimeKind::exterior, {1, 1}});
  StratifiedCounts s;
  s.strata.emplace(StratumKey{"a", "x"}, sim::sample_arms(spec, 300, 300, 1));
  s.strata.emplace(StratumKey{"b", "x"}, sim::sample_arms(sim::boundary_spec({}), 300, 300, 2));
  s.strata.emplace(StratumKey{"c", "y"}, JointCounts::binary({3, 3, 3, 3, 0, 0, 0, 0}));
  const std::vector<FalsifyReport> reports{
      rejected_report(),
      test_unconditional(s.collapsed(), 0.05, {MethodChoice::berger_boos, 0.001}),
      test_conditional_gs(s, 0.05, {ZeroSe::skip, WeightBasis::all}),
      test_conditional_perlevel(s, 0.05, wald()),
      test_discrete(s.collapsed(), 0.05, wald()),
      test_conditional_discrete(s, 0.05, wald()),
  };
  for (const auto& r : reports) {
    const auto j = io::to_json(r);
    EXPECT_EQ(j.at("schema_version"), io::kSchemaVersion);
    expect_same(r, io::report_from_json(nlohmann::json::parse(j.dump())));
  }
}

TEST(Json, InfiniteStatisticIsNull) {
  FalsifyReport r;
  ReportEntry e;
  e.id = IneqIndex{0, 1};
  e.statistic = std::numeric_limits<double>::infinity();
  e.p_value = 0.0;
  e.reject = true;
  r.entries.push_back(e);
  r.overall_reject = true;
  const auto j = io::to_json(r);
  EXPECT_TRUE(j["entries"][0]["statistic"].is_null());
  EXPECT_TRUE(std::isinf(io::report_from_json(j).entries[0].statistic));
}

TEST(Json, WrongSchemaVersion) {
  auto j = io::to_json(rejected_report());
  j["schema_version"] = 99;
  EXPECT_THROW(io::report_from_json(j), ConfigError);
}

TEST(Text, TableLayoutAndDecisionsAgreeWithJson) {
  const auto r = rejected_report();
  const auto text = io::to_text(r);
  const auto j = io::to_json(r);
  EXPECT_NE(text.find("H00   H01   H10   H11  subgroups"), std::string::npos);
  EXPECT_NE(text.find("rejected H01 => ACDE(0) positive"), std::string::npos);
  EXPECT_NE(text.find("model REJECTED"), std::string::npos);
  EXPECT_EQ(text.find(io::kNonRejectionFooter), std::string::npos);
  for (const auto& e : j["entries"]) {
    const auto shown = io::format_p(e["p_value"].get<double>());
    EXPECT_NE(text.find(shown), std::string::npos);
  }
}

TEST(Text, NonRejectionFooter) {
  StratifiedCounts s;
  for (int k = 0; k < 3; ++k)
    s.strata.emplace(StratumKey{std::to_string(k)}, JointCounts::binary({25, 25, 25, 25, 25, 25, 25, 25}));
  const auto text = io::to_text(test_conditional_gs(s, 0.05));
  EXPECT_NE(text.find("p-value  1.000 1.000 1.000 1.000  3"), std::string::npos);
  EXPECT_NE(text.find(io::kNonRejectionFooter), std::string::npos);
}

TEST(Text, FormatP) {
  EXPECT_EQ(io::format_p(0.0104), "0.010");
  EXPECT_EQ(io::format_p(1.0 + 1e-12), "1.000");
  EXPECT_EQ(io::format_p(std::nullopt), "  n/a");
}

TEST(Scenarios, ParseRegimesAndSpecs) {
  const auto j = nlohmann::json::parse(R"({
    "schema_version": 1,
    "scenarios": [
      {"id": "a", "regime": "exterior_10", "n": 100, "reps": 10, "seed": 3},
      {"id": "b", "spec": {"variant": "margins", "p1": [0.25,0.25,0.25,0.25], "p0": [0.25,0.25,0.25,0.25]},
       "n": 50, "reps": 5, "seed": 4, "test": {"model": "unconditional_binary", "method": "berger-boos", "gamma": 0.001}},
      {"id": "c", "spec": {"variant": "latent", "type_probs": [1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0], "pz": 0.4},
       "n": 50, "reps": 5, "seed": 5}
    ]})");
  const auto sc = io::scenarios_from_json(j);
  ASSERT_EQ(sc.size(), 3u);
  EXPECT_NEAR(sim::zeta_of_dgp(sc[0].spec).u10, 1.3, 1e-12);
  EXPECT_EQ(sc[1].test.tests.method, MethodChoice::berger_boos);
  EXPECT_EQ(sc[1].test.tests.gamma, 0.001);
  EXPECT_EQ(sim::pz_of(sc[2].spec), 0.4);
}

TEST(Scenarios, Errors) {
  EXPECT_THROW(io::scenarios_from_json(nlohmann::json::parse(R"({"schema_version": 2, "scenarios": []})")), ConfigError);
  EXPECT_THROW(io::regime_from_string("exterior_2"), ConfigError);
  EXPECT_THROW(io::method_from_string("fisher"), ConfigError);
  EXPECT_THROW(io::load_scenarios("/nonexistent/file.json"), ConfigError);
}

TEST(Scenarios, ShippedConfigLoads) {
  const auto sc = io::load_scenarios(IVF_SOURCE_DIR "/config/size_regimes.json");
  ASSERT_EQ(sc.size(), 3u);
  for (const auto& s : sc) {
    EXPECT_EQ(s.n, 2000);
    EXPECT_EQ(s.reps, 5000);
    EXPECT_EQ(s.test.tests.method, MethodChoice::wald);
  }
}

TEST(SimLog, HeaderWrittenOnce) {
  const auto path = (std::filesystem::temp_directory_path() / "ivf_simlog_test.csv").string();
  std::remove(path.c_str());
  io::Scenario sc;
  sc.id = "x";
  sim::McResult r;
  r.reps = 10;
  r.rejections = 1;
  r.rate = 0.1;
  io::append_sim_log(path, {io::sim_log_row(sc, r)});
  io::append_sim_log(path, {io::sim_log_row(sc, r)});
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], io::kSimLogHeader);
  EXPECT_EQ(lines[1].substr(0, 2), "x,");
  std::remove(path.c_str());
}

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivf/errors.hpp"
#include "ivf/falsify.hpp"
#include "ivf/simlab.hpp"

// Serialization of reports, simulation scenarios and simulation logs.

namespace ivf::io {

inline constexpr int kSchemaVersion = 1;

using nlohmann::json;

inline const char* kNonRejectionFooter =
    "Note: not rejecting these inequalities only means the data are compatible with the instrumental "
    "variable model. It does not establish that Z is a valid instrument; that still rests on "
    "subject-matter arguments about measured confounders and the absence of direct effects of Z on Y.";

inline const char* kAcdeCaveat = "ACDE sign conclusions assume Z is randomized (given the covariates).";

namespace detail {

inline json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline double number_or(const json& j, double fallback) { return j.is_number() ? j.get<double>() : fallback; }

}  // namespace detail

// ---------------------------------------------------------------------------
// FalsifyReport <-> JSON

inline json to_json(const FalsifyReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    json j;
    j["id"] = to_string(e.id);
    if (const auto* b = std::get_if<IneqIndex>(&e.id)) {
      j["d"] = b->d;
      j["y"] = b->y;
    } else {
      const auto& p = std::get<PairIndex>(e.id);
      j["z1"] = p.z1;
      j["z2"] = p.z2;
      j["d"] = p.d;
    }
    j["stratum"] = e.stratum ? json(*e.stratum) : json(nullptr);
    j["level"] = e.level;
    j["p_value"] = e.p_value ? detail::finite_or_null(*e.p_value) : json(nullptr);
    j["reject"] = e.reject;
    j["evaluable"] = e.evaluable;
    j["method"] = e.method;
    j["statistic"] = detail::finite_or_null(e.statistic);
    if (e.strata_used) j["strata_used"] = *e.strata_used;
    entries.push_back(std::move(j));
  }
  json signs = json::array();
  for (const auto& a : r.acde_signs)
    signs.push_back({{"d", a.d}, {"sign", to_string(a.sign)}, {"stratum", a.stratum ? json(*a.stratum) : json(nullptr)}});
  json md;
  md["method"] = r.metadata.method;
  md["gamma"] = r.metadata.gamma ? json(*r.metadata.gamma) : json(nullptr);
  md["strata"] = r.metadata.strata;
  md["dropped_strata"] = r.metadata.dropped_strata;
  md["notes"] = r.metadata.notes;
  if (r.metadata.gs) md["gail_simon"] = {{"zero_se", to_string(r.metadata.gs->zero_se)}, {"weights", to_string(r.metadata.gs->weights)}};
  return {{"schema_version", kSchemaVersion}, {"model", to_string(r.model)}, {"alpha", r.alpha},
          {"entries", entries},           {"overall_reject", r.overall_reject}, {"acde_signs", signs},
          {"metadata", md}};
}

inline Model model_from_string(const std::string& s) {
  for (auto m : {Model::unconditional_binary, Model::conditional_binary_gs, Model::conditional_binary_perlevel,
                 Model::discrete, Model::conditional_discrete})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown model '" + s + "'");
}

inline AcdeSign sign_from_string(const std::string& s) {
  for (auto a : {AcdeSign::positive, AcdeSign::negative, AcdeSign::undetermined})
    if (to_string(a) == s) return a;
  throw ConfigError("unknown ACDE sign '" + s + "'");
}

inline FalsifyReport report_from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw ConfigError("unsupported report schema_version");
  FalsifyReport r;
  r.model = model_from_string(j.at("model").get<std::string>());
  r.alpha = j.at("alpha").get<double>();
  r.overall_reject = j.at("overall_reject").get<bool>();
  for (const auto& e : j.at("entries")) {
    ReportEntry x;
    if (e.contains("z1")) x.id = PairIndex{e.at("z1").get<int>(), e.at("z2").get<int>(), e.at("d").get<int>()};
    else x.id = IneqIndex{e.at("d").get<int>(), e.at("y").get<int>()};
    if (!e.at("stratum").is_null()) x.stratum = e.at("stratum").get<StratumKey>();
    x.level = e.at("level").get<double>();
    if (!e.at("p_value").is_null()) x.p_value = e.at("p_value").get<double>();
    x.reject = e.at("reject").get<bool>();
    x.evaluable = e.at("evaluable").get<bool>();
    x.method = e.at("method").get<std::string>();
    x.statistic = detail::number_or(e.at("statistic"), std::numeric_limits<double>::infinity());
    if (e.contains("strata_used")) x.strata_used = e.at("strata_used").get<int>();
    r.entries.push_back(std::move(x));
  }
  for (const auto& a : j.at("acde_signs")) {
    AcdeConclusion c;
    c.d = a.at("d").get<int>();
    c.sign = sign_from_string(a.at("sign").get<std::string>());
    if (!a.at("stratum").is_null()) c.stratum = a.at("stratum").get<StratumKey>();
    r.acde_signs.push_back(std::move(c));
  }
  const auto& md = j.at("metadata");
  r.metadata.method = md.at("method").get<std::string>();
  if (!md.at("gamma").is_null()) r.metadata.gamma = md.at("gamma").get<double>();
  r.metadata.strata = md.at("strata").get<std::size_t>();
  r.metadata.dropped_strata = md.at("dropped_strata").get<std::vector<std::string>>();
  r.metadata.notes = md.at("notes").get<std::vector<std::string>>();
  if (md.contains("gail_simon")) {
    GsOptions g;
    const auto z = md["gail_simon"].at("zero_se").get<std::string>();
    g.zero_se = z == "correct" ? ZeroSe::correct : (z == "skip" ? ZeroSe::skip : ZeroSe::infinite);
    g.weights = md["gail_simon"].at("weights").get<std::string>() == "all" ? WeightBasis::all : WeightBasis::usable;
    r.metadata.gs = g;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Text report

/// Three decimals, with display clamped to [0, 1].
inline std::string format_p(std::optional<double> p) {
  if (!p) return "  n/a";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.3f", std::clamp(*p, 0.0, 1.0));
  return buf;
}

namespace detail {

inline std::string level_str(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

inline bool is_four_column(const FalsifyReport& r) {
  return r.model == Model::unconditional_binary || r.model == Model::conditional_binary_gs;
}

}  // namespace detail

inline std::string to_text(const FalsifyReport& r) {
  std::ostringstream os;
  os << "model: " << to_string(r.model) << "   alpha: " << detail::level_str(r.alpha);
  if (!r.entries.empty()) os << "   per-test level: " << detail::level_str(r.entries.front().level);
  os << "\nmethod: " << r.metadata.method;
  if (r.metadata.gamma) os << " (gamma " << detail::level_str(*r.metadata.gamma) << ")";
  if (r.metadata.gs)
    os << " (zero-se: " << to_string(r.metadata.gs->zero_se) << ", weights: " << to_string(r.metadata.gs->weights) << ")";
  os << "\n\n";

  if (detail::is_four_column(r)) {
    os << "         ";
    for (const auto& e : r.entries) os << std::setw(5) << to_string(e.id) << ' ';
    os << " subgroups\n";
    os << "p-value  ";
    for (const auto& e : r.entries) os << format_p(e.p_value) << ' ';
    os << ' ' << r.metadata.strata << '\n';
    os << "reject   ";
    for (const auto& e : r.entries) os << std::setw(5) << (e.evaluable ? (e.reject ? "yes" : "no") : "n/a") << ' ';
    os << '\n';
  } else {
    os << std::left << std::setw(24) << "stratum" << std::setw(14) << "inequality" << std::setw(10) << "method"
       << std::setw(12) << "level" << std::setw(9) << "p-value" << "reject\n";
    for (const auto& e : r.entries) {
      os << std::setw(24) << (e.stratum ? format_key(*e.stratum) : "(all)") << std::setw(14) << to_string(e.id)
         << std::setw(10) << (e.method.empty() ? "-" : e.method) << std::setw(12) << detail::level_str(e.level)
         << std::setw(9) << format_p(e.p_value) << (e.evaluable ? (e.reject ? "yes" : "no") : "n/a") << '\n';
    }
    os << std::right << "subgroups: " << r.metadata.strata << '\n';
  }

  for (const auto& e : r.entries) {
    if (!e.reject) continue;
    if (const auto* b = std::get_if<IneqIndex>(&e.id)) {
      os << "rejected " << to_string(e.id);
      if (e.stratum) os << " in stratum " << format_key(*e.stratum);
      if (r.model == Model::conditional_binary_gs)
        os << " => ACDE(" << b->d << ") " << (b->y == 1 ? "positive" : "negative") << " in some stratum\n";
      else os << " => ACDE(" << b->d << ") " << (b->y == 1 ? "positive" : "negative") << '\n';
    } else {
      os << "rejected " << to_string(e.id);
      if (e.stratum) os << " in stratum " << format_key(*e.stratum);
      os << '\n';
    }
  }
  if (std::any_of(r.entries.begin(), r.entries.end(), [](const ReportEntry& e) { return e.reject; }))
    os << kAcdeCaveat << '\n';
  if (!r.metadata.dropped_strata.empty())
    os << "strata with an empty instrument arm: " << r.metadata.dropped_strata.size() << '\n';
  for (const auto& n : r.metadata.notes) os << "note: " << n << '\n';
  os << "\noverall: " << (r.overall_reject ? "model REJECTED" : "model not rejected") << '\n';
  if (!r.overall_reject) os << '\n' << kNonRejectionFooter << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Simulation scenarios

struct Scenario {
  std::string id;
  sim::DgpSpec spec;
  std::int64_t n = 1000;
  std::int64_t reps = 1000;
  std::uint64_t seed = 1;
  Procedure test;
};

inline sim::Regime regime_from_string(const std::string& s) {
  using sim::RegimeKind;
  if (s == "two_equalities") return {RegimeKind::two_equalities, {}};
  if (s == "one_equality") return {RegimeKind::one_equality, {}};
  if (s == "interior") return {RegimeKind::interior, {}};
  if (s.size() == 11 && s.rfind("exterior_", 0) == 0 && (s[9] == '0' || s[9] == '1') && (s[10] == '0' || s[10] == '1'))
    return {RegimeKind::exterior, {s[9] - '0', s[10] - '0'}};
  throw ConfigError("unknown regime '" + s + "'");
}

inline MethodChoice method_from_string(const std::string& s) {
  if (s == "auto") return MethodChoice::automatic;
  if (s == "wald") return MethodChoice::wald;
  if (s == "boschloo") return MethodChoice::boschloo;
  if (s == "berger-boos" || s == "berger_boos") return MethodChoice::berger_boos;
  throw ConfigError("unknown method '" + s + "'");
}

inline sim::DgpSpec spec_from_json(const json& j) {
  const auto variant = j.at("variant").get<std::string>();
  if (variant == "margins") {
    sim::MarginsSpec m;
    m.p1 = j.at("p1").get<sim::ArmDistribution>();
    m.p0 = j.at("p0").get<sim::ArmDistribution>();
    m.pz = j.value("pz", 0.5);
    return m;
  }
  if (variant == "latent") {
    sim::LatentSpec l;
    l.type_probs = j.at("type_probs").get<std::array<double, 16>>();
    l.pz = j.value("pz", 0.5);
    return l;
  }
  throw ConfigError("unknown spec variant '" + variant + "'");
}

inline std::vector<Scenario> scenarios_from_json(const json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) throw ConfigError("unsupported scenario schema_version");
  std::vector<Scenario> out;
  std::size_t idx = 0;
  for (const auto& s : j.at("scenarios")) {
    Scenario sc;
    sc.id = s.value("id", "scenario" + std::to_string(idx++));
    if (s.contains("regime")) {
      if (s.contains("spec")) throw ConfigError("scenario '" + sc.id + "' gives both regime and spec");
      sc.spec = sim::boundary_spec(regime_from_string(s.at("regime").get<std::string>()));
    } else {
      sc.spec = spec_from_json(s.at("spec"));
    }
    sim::validate(sc.spec);
    sc.n = s.at("n").get<std::int64_t>();
    sc.reps = s.at("reps").get<std::int64_t>();
    sc.seed = s.at("seed").get<std::uint64_t>();
    if (sc.n < 1 || sc.reps < 1) throw ConfigError("scenario '" + sc.id + "': n and reps must be positive");
    const auto t = s.value("test", json::object());
    sc.test.model = model_from_string(t.value("model", std::string("unconditional_binary")));
    sc.test.alpha = t.value("alpha", 0.05);
    sc.test.tests.method = method_from_string(t.value("method", std::string("wald")));
    if (t.contains("gamma")) sc.test.tests.gamma = t.at("gamma").get<double>();
    out.push_back(std::move(sc));
  }
  return out;
}

inline std::vector<Scenario> load_scenarios(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  return scenarios_from_json(j);
}

inline const char* kSimLogHeader = "scenario_id,n,reps,rate,mc_se,seed,schema_version";

inline std::string sim_log_row(const Scenario& s, const sim::McResult& r) {
  std::ostringstream os;
  os << s.id << ',' << s.n << ',' << r.reps << ',' << std::setprecision(10) << r.rate << ',' << r.mc_se << ','
     << r.seed << ',' << kSchemaVersion;
  return os.str();
}

/// Appends rows to a CSV log, writing the header when the file is new or empty.
inline void append_sim_log(const std::string& path, const std::vector<std::string>& rows) {
  bool fresh = true;
  {
    std::ifstream probe(path, std::ios::binary | std::ios::ate);
    if (probe && probe.tellg() > 0) fresh = false;
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot write simulation log '" + path + "'");
  if (fresh) out << kSimLogHeader << '\n';
  for (const auto& r : rows) out << r << '\n';
}

}  // namespace ivf::io

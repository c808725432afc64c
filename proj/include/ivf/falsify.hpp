#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ivf/errors.hpp"
#include "ivf/gail_simon.hpp"
#include "ivf/ineq_core.hpp"
#include "ivf/tabulate.hpp"
#include "ivf/tests2x2.hpp"

// Multiplicity procedures for falsifying the instrumental variable model.
//
// Per-test levels:
//   unconditional binary       alpha / 2          (at most two of the four
//                                                 inequalities can be active)
//   conditional, Gail-Simon    alpha / 4          (Bonferroni over the four)
//   conditional, per level     alpha / (2K)       (alpha / 2 rule in each of K strata)
//   discrete instrument        alpha / (L(L-1))   (at most L(L-1) active)
//   conditional discrete       alpha / (K L(L-1) M)
// A hypothesis is rejected when p <= level.

namespace ivf {

enum class Model {
  unconditional_binary,
  conditional_binary_gs,
  conditional_binary_perlevel,
  discrete,
  conditional_discrete,
};

inline std::string to_string(Model m) {
  switch (m) {
    case Model::unconditional_binary: return "unconditional_binary";
    case Model::conditional_binary_gs: return "conditional_binary_gs";
    case Model::conditional_binary_perlevel: return "conditional_binary_perlevel";
    case Model::discrete: return "discrete";
    default: return "conditional_discrete";
  }
}

enum class MethodChoice { automatic, wald, boschloo, berger_boos };

inline std::string to_string(MethodChoice m) {
  switch (m) {
    case MethodChoice::automatic: return "auto";
    case MethodChoice::wald: return "wald";
    case MethodChoice::boschloo: return "boschloo";
    default: return "berger_boos";
  }
}

struct TestOptions {
  MethodChoice method = MethodChoice::automatic;
  std::optional<double> gamma;  // required for berger_boos
  // automatic: Wald when both arms have at least this many units, else Boschloo
  std::int64_t wald_min_arm = 200;
};

/// Inequality p(Y=0, D=d | z1) + p(Y=1, D=d | z2) <= 1 of a discrete
/// instrument model.
struct PairIndex {
  int z1 = 0;
  int z2 = 1;
  int d = 0;
  friend auto operator<=>(const PairIndex&, const PairIndex&) = default;
};

inline std::string to_string(PairIndex p) {
  return "z" + std::to_string(p.z1) + ",z" + std::to_string(p.z2) + ",d" + std::to_string(p.d);
}

using IneqId = std::variant<IneqIndex, PairIndex>;

inline std::string to_string(const IneqId& id) {
  return std::visit([](const auto& i) { return to_string(i); }, id);
}

struct ReportEntry {
  IneqId id;
  std::optional<StratumKey> stratum;
  double level = 0.0;
  std::optional<double> p_value;  // nullopt when unevaluable
  bool reject = false;
  bool evaluable = true;
  std::string method;
  double statistic = 0.0;
  std::optional<int> strata_used;  // Gail-Simon entries
};

enum class AcdeSign { positive, negative, undetermined };

inline std::string to_string(AcdeSign s) {
  switch (s) {
    case AcdeSign::positive: return "positive";
    case AcdeSign::negative: return "negative";
    default: return "undetermined";
  }
}

struct AcdeConclusion {
  int d = 0;
  AcdeSign sign = AcdeSign::undetermined;
  std::optional<StratumKey> stratum;
};

struct ReportMetadata {
  std::string method;
  std::optional<double> gamma;
  std::size_t strata = 1;
  std::vector<std::string> dropped_strata;
  std::vector<std::string> notes;
  std::optional<GsOptions> gs;
};

struct FalsifyReport {
  Model model = Model::unconditional_binary;
  double alpha = 0.05;
  std::vector<ReportEntry> entries;
  bool overall_reject = false;
  std::vector<AcdeConclusion> acde_signs;
  ReportMetadata metadata;
};

inline double theorem1_level(double alpha) { return alpha / 2.0; }
inline double gs_level(double alpha) { return alpha / 4.0; }
inline double perlevel_level(double alpha, std::size_t strata) { return alpha / (2.0 * static_cast<double>(strata)); }
inline double discrete_level(double alpha, int instrument_levels) {
  return alpha / (static_cast<double>(instrument_levels) * (instrument_levels - 1));
}
inline double conditional_discrete_level(double alpha, std::size_t strata, int instrument_levels,
                                         int treatment_levels) {
  return alpha / (static_cast<double>(strata) * instrument_levels * (instrument_levels - 1) * treatment_levels);
}

namespace detail {

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
}

inline void check_options(const TestOptions& o, double level) {
  if (o.method == MethodChoice::berger_boos) {
    if (!o.gamma) throw ConfigError("berger_boos needs gamma");
    if (!(*o.gamma > 0.0) || *o.gamma >= level)
      throw ConfigError("berger_boos gamma must lie in (0, per-test level " + std::to_string(level) + ")");
  }
}

inline TestMethod resolve(const TestOptions& o, const TwoByTwo& t) {
  switch (o.method) {
    case MethodChoice::wald: return TestMethod::wald;
    case MethodChoice::boschloo: return TestMethod::boschloo;
    case MethodChoice::berger_boos: return TestMethod::berger_boos;
    default: return std::min(t.n1, t.n0) >= o.wald_min_arm ? TestMethod::wald : TestMethod::boschloo;
  }
}

inline ReportEntry test_entry(const TwoByTwo& t, IneqId id, double level, const TestOptions& o) {
  const auto m = resolve(o, t);
  const auto r = run_test(t, m, o.gamma.value_or(0.0));
  ReportEntry e;
  e.id = id;
  e.level = level;
  e.p_value = r.p_value;
  e.reject = r.p_value <= level;
  e.method = to_string(m);
  e.statistic = r.statistic;
  return e;
}

inline ReportMetadata metadata_for(const TestOptions& o) {
  ReportMetadata md;
  md.method = to_string(o.method);
  if (o.method == MethodChoice::berger_boos) md.gamma = o.gamma;
  return md;
}

// The four binary inequalities of one table at a common level.
inline std::vector<ReportEntry> binary_entries(const JointCounts& t, double level, const TestOptions& o,
                                               const std::optional<StratumKey>& stratum) {
  std::vector<ReportEntry> out;
  for (auto i : kBinaryInequalities) {
    auto e = test_entry(q_table(t, i), i, level, o);
    e.stratum = stratum;
    out.push_back(std::move(e));
  }
  return out;
}

// Rejecting (d, 1) implies ACDE(d) > 0; rejecting (d, 0) implies ACDE(d) < 0.
inline AcdeSign implied_sign(const std::vector<ReportEntry>& entries, int d,
                             const std::optional<StratumKey>& stratum) {
  bool pos = false, neg = false;
  for (const auto& e : entries) {
    if (!e.reject || e.stratum != stratum) continue;
    const auto* i = std::get_if<IneqIndex>(&e.id);
    if (!i || i->d != d) continue;
    (i->y == 1 ? pos : neg) = true;
  }
  if (pos && !neg) return AcdeSign::positive;
  if (neg && !pos) return AcdeSign::negative;
  return AcdeSign::undetermined;
}

inline bool any_reject(const std::vector<ReportEntry>& entries) {
  return std::any_of(entries.begin(), entries.end(), [](const ReportEntry& e) { return e.reject; });
}

// The higher instrument level of the pair plays the Z=1 arm, with the
// outcome role chosen to match; with L = 2 this reproduces q_table exactly.
inline TwoByTwo pair_table(const JointCounts& t, PairIndex p) {
  if (p.z2 > p.z1) return q_table_between(t, p.z2, p.z1, p.d, 1);
  return q_table_between(t, p.z1, p.z2, p.d, 0);
}

inline std::vector<ReportEntry> discrete_entries(const JointCounts& t, double level, const TestOptions& o,
                                                 const std::optional<StratumKey>& stratum,
                                                 std::vector<std::string>& notes) {
  std::vector<ReportEntry> out;
  const int levels = t.instrument_levels();
  for (int z1 = 0; z1 < levels; ++z1)
    for (int z2 = 0; z2 < levels; ++z2) {
      if (z1 == z2) continue;
      for (int d = 0; d < t.treatment_levels(); ++d) {
        const PairIndex p{z1, z2, d};
        if (t.arm_total(z1) == 0 || t.arm_total(z2) == 0) {
          ReportEntry e;
          e.id = p;
          e.stratum = stratum;
          e.level = level;
          e.evaluable = false;
          out.push_back(std::move(e));
          continue;
        }
        auto e = test_entry(pair_table(t, p), p, level, o);
        e.stratum = stratum;
        out.push_back(std::move(e));
      }
    }
  for (int z = 0; z < levels; ++z)
    if (t.arm_total(z) == 0)
      notes.push_back("instrument level " + std::to_string(z) + (stratum ? " in stratum " + format_key(*stratum) : "") +
                      " is empty; its pairs were not tested");
  return out;
}

}  // namespace detail

/// All four binary inequalities, each at alpha / 2; rejection of any one
/// rejects the model.
inline FalsifyReport test_unconditional(const JointCounts& table, double alpha, const TestOptions& opts = {}) {
  detail::check_alpha(alpha);
  if (!table.is_binary()) throw DomainError("test_unconditional needs a binary table; use test_discrete");
  const double level = theorem1_level(alpha);
  detail::check_options(opts, level);
  if (table.arm_total(0) == 0 || table.arm_total(1) == 0) throw EstimationError("an instrument arm is empty");
  FalsifyReport r;
  r.model = Model::unconditional_binary;
  r.alpha = alpha;
  r.metadata = detail::metadata_for(opts);
  r.entries = detail::binary_entries(table, level, opts, std::nullopt);
  r.overall_reject = detail::any_reject(r.entries);
  for (int d = 0; d < 2; ++d) r.acde_signs.push_back({d, detail::implied_sign(r.entries, d, std::nullopt), std::nullopt});
  return r;
}

/// Gail-Simon test of each of the four conditional hypotheses at alpha / 4.
inline FalsifyReport test_conditional_gs(const StratifiedCounts& s, double alpha, const GsOptions& gs = {}) {
  detail::check_alpha(alpha);
  if (s.strata.empty()) throw EstimationError("no strata");
  const double level = gs_level(alpha);
  FalsifyReport r;
  r.model = Model::conditional_binary_gs;
  r.alpha = alpha;
  r.metadata.method = "gail_simon";
  r.metadata.strata = s.stratum_count();
  r.metadata.gs = gs;
  std::size_t corrected = 0;
  std::size_t skipped = 0;
  for (auto i : kBinaryInequalities) {
    const auto deltas = stratum_deltas(s, i.d, i.y);
    ReportEntry e;
    e.id = i;
    e.level = level;
    e.method = "gail_simon";
    const bool any_usable = std::any_of(deltas.begin(), deltas.end(), [](const StratumDelta& x) { return x.usable; });
    if (!any_usable) {
      e.evaluable = false;
      r.entries.push_back(std::move(e));
      continue;
    }
    const auto g = gs_test(deltas, gs);
    e.p_value = g.p_value;
    e.reject = g.p_value <= level;
    e.statistic = g.q_plus;
    e.strata_used = g.k_used;
    corrected += g.corrected.size();
    skipped += g.skipped.size();
    if (r.metadata.dropped_strata.empty())
      for (const auto& k : g.dropped) r.metadata.dropped_strata.push_back(format_key(k));
    r.entries.push_back(std::move(e));
  }
  if (corrected) r.metadata.notes.push_back(std::to_string(corrected) + " stratum tests used the 0.5 cell correction for se");
  if (skipped) r.metadata.notes.push_back(std::to_string(skipped) + " stratum tests had zero se and were left out of Q+");
  r.overall_reject = detail::any_reject(r.entries);
  return r;
}

/// The alpha / 2 procedure inside every stratum at alpha / (2K).
inline FalsifyReport test_conditional_perlevel(const StratifiedCounts& s, double alpha, const TestOptions& opts = {}) {
  detail::check_alpha(alpha);
  if (s.strata.empty()) throw EstimationError("no strata");
  const double level = perlevel_level(alpha, s.stratum_count());
  detail::check_options(opts, level);
  FalsifyReport r;
  r.model = Model::conditional_binary_perlevel;
  r.alpha = alpha;
  r.metadata = detail::metadata_for(opts);
  r.metadata.strata = s.stratum_count();
  for (const auto& [key, t] : s.strata) {
    if (!t.is_binary()) throw DomainError("per-level test needs binary tables");
    if (t.arm_total(0) == 0 || t.arm_total(1) == 0) {
      r.metadata.dropped_strata.push_back(format_key(key));
      continue;
    }
    auto es = detail::binary_entries(t, level, opts, key);
    for (int d = 0; d < 2; ++d)
      if (auto sign = detail::implied_sign(es, d, key); sign != AcdeSign::undetermined) r.acde_signs.push_back({d, sign, key});
    r.entries.insert(r.entries.end(), es.begin(), es.end());
  }
  r.overall_reject = detail::any_reject(r.entries);
  return r;
}

/// Discrete instrument with L levels and M treatment levels: every ordered
/// pair (z1, z2) and every d, each at alpha / (L(L-1)).
inline FalsifyReport test_discrete(const JointCounts& table, double alpha, const TestOptions& opts = {}) {
  detail::check_alpha(alpha);
  const double level = discrete_level(alpha, table.instrument_levels());
  detail::check_options(opts, level);
  FalsifyReport r;
  r.model = Model::discrete;
  r.alpha = alpha;
  r.metadata = detail::metadata_for(opts);
  r.entries = detail::discrete_entries(table, level, opts, std::nullopt, r.metadata.notes);
  r.overall_reject = detail::any_reject(r.entries);
  if (table.is_binary()) {
    for (int d = 0; d < 2; ++d) {
      bool pos = false, neg = false;
      for (const auto& e : r.entries) {
        const auto& p = std::get<PairIndex>(e.id);
        if (e.reject && p.d == d) (p.z2 > p.z1 ? pos : neg) = true;
      }
      r.acde_signs.push_back({d, pos && !neg ? AcdeSign::positive : (neg && !pos ? AcdeSign::negative : AcdeSign::undetermined),
                              std::nullopt});
    }
  }
  return r;
}

/// Discrete inequalities within every stratum, Bonferroni over strata and
/// inequalities.
inline FalsifyReport test_conditional_discrete(const StratifiedCounts& s, double alpha, const TestOptions& opts = {}) {
  detail::check_alpha(alpha);
  if (s.strata.empty()) throw EstimationError("no strata");
  const auto& first = s.strata.begin()->second;
  const double level =
      conditional_discrete_level(alpha, s.stratum_count(), first.instrument_levels(), first.treatment_levels());
  detail::check_options(opts, level);
  FalsifyReport r;
  r.model = Model::conditional_discrete;
  r.alpha = alpha;
  r.metadata = detail::metadata_for(opts);
  r.metadata.strata = s.stratum_count();
  for (const auto& [key, t] : s.strata) {
    auto es = detail::discrete_entries(t, level, opts, key, r.metadata.notes);
    r.entries.insert(r.entries.end(), es.begin(), es.end());
  }
  r.overall_reject = detail::any_reject(r.entries);
  return r;
}

/// A configured falsification procedure, as run by the CLI and the
/// simulation harness.
struct Procedure {
  Model model = Model::unconditional_binary;
  double alpha = 0.05;
  TestOptions tests;
  GsOptions gs;
};

inline FalsifyReport run_procedure(const Procedure& p, const StratifiedCounts& s) {
  switch (p.model) {
    case Model::unconditional_binary: return test_unconditional(s.collapsed(), p.alpha, p.tests);
    case Model::conditional_binary_gs: return test_conditional_gs(s, p.alpha, p.gs);
    case Model::conditional_binary_perlevel: return test_conditional_perlevel(s, p.alpha, p.tests);
    case Model::discrete: return test_discrete(s.collapsed(), p.alpha, p.tests);
    default: return test_conditional_discrete(s, p.alpha, p.tests);
  }
}

inline FalsifyReport run_procedure(const Procedure& p, const JointCounts& t) {
  StratifiedCounts s;
  s.strata.emplace(StratumKey{}, t);
  return run_procedure(p, s);
}

}  // namespace ivf

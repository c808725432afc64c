#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ivf/errors.hpp"
#include "ivf/ineq_core.hpp"
#include "ivf/special.hpp"
#include "ivf/tabulate.hpp"

// One-sided qualitative-interaction test of H0: Delta(v) <= 0 for every
// stratum v. The statistic Q+ sums squared standardized positive differences;
// under the least favourable null (all Delta(v) = 0, independent strata) it
// follows a chi-bar-squared law with weights C(K, k) 2^-K.

namespace ivf {

struct StratumDelta {
  StratumKey key;
  std::optional<TwoByTwo> table;  // absent when an arm is empty
  DeltaEstimate delta;
  bool usable = false;
};

/// One entry per stratum of the q_table for inequality (d, y).
inline std::vector<StratumDelta> stratum_deltas(const StratifiedCounts& s, int d, int y) {
  std::vector<StratumDelta> out;
  out.reserve(s.strata.size());
  for (const auto& [key, counts] : s.strata) {
    if (!counts.is_binary()) throw DomainError("stratum_deltas needs binary tables in every stratum");
    StratumDelta sd;
    sd.key = key;
    if (counts.arm_total(0) > 0 && counts.arm_total(1) > 0) {
      sd.table = q_table(counts, d, y);
      sd.delta = delta(*sd.table);
      sd.usable = true;
    }
    out.push_back(std::move(sd));
  }
  return out;
}

/// How a usable stratum whose raw Wald se is zero is handled.
enum class ZeroSe {
  correct,   // add 0.5 to every cell for the se whenever an arm proportion is 0 or 1
  skip,      // raw se; strata with se = 0 contribute nothing to Q+
  infinite,  // raw se; se = 0 with a positive difference makes Q+ infinite
};

/// Which K enters the chi-bar-squared weights.
enum class WeightBasis {
  usable,  // strata with both arms present
  all,     // every observed stratum
};

inline std::string to_string(ZeroSe z) {
  switch (z) {
    case ZeroSe::correct: return "correct";
    case ZeroSe::skip: return "skip";
    default: return "infinite";
  }
}

inline std::string to_string(WeightBasis w) { return w == WeightBasis::usable ? "usable" : "all"; }

struct GsOptions {
  ZeroSe zero_se = ZeroSe::correct;
  WeightBasis weights = WeightBasis::usable;
};

struct GsResult {
  double q_plus = 0.0;
  int k_used = 0;     // usable strata
  int k_weights = 0;  // K in the chi-bar-squared weights
  double p_value = 1.0;
  std::vector<StratumKey> dropped;    // empty-arm strata
  std::vector<StratumKey> corrected;  // se from the 0.5-corrected table
  std::vector<StratumKey> skipped;    // zero se, left out of Q+
};

/// Pr(chi-bar-squared with weights C(K, k) 2^-K >= q), including the point
/// mass 2^-K at zero when q <= 0.
inline double chi_bar_squared_upper_tail(double q, int k_total) {
  if (k_total < 1) throw DomainError("chi-bar-squared needs at least one component");
  if (!(q > 0.0)) return 1.0;
  if (std::isinf(q)) return 0.0;
  const auto w = special::binomial_half_weights(k_total);
  double p = 0.0;
  for (int k = 1; k <= k_total; ++k) {
    if (w[k] == 0.0) continue;
    p += w[k] * special::chi_squared_upper_tail(q, k);
  }
  return std::min(p, 1.0);
}

inline GsResult gs_test(const std::vector<StratumDelta>& deltas, const GsOptions& opt = {}) {
  GsResult r;
  bool infinite = false;
  for (const auto& sd : deltas) {
    if (!sd.usable) {
      r.dropped.push_back(sd.key);
      continue;
    }
    ++r.k_used;
    const auto& t = *sd.table;
    const double est = sd.delta.estimate;
    double se = sd.delta.se;
    if (opt.zero_se == ZeroSe::correct && (t.x1 == 0 || t.x1 == t.n1 || t.x0 == 0 || t.x0 == t.n0)) {
      const double m1 = static_cast<double>(t.n1) + 1.0;
      const double m0 = static_cast<double>(t.n0) + 1.0;
      se = wald_se((static_cast<double>(t.x1) + 0.5) / m1, m1, (static_cast<double>(t.x0) + 0.5) / m0, m0);
      r.corrected.push_back(sd.key);
    }
    if (!(est > 0.0)) continue;
    if (se == 0.0) {
      if (opt.zero_se == ZeroSe::infinite) infinite = true;
      else r.skipped.push_back(sd.key);
      continue;
    }
    r.q_plus += (est / se) * (est / se);
  }
  if (r.k_used == 0) throw EstimationError("Gail-Simon test: no stratum has both instrument arms");
  r.k_weights = opt.weights == WeightBasis::usable ? r.k_used : static_cast<int>(deltas.size());
  if (infinite) {
    r.q_plus = std::numeric_limits<double>::infinity();
    r.p_value = 0.0;
  } else {
    r.p_value = chi_bar_squared_upper_tail(r.q_plus, r.k_weights);
  }
  return r;
}

}  // namespace ivf

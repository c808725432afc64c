#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ivf/errors.hpp"
#include "ivf/ineq_core.hpp"
#include "ivf/special.hpp"

// One-sided tests of H0: p1 <= p0 against p1 > p0 for a TwoByTwo.

namespace ivf {

enum class TestMethod { wald, boschloo, berger_boos };

inline std::string to_string(TestMethod m) {
  switch (m) {
    case TestMethod::wald: return "wald";
    case TestMethod::boschloo: return "boschloo";
    default: return "berger_boos";
  }
}

struct TestResult {
  double p_value = 1.0;
  double statistic = 0.0;  // Wald z, or the Fisher p used as ordering statistic
  TestMethod method = TestMethod::wald;
  double gamma = 0.0;
};

inline TestResult wald_one_sided(const TwoByTwo& t) {
  t.validate();
  const double diff = t.difference();
  const double se = wald_se(t);
  TestResult r;
  r.method = TestMethod::wald;
  if (se == 0.0) {
    // Both arms degenerate. Evidence for p1 > p0 only if they point opposite ways.
    r.statistic = diff > 0.0 ? std::numeric_limits<double>::infinity()
                             : (diff < 0.0 ? -std::numeric_limits<double>::infinity() : 0.0);
    r.p_value = diff > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = diff / se;
  r.p_value = special::normal_upper_tail(r.statistic);
  return r;
}

namespace detail {

// log of the one-sided Fisher p-value Pr(X1 >= x1 | x1 + x0 = s) for every
// x1 in the conditional support of margin s; index is x1 - lower(s).
inline std::vector<double> log_fisher_tail(std::int64_t n1, std::int64_t n0, std::int64_t s) {
  const std::int64_t lo = std::max<std::int64_t>(0, s - n0);
  const std::int64_t hi = std::min(n1, s);
  const double norm = special::log_choose(n1 + n0, s);
  std::vector<double> out(static_cast<std::size_t>(hi - lo + 1));
  double acc = -std::numeric_limits<double>::infinity();
  for (std::int64_t k = hi; k >= lo; --k) {
    acc = special::log_add(acc, special::log_choose(n1, k) + special::log_choose(n0, s - k) - norm);
    out[static_cast<std::size_t>(k - lo)] = std::min(acc, 0.0);
  }
  return out;
}

}  // namespace detail

/// Exact conditional (hypergeometric) upper-tail p-value given x1 + x0.
inline double fisher_one_sided(const TwoByTwo& t) {
  t.validate();
  const auto s = t.x1 + t.x0;
  const auto tail = detail::log_fisher_tail(t.n1, t.n0, s);
  const auto lo = std::max<std::int64_t>(0, s - t.n0);
  return std::exp(tail[static_cast<std::size_t>(t.x1 - lo)]);
}

/// Supremum search settings for the unconditional exact tests.
struct SupremumGrid {
  double step = 1e-4;           // grid over [step, 1 - step]
  double refine_width = 1e-7;   // golden-section bracket width around the grid maximizer
  double tie_tolerance = 1e-7;  // relative tolerance for "Fisher p <= observed"
};

/// Unconditional exact machinery for fixed arm sizes (n1, n0): the Fisher
/// ordering of all (n1 + 1)(n0 + 1) tables and the tail probability of a
/// rejection region under a common success probability pi.
class ExactUnconditional {
 public:
  ExactUnconditional(std::int64_t n1, std::int64_t n0, SupremumGrid grid = {})
      : n1_(n1), n0_(n0), grid_(grid) {
    if (n1 < 1 || n0 < 1) throw EstimationError("exact test needs both arms non-empty");
    log_fisher_.resize(static_cast<std::size_t>((n1 + 1) * (n0 + 1)));
    for (std::int64_t s = 0; s <= n1 + n0; ++s) {
      const auto tail = detail::log_fisher_tail(n1, n0, s);
      const auto lo = std::max<std::int64_t>(0, s - n0);
      for (std::size_t i = 0; i < tail.size(); ++i) {
        const auto a = lo + static_cast<std::int64_t>(i);
        log_fisher_[cell(a, s - a)] = tail[i];
      }
    }
    log_choose1_.resize(static_cast<std::size_t>(n1 + 1));
    log_choose0_.resize(static_cast<std::size_t>(n0 + 1));
    for (std::int64_t k = 0; k <= n1; ++k) log_choose1_[k] = special::log_choose(n1, k);
    for (std::int64_t k = 0; k <= n0; ++k) log_choose0_[k] = special::log_choose(n0, k);
  }

  std::int64_t n1() const noexcept { return n1_; }
  std::int64_t n0() const noexcept { return n0_; }

  double fisher_p(std::int64_t x1, std::int64_t x0) const { return std::exp(log_fisher_[cell(x1, x0)]); }

  /// Rejection region {(a, b): fisher(a, b) <= fisher(x1, x0)}, stored per
  /// row a as runs [first, last] of b.
  struct Region {
    struct Run {
      std::int64_t a, first, last;
    };
    std::vector<Run> runs;
  };

  Region region(std::int64_t x1, std::int64_t x0) const {
    const double threshold = log_fisher_[cell(x1, x0)] + grid_.tie_tolerance;
    Region r;
    for (std::int64_t a = 0; a <= n1_; ++a) {
      std::int64_t b = 0;
      while (b <= n0_) {
        if (log_fisher_[cell(a, b)] <= threshold) {
          const std::int64_t first = b;
          while (b + 1 <= n0_ && log_fisher_[cell(a, b + 1)] <= threshold) ++b;
          r.runs.push_back({a, first, b});
        }
        ++b;
      }
    }
    return r;
  }

  /// Pr_pi{(X1, X0) in region} with X1 ~ Bin(n1, pi), X0 ~ Bin(n0, pi).
  double tail_probability(const Region& r, double pi) const {
    if (r.runs.empty()) return 0.0;
    if (pi <= 0.0 || pi >= 1.0) return degenerate_tail(r, pi <= 0.0 ? 0 : 1);
    const double lp = std::log(pi);
    const double lq = std::log1p(-pi);
    cdf0_.resize(static_cast<std::size_t>(n0_ + 1));
    double acc = 0.0;
    for (std::int64_t b = 0; b <= n0_; ++b) {
      acc += std::exp(log_choose0_[b] + b * lp + (n0_ - b) * lq);
      cdf0_[b] = acc;
    }
    double total = 0.0;
    std::int64_t row = -1;
    double pmf1 = 0.0;
    for (const auto& run : r.runs) {
      if (run.a != row) {
        row = run.a;
        pmf1 = std::exp(log_choose1_[row] + row * lp + (n1_ - row) * lq);
      }
      const double mass = run.first == 0 ? cdf0_[run.last] : cdf0_[run.last] - cdf0_[run.first - 1];
      total += pmf1 * mass;
    }
    return std::min(total, 1.0);
  }

  /// sup of tail_probability over pi in [lo, hi]: grid points of the
  /// configured step inside the interval plus its endpoints, then a
  /// golden-section refinement around the best grid point.
  double supremum(const Region& r, double lo = 0.0, double hi = 1.0) const {
    if (r.runs.empty()) return 0.0;
    const double step = grid_.step;
    double best_pi = std::clamp(0.5, lo, hi);
    double best = tail_probability(r, best_pi);
    auto consider = [&](double pi) {
      const double v = tail_probability(r, pi);
      if (v > best) {
        best = v;
        best_pi = pi;
      }
    };
    const bool full = lo <= 0.0 && hi >= 1.0;
    if (!full) {
      consider(lo);
      consider(hi);
    }
    const auto first = static_cast<long>(std::ceil(std::max(lo, step) / step - 1e-9));
    const auto last = static_cast<long>(std::floor(std::min(hi, 1.0 - step) / step + 1e-9));
    for (long i = first; i <= last; ++i) consider(static_cast<double>(i) * step);
    const double a = std::max(std::max(lo, 0.0), best_pi - step);
    const double b = std::min(std::min(hi, 1.0), best_pi + step);
    if (b > a) {
      auto [x, v] = special::golden_section_max([&](double pi) { return tail_probability(r, pi); }, a, b,
                                                grid_.refine_width);
      if (v > best) best = v;
    }
    return std::min(best, 1.0);
  }

 private:
  std::size_t cell(std::int64_t a, std::int64_t b) const {
    return static_cast<std::size_t>(a * (n0_ + 1) + b);
  }

  // pi = 0 puts all mass on (0, 0); pi = 1 on (n1, n0).
  double degenerate_tail(const Region& r, int corner) const {
    const std::int64_t a = corner ? n1_ : 0;
    const std::int64_t b = corner ? n0_ : 0;
    for (const auto& run : r.runs)
      if (run.a == a && run.first <= b && b <= run.last) return 1.0;
    return 0.0;
  }

  std::int64_t n1_, n0_;
  SupremumGrid grid_;
  std::vector<double> log_fisher_;
  std::vector<double> log_choose1_, log_choose0_;
  mutable std::vector<double> cdf0_;
};

/// Fisher-Boschloo exact unconditional test: the Fisher p-value orders the
/// tables and its tail is maximized over the common success probability.
inline TestResult boschloo_exact(const TwoByTwo& t, const SupremumGrid& grid = {}) {
  t.validate();
  const ExactUnconditional ex(t.n1, t.n0, grid);
  TestResult r;
  r.method = TestMethod::boschloo;
  r.statistic = ex.fisher_p(t.x1, t.x0);
  r.p_value = ex.supremum(ex.region(t.x1, t.x0));
  return r;
}

/// Berger-Boos variant: supremum restricted to the 100(1 - gamma)%
/// Clopper-Pearson interval of the pooled proportion, plus gamma.
inline TestResult berger_boos(const TwoByTwo& t, double gamma, const SupremumGrid& grid = {}) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("berger_boos: gamma must lie in (0, 1)");
  t.validate();
  const ExactUnconditional ex(t.n1, t.n0, grid);
  const auto [lo, hi] = special::clopper_pearson(t.x1 + t.x0, t.n1 + t.n0, gamma);
  TestResult r;
  r.method = TestMethod::berger_boos;
  r.gamma = gamma;
  r.statistic = ex.fisher_p(t.x1, t.x0);
  r.p_value = std::min(1.0, gamma + ex.supremum(ex.region(t.x1, t.x0), lo, hi));
  return r;
}

/// Boschloo p-values for every table with arm sizes (n1, n0), indexed
/// [x1 * (n0 + 1) + x0]. Regions are nested in the Fisher ordering, so one
/// pass over the grid with prefix sums serves all tables; each distinct
/// region is then refined as in boschloo_exact.
inline std::vector<double> boschloo_p_values(std::int64_t n1, std::int64_t n0, const SupremumGrid& grid = {}) {
  const ExactUnconditional ex(n1, n0, grid);
  const auto cells = static_cast<std::size_t>((n1 + 1) * (n0 + 1));
  std::vector<double> logf(cells);
  for (std::int64_t a = 0; a <= n1; ++a)
    for (std::int64_t b = 0; b <= n0; ++b) logf[static_cast<std::size_t>(a * (n0 + 1) + b)] = std::log(ex.fisher_p(a, b));
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return logf[i] < logf[j]; });
  std::vector<double> sorted(cells);
  for (std::size_t i = 0; i < cells; ++i) sorted[i] = logf[order[i]];
  // prefix length of each cell's region
  std::vector<std::size_t> reach(cells);
  for (std::size_t c = 0; c < cells; ++c)
    reach[c] = static_cast<std::size_t>(
        std::upper_bound(sorted.begin(), sorted.end(), logf[c] + grid.tie_tolerance) - sorted.begin());

  std::vector<double> best(cells + 1, 0.0);
  std::vector<double> best_pi(cells + 1, 0.5);
  std::vector<double> pmf1(static_cast<std::size_t>(n1 + 1)), pmf0(static_cast<std::size_t>(n0 + 1));
  const auto steps = static_cast<long>(std::floor((1.0 - grid.step) / grid.step + 1e-9));
  for (long i = 1; i <= steps; ++i) {
    const double pi = static_cast<double>(i) * grid.step;
    const double lp = std::log(pi), lq = std::log1p(-pi);
    for (std::int64_t k = 0; k <= n1; ++k) pmf1[k] = std::exp(special::log_choose(n1, k) + k * lp + (n1 - k) * lq);
    for (std::int64_t k = 0; k <= n0; ++k) pmf0[k] = std::exp(special::log_choose(n0, k) + k * lp + (n0 - k) * lq);
    double acc = 0.0;
    for (std::size_t r = 0; r < cells; ++r) {
      const auto c = order[r];
      acc += pmf1[c / static_cast<std::size_t>(n0 + 1)] * pmf0[c % static_cast<std::size_t>(n0 + 1)];
      if (acc > best[r + 1]) {
        best[r + 1] = acc;
        best_pi[r + 1] = pi;
      }
    }
  }

  std::vector<double> refined(cells + 1, -1.0);
  std::vector<double> out(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    const auto r = reach[c];
    if (refined[r] < 0.0) {
      const auto region = ex.region(static_cast<std::int64_t>(c / static_cast<std::size_t>(n0 + 1)),
                                    static_cast<std::int64_t>(c % static_cast<std::size_t>(n0 + 1)));
      double v = best[r];
      const double a = std::max(0.0, best_pi[r] - grid.step);
      const double b = std::min(1.0, best_pi[r] + grid.step);
      auto [x, fv] = special::golden_section_max([&](double pi) { return ex.tail_probability(region, pi); }, a, b,
                                                 grid.refine_width);
      refined[r] = std::min(1.0, std::max(v, fv));
    }
    out[c] = refined[r];
  }
  return out;
}

inline TestResult run_test(const TwoByTwo& t, TestMethod m, double gamma = 0.0) {
  switch (m) {
    case TestMethod::wald: return wald_one_sided(t);
    case TestMethod::boschloo: return boschloo_exact(t);
    default: return berger_boos(t, gamma);
  }
}

}  // namespace ivf

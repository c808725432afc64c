#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "ivf/errors.hpp"

namespace ivf::special {

// Pr(N(0,1) >= x).
inline double normal_upper_tail(double x) {
  return 0.5 * std::erfc(x / std::sqrt(2.0));
}

// Pr(chi^2_k >= q) through the regularized upper incomplete gamma Q(k/2, q/2).
inline double chi_squared_upper_tail(double q, int k) {
  if (k <= 0) throw DomainError("chi-squared degrees of freedom must be positive");
  if (!(q > 0.0)) return 1.0;
  if (std::isinf(q)) return 0.0;
  return boost::math::gamma_q(0.5 * k, 0.5 * q);
}

inline double log_choose(long n, long k) {
  return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

// Two-sided 100(1 - gamma)% Clopper-Pearson interval for a binomial
// proportion with `successes` out of `trials`.
inline std::pair<double, double> clopper_pearson(long successes, long trials, double gamma) {
  if (trials < 1 || successes < 0 || successes > trials)
    throw DomainError("clopper_pearson: need 0 <= successes <= trials, trials >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ParameterError("clopper_pearson: gamma must lie in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  if (successes > 0) {
    boost::math::beta_distribution<double> b(static_cast<double>(successes),
                                             static_cast<double>(trials - successes + 1));
    lo = boost::math::quantile(b, gamma / 2.0);
  }
  if (successes < trials) {
    boost::math::beta_distribution<double> b(static_cast<double>(successes + 1),
                                             static_cast<double>(trials - successes));
    hi = boost::math::quantile(b, 1.0 - gamma / 2.0);
  }
  return {lo, hi};
}

// Weights C(k_total, k) 2^{-k_total} for k = 0..k_total, computed in log space
// so that hundreds of strata do not underflow the leading terms.
inline std::vector<double> binomial_half_weights(int k_total) {
  std::vector<double> w(static_cast<std::size_t>(k_total) + 1);
  const double log_half = k_total * std::log(0.5);
  for (int k = 0; k <= k_total; ++k) w[k] = std::exp(log_choose(k_total, k) + log_half);
  return w;
}

// Maximize a unimodal-on-[lo, hi] function by golden-section search until the
// bracket is narrower than `width`. Returns (argmax, max) and never evaluates
// outside [lo, hi]; the endpoints themselves are included as candidates.
template <typename F>
std::pair<double, double> golden_section_max(F&& f, double lo, double hi, double width) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double best_x = lo;
  double best_f = f(lo);
  if (double fh = f(hi); fh > best_f) {
    best_f = fh;
    best_x = hi;
  }
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > width) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  if (fc > best_f) {
    best_f = fc;
    best_x = c;
  }
  if (fd > best_f) {
    best_f = fd;
    best_x = d;
  }
  return {best_x, best_f};
}

}  // namespace ivf::special

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ivf/errors.hpp"
#include "ivf/tabulate.hpp"

namespace ivf {

/// Identifies one of the four binary instrumental inequalities
///   p(D=d, Y=y | Z=1) + p(D=d, Y=1-y | Z=0) <= 1.
struct IneqIndex {
  int d = 0;
  int y = 0;
  friend auto operator<=>(const IneqIndex&, const IneqIndex&) = default;
};

inline constexpr std::array<IneqIndex, 4> kBinaryInequalities{{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

inline std::string to_string(IneqIndex i) { return "H" + std::to_string(i.d) + std::to_string(i.y); }

/// Successes and totals in two arms: x1 of n1 in the Z=1 arm, x0 of n0 in the
/// Z=0 arm.
struct TwoByTwo {
  std::int64_t x1 = 0;
  std::int64_t n1 = 0;
  std::int64_t x0 = 0;
  std::int64_t n0 = 0;

  static TwoByTwo make(std::int64_t x1, std::int64_t n1, std::int64_t x0, std::int64_t n0) {
    TwoByTwo t{x1, n1, x0, n0};
    t.validate();
    return t;
  }

  void validate() const {
    if (n1 < 1 || n0 < 1) throw EstimationError("2x2 table has an empty arm");
    if (x1 < 0 || x1 > n1 || x0 < 0 || x0 > n0) throw DomainError("2x2 successes outside [0, n]");
  }

  double p1() const { return static_cast<double>(x1) / static_cast<double>(n1); }
  double p0() const { return static_cast<double>(x0) / static_cast<double>(n0); }
  double difference() const { return p1() - p0(); }

  friend bool operator==(const TwoByTwo&, const TwoByTwo&) = default;
};

/// Unpooled (Wald) standard error of p1 - p0. An arm with p in {0, 1}
/// contributes zero variance.
inline double wald_se(double p1, double n1, double p0, double n0) {
  return std::sqrt(p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0);
}

inline double wald_se(const TwoByTwo& t) {
  return wald_se(t.p1(), static_cast<double>(t.n1), t.p0(), static_cast<double>(t.n0));
}

struct DeltaEstimate {
  double estimate = 0.0;
  double se = 0.0;
  std::int64_t n1 = 0;
  std::int64_t n0 = 0;
};

inline DeltaEstimate delta(const TwoByTwo& t) {
  t.validate();
  return {t.difference(), wald_se(t), t.n1, t.n0};
}

namespace detail {

inline void require_binary(const JointCounts& t) {
  if (!t.is_binary()) throw DomainError("operation needs a binary (L = M = 2) table");
}

inline void require_arms(const JointCounts& t) {
  for (int z = 0; z < t.instrument_levels(); ++z)
    if (t.arm_total(z) <= 0) throw EstimationError("instrument arm z=" + std::to_string(z) + " is empty");
}

inline void require_index(IneqIndex i) {
  if (i.d < 0 || i.d > 1 || i.y < 0 || i.y > 1) throw DomainError("inequality index outside {0,1}^2");
}

}  // namespace detail

/// Empirical left-hand side u^{dy} = p(d, y | 1) + p(d, 1-y | 0).
inline double u_stat(const JointCounts& t, int d, int y) {
  detail::require_binary(t);
  detail::require_index({d, y});
  return t.proportion(1, d, y) + t.proportion(0, d, 1 - y);
}

/// 2x2 table for the arm comparison behind one inequality between instrument
/// levels `hi` (the "treated" arm) and `lo`: success in arm `hi` is
/// {D=d, Y=y}; success in arm `lo` is the complement of {D=d, Y=1-y}. Its
/// difference in proportions equals p(d, y | hi) + p(d, 1-y | lo) - 1.
inline TwoByTwo q_table_between(const JointCounts& t, int hi, int lo, int d, int y) {
  if (hi == lo) throw DomainError("q_table needs two distinct instrument levels");
  const auto n1 = t.arm_total(hi);
  const auto n0 = t.arm_total(lo);
  if (n1 <= 0 || n0 <= 0) throw EstimationError("instrument arm is empty");
  return TwoByTwo{t(hi, d, y), n1, n0 - t(lo, d, 1 - y), n0};
}

inline TwoByTwo q_table(const JointCounts& t, int d, int y) {
  detail::require_binary(t);
  detail::require_index({d, y});
  return q_table_between(t, 1, 0, d, y);
}

inline TwoByTwo q_table(const JointCounts& t, IneqIndex i) { return q_table(t, i.d, i.y); }

inline DeltaEstimate delta(const JointCounts& t, int d, int y) { return delta(q_table(t, d, y)); }

/// Coordinates (u00, u01, u10) of the simplex {u00 + u01 + u10 <= 2, u >= 0};
/// u11 is implied because the four left-hand sides always sum to 2.
struct ZetaPoint {
  double u00 = 0.0;
  double u01 = 0.0;
  double u10 = 0.0;

  double u11() const { return 2.0 - u00 - u01 - u10; }

  double coordinate(IneqIndex i) const {
    switch (i.d * 2 + i.y) {
      case 0: return u00;
      case 1: return u01;
      case 2: return u10;
      default: return u11();
    }
  }
};

inline ZetaPoint zeta_of(const JointCounts& t) {
  detail::require_binary(t);
  detail::require_arms(t);
  return {u_stat(t, 0, 0), u_stat(t, 0, 1), u_stat(t, 1, 0)};
}

enum class Region { interior, boundary, exterior };

inline std::string to_string(Region r) {
  switch (r) {
    case Region::interior: return "interior";
    case Region::boundary: return "boundary";
    default: return "exterior";
  }
}

struct Membership {
  Region region = Region::interior;
  std::vector<IneqIndex> active;    // constraints holding with equality
  std::vector<IneqIndex> violated;  // constraints exceeding 1
};

namespace detail {

inline Membership classify(const std::array<int, 4>& sign) {
  // sign: -1 below 1, 0 equal to 1, +1 above 1
  Membership m;
  for (std::size_t k = 0; k < 4; ++k) {
    if (sign[k] == 0) m.active.push_back(kBinaryInequalities[k]);
    if (sign[k] > 0) m.violated.push_back(kBinaryInequalities[k]);
  }
  if (m.active.size() > 2) throw DomainError("more than two instrumental inequalities active: not a simplex point");
  if (!m.violated.empty()) m.region = Region::exterior;
  else if (!m.active.empty()) m.region = Region::boundary;
  return m;
}

}  // namespace detail

inline constexpr double kMembershipTolerance = 1e-9;

/// Classifies a point of the simplex against the four constraints u^{dy} <= 1.
inline Membership octahedron_membership(const ZetaPoint& z, double tol = kMembershipTolerance) {
  const std::array<double, 4> u{z.u00, z.u01, z.u10, z.u11()};
  for (double c : u)
    if (c < -tol || c > 2.0 + tol) throw DomainError("zeta point outside the simplex");
  std::array<int, 4> sign{};
  for (std::size_t k = 0; k < 4; ++k) sign[k] = u[k] > 1.0 + tol ? 1 : (u[k] < 1.0 - tol ? -1 : 0);
  return detail::classify(sign);
}

/// Exact classification of the empirical point of a count table: compares
/// n(1,d,y) * N0 + n(0,d,1-y) * N1 against N1 * N0 in integer arithmetic.
inline Membership octahedron_membership(const JointCounts& t) {
  detail::require_binary(t);
  detail::require_arms(t);
  const long double big1 = static_cast<long double>(t.arm_total(1));
  const long double big0 = static_cast<long double>(t.arm_total(0));
  if (big1 * big0 > 9.0e18L) return octahedron_membership(zeta_of(t));
  const std::int64_t n1 = t.arm_total(1);
  const std::int64_t n0 = t.arm_total(0);
  std::array<int, 4> sign{};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto [d, y] = kBinaryInequalities[k];
    const std::int64_t lhs = t(1, d, y) * n0 + t(0, d, 1 - y) * n1;
    const std::int64_t rhs = n1 * n0;
    sign[k] = lhs > rhs ? 1 : (lhs < rhs ? -1 : 0);
  }
  return detail::classify(sign);
}

/// Bounds on the average controlled direct effect of Z on Y at D = d, valid
/// when Z is randomized.
struct AcdeInterval {
  double lower = 0.0;
  double upper = 0.0;
};

inline AcdeInterval acde_bounds(const JointCounts& t, int d) {
  detail::require_binary(t);
  if (d < 0 || d > 1) throw DomainError("treatment level must be 0 or 1");
  return {t.proportion(1, d, 1) + t.proportion(0, d, 0) - 1.0,
          1.0 - t.proportion(1, d, 0) - t.proportion(0, d, 1)};
}

}  // namespace ivf

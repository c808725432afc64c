#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "ivf/errors.hpp"
#include "ivf/falsify.hpp"
#include "ivf/ineq_core.hpp"
#include "ivf/tabulate.hpp"

// Data-generating processes and a seeded Monte Carlo harness.
//
// Random streams: replicate r (0-based) gets the first SplitMix64 output of
// state master + r * phi, phi = 0x9E3779B97F4A7C15, as its seed; its
// generator is xoshiro256** whose four state words are the first four
// SplitMix64 outputs of that seed. Uniform doubles are
// the top 53 bits times 2^-53. Everything is specified here so that other
// implementations can reproduce a stream bit for bit.

namespace ivf::sim {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += kGoldenGamma);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master + index * kGoldenGamma;
  return splitmix64(s);
}

class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed) {
    for (auto& w : s_) w = splitmix64(seed);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    const auto result = rotl(s_[1] * 5, 7) * 9;
    const auto t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> s_{};
};

/// Cell order for the per-arm 4-vectors: (d, y) = (0,0), (0,1), (1,0), (1,1).
using ArmDistribution = std::array<double, 4>;

enum class Compliance { always_taker, never_taker, complier, defier };

/// 16 latent types indexed compliance * 4 + response, response = 2 Y(0) + Y(1).
struct LatentSpec {
  std::array<double, 16> type_probs{};
  double pz = 0.5;
};

struct MarginsSpec {
  ArmDistribution p1{};  // p(d, y | Z = 1)
  ArmDistribution p0{};  // p(d, y | Z = 0)
  double pz = 0.5;
};

using DgpSpec = std::variant<LatentSpec, MarginsSpec>;

inline constexpr std::size_t latent_index(Compliance c, int y_at_d0, int y_at_d1) {
  return static_cast<std::size_t>(c) * 4 + static_cast<std::size_t>(2 * y_at_d0 + y_at_d1);
}

inline int treatment_of(Compliance c, int z) {
  switch (c) {
    case Compliance::always_taker: return 1;
    case Compliance::never_taker: return 0;
    case Compliance::complier: return z;
    default: return 1 - z;
  }
}

namespace detail {

template <std::size_t N>
void check_simplex(const std::array<double, N>& p, const char* what) {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) throw DomainError(std::string(what) + " has a negative entry");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-12) throw DomainError(std::string(what) + " does not sum to 1");
}

inline void check_pz(double pz) {
  if (!(pz >= 0.0 && pz <= 1.0)) throw DomainError("pz must lie in [0, 1]");
}

}  // namespace detail

inline void validate(const DgpSpec& spec) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LatentSpec>) {
          detail::check_simplex(s.type_probs, "type_probs");
        } else {
          detail::check_simplex(s.p1, "p1");
          detail::check_simplex(s.p0, "p0");
        }
        detail::check_pz(s.pz);
      },
      spec);
}

inline double pz_of(const DgpSpec& spec) {
  return std::visit([](const auto& s) { return s.pz; }, spec);
}

/// p(d, y | Z = z) implied by the spec.
inline ArmDistribution arm_distribution(const DgpSpec& spec, int z) {
  if (const auto* m = std::get_if<MarginsSpec>(&spec)) return z == 1 ? m->p1 : m->p0;
  const auto& l = std::get<LatentSpec>(spec);
  ArmDistribution out{};
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) {
      const auto comp = static_cast<Compliance>(c);
      const int d = treatment_of(comp, z);
      const int y = d == 0 ? (r >> 1) & 1 : r & 1;
      out[static_cast<std::size_t>(d * 2 + y)] += l.type_probs[static_cast<std::size_t>(c * 4 + r)];
    }
  return out;
}

/// Population point (u00, u01, u10) of the spec.
inline ZetaPoint zeta_of_dgp(const DgpSpec& spec) {
  validate(spec);
  const auto p1 = arm_distribution(spec, 1);
  const auto p0 = arm_distribution(spec, 0);
  auto u = [&](int d, int y) { return p1[d * 2 + y] + p0[d * 2 + (1 - y)]; };
  return {u(0, 0), u(0, 1), u(1, 0)};
}

enum class RegimeKind { two_equalities, one_equality, interior, exterior };

struct Regime {
  RegimeKind kind = RegimeKind::interior;
  IneqIndex violated{0, 1};  // used by exterior
};

inline std::string to_string(const Regime& r) {
  switch (r.kind) {
    case RegimeKind::two_equalities: return "two_equalities";
    case RegimeKind::one_equality: return "one_equality";
    case RegimeKind::interior: return "interior";
    default: return "exterior_" + std::to_string(r.violated.d) + std::to_string(r.violated.y);
  }
}

/// Canonical margins-variant specs, pz = 0.5.
///   two_equalities: u00 = u01 = 1, u10 = u11 = 0 (Q proportions 1/2 in the
///                   active tables, 0 and 1 in the others)
///   one_equality:   u00 = 1, u01 = 0.3, u10 = 0.4, u11 = 0.3
///   interior:       uniform, every u = 1/2
///   exterior(d,y):  u^{dy} = 1.3, the other three 7/30 each
inline MarginsSpec boundary_spec(const Regime& regime) {
  MarginsSpec s;
  s.pz = 0.5;
  switch (regime.kind) {
    case RegimeKind::two_equalities:
      s.p1 = {0.5, 0.5, 0.0, 0.0};
      s.p0 = {0.5, 0.5, 0.0, 0.0};
      break;
    case RegimeKind::one_equality:
      s.p1 = {0.5, 0.1, 0.2, 0.2};
      s.p0 = {0.2, 0.5, 0.1, 0.2};
      break;
    case RegimeKind::interior:
      s.p1 = {0.25, 0.25, 0.25, 0.25};
      s.p0 = {0.25, 0.25, 0.25, 0.25};
      break;
    case RegimeKind::exterior: {
      const auto [d, y] = regime.violated;
      const auto hit1 = static_cast<std::size_t>(d * 2 + y);
      const auto hit0 = static_cast<std::size_t>(d * 2 + (1 - y));
      for (std::size_t k = 0; k < 4; ++k) {
        s.p1[k] = k == hit1 ? 0.8 : 0.2 / 3.0;
        s.p0[k] = k == hit0 ? 0.5 : 0.5 / 3.0;
      }
      break;
    }
  }
  return s;
}

namespace detail {

inline int draw_cell(Xoshiro256& rng, const ArmDistribution& p) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int k = 0; k < 3; ++k) {
    acc += p[static_cast<std::size_t>(k)];
    if (u < acc) return k;
  }
  return 3;
}

}  // namespace detail

/// n units: Z ~ Bernoulli(pz), then (D, Y) from the arm distribution.
inline JointCounts sample(const DgpSpec& spec, std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw DomainError("sample size must be positive");
  validate(spec);
  const double pz = pz_of(spec);
  const auto p1 = arm_distribution(spec, 1);
  const auto p0 = arm_distribution(spec, 0);
  Xoshiro256 rng(seed);
  JointCounts t(2, 2);
  for (std::int64_t i = 0; i < n; ++i) {
    const int z = rng.uniform() < pz ? 1 : 0;
    const int c = detail::draw_cell(rng, z ? p1 : p0);
    t.add(z, c >> 1, c & 1);
  }
  return t;
}

/// Fixed arm sizes n1 (Z = 1) and n0 (Z = 0); pz is ignored.
inline JointCounts sample_arms(const DgpSpec& spec, std::int64_t n1, std::int64_t n0, std::uint64_t seed) {
  validate(spec);
  const auto p1 = arm_distribution(spec, 1);
  const auto p0 = arm_distribution(spec, 0);
  Xoshiro256 rng(seed);
  JointCounts t(2, 2);
  for (std::int64_t i = 0; i < n1; ++i) {
    const int c = detail::draw_cell(rng, p1);
    t.add(1, c >> 1, c & 1);
  }
  for (std::int64_t i = 0; i < n0; ++i) {
    const int c = detail::draw_cell(rng, p0);
    t.add(0, c >> 1, c & 1);
  }
  return t;
}

/// Independent strata, each drawn with fixed arm sizes from its own spec.
/// Keys are the stratum positions "0", "1", ...
inline StratifiedCounts sample_stratified(const std::vector<DgpSpec>& specs, std::int64_t n_per_arm,
                                          std::uint64_t seed) {
  StratifiedCounts s;
  for (std::size_t k = 0; k < specs.size(); ++k)
    s.strata.emplace(StratumKey{std::to_string(k)}, sample_arms(specs[k], n_per_arm, n_per_arm, derive_seed(seed, k)));
  return s;
}

/// Discrete-instrument generator: instrument level z with probability
/// pz[z], then the cell (d, y) from arms[z] (index d * 2 + y).
struct DiscreteSpec {
  std::vector<double> pz;
  std::vector<std::vector<double>> arms;
  int treatment_levels = 2;
};

inline JointCounts sample_discrete(const DiscreteSpec& spec, std::int64_t n, std::uint64_t seed) {
  const int levels = static_cast<int>(spec.pz.size());
  if (levels < 2 || spec.arms.size() != spec.pz.size()) throw DomainError("discrete spec needs matching pz and arms");
  for (const auto& a : spec.arms)
    if (a.size() != static_cast<std::size_t>(spec.treatment_levels * 2)) throw DomainError("arm distribution has wrong size");
  Xoshiro256 rng(seed);
  JointCounts t(levels, spec.treatment_levels);
  auto draw = [&](const std::vector<double>& p) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
      acc += p[k];
      if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(p.size() - 1);
  };
  for (std::int64_t i = 0; i < n; ++i) {
    const int z = draw(spec.pz);
    const int c = draw(spec.arms[static_cast<std::size_t>(z)]);
    t.add(z, c / 2, c % 2);
  }
  return t;
}

struct McResult {
  std::int64_t reps = 0;
  std::int64_t rejections = 0;
  std::int64_t unevaluable = 0;
  double rate = 0.0;
  double mc_se = 0.0;
  std::uint64_t seed = 0;
};

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Runs `trial(rep_seed)` for rep = 0..reps-1; a trial returns whether it
/// rejected, or nullopt when its data were unevaluable (counted as a
/// non-rejection). Outcomes are stored per replicate, so the result does not
/// depend on the number of threads.
inline McResult monte_carlo(std::int64_t reps, std::uint64_t seed,
                            const std::function<std::optional<bool>(std::uint64_t)>& trial,
                            unsigned threads = default_threads()) {
  if (reps < 1) throw DomainError("reps must be positive");
  std::vector<std::int8_t> outcome(static_cast<std::size_t>(reps), 0);
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (std::int64_t r; (r = next.fetch_add(1)) < reps;) {
      const auto o = trial(derive_seed(seed, static_cast<std::uint64_t>(r)));
      outcome[static_cast<std::size_t>(r)] = o ? (*o ? 1 : 0) : -1;
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::int64_t>(reps, 4096))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  McResult res;
  res.reps = reps;
  res.seed = seed;
  for (auto o : outcome) {
    if (o == 1) ++res.rejections;
    if (o == -1) ++res.unevaluable;
  }
  res.rate = static_cast<double>(res.rejections) / static_cast<double>(reps);
  res.mc_se = std::sqrt(res.rate * (1.0 - res.rate) / static_cast<double>(reps));
  return res;
}

/// Rejection rate of a falsification procedure on samples of size n.
inline McResult mc_rejection_rate(const DgpSpec& spec, std::int64_t n, std::int64_t reps, std::uint64_t seed,
                                  const Procedure& test, unsigned threads = default_threads()) {
  validate(spec);
  return monte_carlo(
      reps, seed,
      [&](std::uint64_t s) -> std::optional<bool> {
        try {
          return run_procedure(test, sample(spec, n, s)).overall_reject;
        } catch (const EstimationError&) {
          return std::nullopt;
        }
      },
      threads);
}

}  // namespace ivf::sim

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "tsctl/parallel.hpp"
#include "tsctl/rng.hpp"

namespace tsctl {

// Protein concentrations (copy numbers in the stochastic model).
struct State {
  double n1 = 0.0;
  double n2 = 0.0;

  friend bool operator==(const State& a, const State& b) {
    return a.n1 == b.n1 && a.n2 == b.n2;
  }
};

// Light-induction pulse, on or off.
using Action = int;
inline constexpr std::array<Action, 2> kActions{0, 1};

inline double distance(const State& a, const State& b) {
  return std::hypot(a.n1 - b.n1, a.n2 - b.n2);
}

// Toggle switch constants: c_i effective synthesis rates, alpha_i
// cooperativity coefficients, d_i degradation rates, b proteins added per
// light pulse.
struct ToggleParams {
  double c1 = 0.0;
  double c2 = 0.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double d1 = 1.0;
  double d2 = 1.0;
  double b = 0.0;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("ToggleParams: ") + name +
                                    " must be positive");
    };
    positive(c1, "c1");
    positive(c2, "c2");
    positive(alpha1, "alpha1");
    positive(alpha2, "alpha2");
    positive(d1, "d1");
    positive(d2, "d2");
    if (b < 0.0 || !std::isfinite(b))
      throw std::invalid_argument("ToggleParams: b must be nonnegative");
  }

  friend bool operator==(const ToggleParams&, const ToggleParams&) = default;
};

inline double synthesis_rate_1(const State& s, const ToggleParams& p) {
  return p.c1 / (1.0 + std::pow(s.n2, p.alpha2));
}

inline double synthesis_rate_2(const State& s, const ToggleParams& p) {
  return p.c2 / (1.0 + std::pow(s.n1, p.alpha1));
}

// One sampling period of the reduced-order dynamics: the unit-time Euler
// step of the mean equations dn1/dt = g1 - d1*n1 + b*u, dn2/dt = g2 - d2*n2.
// Outputs are clamped at zero; concentrations are physical. With d_i = 1
// (the toggle presets) this is the full-turnover update n1' = g1 + b*u,
// n2' = g2, whose fixed points coincide with the stochastic model's mean
// equilibria.
inline State deterministic_step(const State& s, Action u,
                                const ToggleParams& p) {
  double n1 = s.n1 + synthesis_rate_1(s, p) - p.d1 * s.n1 + p.b * u;
  double n2 = s.n2 + synthesis_rate_2(s, p) - p.d2 * s.n2;
  return {std::max(0.0, n1), std::max(0.0, n2)};
}

// Reaction channels in fixed order: production-1, degradation-1,
// production-2, degradation-2. The order is part of the reproducibility
// contract for seeded trajectories.
inline std::array<double, 4> propensities(const State& s, Action u,
                                          const ToggleParams& p) {
  return {synthesis_rate_1(s, p) + p.b * u, p.d1 * s.n1,
          synthesis_rate_2(s, p), p.d2 * s.n2};
}

// State change when channel j fires, same order as propensities().
inline constexpr std::array<std::array<int, 2>, 4> kStoichiometry{
    {{+1, 0}, {-1, 0}, {0, +1}, {0, -1}}};

// Piecewise-constant action schedule: steps[k] applies on
// [k*period, (k+1)*period), the last entry is held forever.
struct ActionSchedule {
  double period = 1.0;
  std::vector<Action> steps;

  static ActionSchedule constant(Action u) { return {1.0, {u}}; }

  Action at(double t) const {
    if (steps.empty()) throw std::invalid_argument("empty action schedule");
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / period)));
    return steps[std::min(k, steps.size() - 1)];
  }

  // First time > t at which the action value changes; infinity if none.
  double next_change_after(double t) const {
    Action cur = at(t);
    auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t / period)));
    for (std::size_t j = k + 1; j < steps.size(); ++j) {
      if (steps[j] != cur) return static_cast<double>(j) * period;
      cur = steps[j];
    }
    return std::numeric_limits<double>::infinity();
  }
};

struct SsaPoint {
  double t;
  State s;
};

namespace detail {

inline void require_integer_state(const State& s) {
  if (s.n1 < 0.0 || s.n2 < 0.0 || std::floor(s.n1) != s.n1 ||
      std::floor(s.n2) != s.n2)
    throw std::invalid_argument(
        "gillespie_run: initial state must be a nonnegative integer pair");
}

// Core direct-method loop over one zero-order-hold schedule. Calls
// record(t, state) after the initial point and every firing. Exponential
// waiting times that would cross an action-change boundary are discarded and
// redrawn from the boundary, which is exact by memorylessness.
template <typename Recorder>
State ssa_advance(State s, const ActionSchedule& sched, const ToggleParams& p,
                  double t_end, Rng& rng, Recorder&& record) {
  double t = 0.0;
  while (t < t_end) {
    Action u = sched.at(t);
    auto a = propensities(s, u, p);
    double a0 = a[0] + a[1] + a[2] + a[3];
    if (!std::isfinite(a0))
      throw std::runtime_error("ssa: non-finite total propensity");
    double boundary = std::min(t_end, sched.next_change_after(t));
    if (a0 <= 0.0) {
      if (boundary >= t_end) break;  // dead under every later action too
      t = boundary;
      continue;
    }
    double tau = rng.exponential(a0);
    if (t + tau >= boundary) {
      t = boundary;
      continue;
    }
    t += tau;
    double r = rng.uniform01() * a0;
    std::size_t j = 0;
    double acc = a[0];
    while (j < 3 && r >= acc) acc += a[++j];
    s.n1 += kStoichiometry[j][0];
    s.n2 += kStoichiometry[j][1];
    record(t, s);
  }
  return s;
}

}  // namespace detail

// Direct-method SSA realization of the toggle CME on [0, t_end].
// Identical seeds give bit-identical trajectories.
inline std::vector<SsaPoint> gillespie_run(const State& initial,
                                           const ActionSchedule& sched,
                                           const ToggleParams& p, double t_end,
                                           std::uint64_t seed) {
  if (!(t_end > 0.0))
    throw std::invalid_argument("gillespie_run: t_end must be positive");
  if (!(sched.period > 0.0) || sched.steps.empty())
    throw std::invalid_argument("gillespie_run: invalid action schedule");
  detail::require_integer_state(initial);
  Rng rng(seed);
  std::vector<SsaPoint> traj;
  traj.push_back({0.0, initial});
  State last = detail::ssa_advance(initial, sched, p, t_end, rng,
                                   [&](double t, const State& s) {
                                     traj.push_back({t, s});
                                   });
  traj.push_back({t_end, last});
  return traj;
}

// State of a recorded trajectory at time t (last event at or before t).
inline State state_at(const std::vector<SsaPoint>& traj, double t) {
  State s = traj.front().s;
  for (const auto& pt : traj) {
    if (pt.t > t) break;
    s = pt.s;
  }
  return s;
}

// Mean endpoint of n_traj independent SSA runs of duration dt under a
// constant action. The entry state is rounded to the nearest integer pair
// (CME states are molecule counts). Child run i is seeded from
// derive_seed(seed, i), so the result is independent of execution order.
inline State averaged_transition(const State& s, Action u,
                                 const ToggleParams& p, int n_traj, double dt,
                                 std::uint64_t seed) {
  if (n_traj < 1)
    throw std::invalid_argument("averaged_transition: n_traj must be >= 1");
  if (!(dt > 0.0))
    throw std::invalid_argument("averaged_transition: dt must be positive");
  State start{std::max(0.0, std::nearbyint(s.n1)),
              std::max(0.0, std::nearbyint(s.n2))};
  detail::require_integer_state(start);
  ActionSchedule hold = ActionSchedule::constant(u);
  std::vector<State> ends(static_cast<std::size_t>(n_traj));
  parallel_for(ends.size(), [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    ends[i] = detail::ssa_advance(start, hold, p, dt, rng,
                                  [](double, const State&) {});
  });
  State mean;
  for (const auto& e : ends) {  // fixed summation order
    mean.n1 += e.n1;
    mean.n2 += e.n2;
  }
  mean.n1 /= n_traj;
  mean.n2 /= n_traj;
  return mean;
}

// Fixed points of the deterministic map under a constant action (the states
// with g1 + b*u = d1*n1 and g2 = d2*n2), found by a sign-change scan plus
// bisection on the scalar reduction
//   F(n1) = (c1/(1+n2(n1)^a2) + b*u)/d1 - n1,
//   n2(n1) = c2/(d2*(1+n1^a1)).
// Returned in ascending n1. The toggle settings of interest yield two or
// three roots (the middle one, when present, is the saddle).
inline std::vector<State> find_fixed_points(const ToggleParams& p,
                                            Action u = 0) {
  auto n2_of = [&](double n1) {
    return p.c2 / (p.d2 * (1.0 + std::pow(n1, p.alpha1)));
  };
  auto residual = [&](double n1) {
    double n2 = n2_of(n1);
    return (p.c1 / (1.0 + std::pow(n2, p.alpha2)) + p.b * u) / p.d1 - n1;
  };
  double hi = (p.c1 + p.b * u) / p.d1;
  const int cells = 8192;
  std::vector<State> roots;
  double prev_x = 0.0, prev_f = residual(0.0);
  for (int i = 1; i <= cells; ++i) {
    double x = hi * i / cells;
    double f = residual(x);
    if (prev_f == 0.0) {
      roots.push_back({prev_x, n2_of(prev_x)});
    } else if ((prev_f > 0.0) != (f > 0.0)) {
      double a = prev_x, bx = x;
      for (int it = 0; it < 200; ++it) {
        double m = 0.5 * (a + bx);
        if ((residual(m) > 0.0) == (prev_f > 0.0))
          a = m;
        else
          bx = m;
      }
      double r = 0.5 * (a + bx);
      roots.push_back({r, n2_of(r)});
    }
    prev_x = x;
    prev_f = f;
  }
  return roots;
}

// Fixed-point pair defining the toggle geometry: the resting state where
// protein 2 dominates and the target state where protein 1 dominates.
struct TogglePoints {
  State n2_high;
  State n1_high;
};

inline TogglePoints toggle_points(const ToggleParams& p) {
  auto fps = find_fixed_points(p, 0);
  if (fps.size() < 2)
    throw std::runtime_error(
        "toggle_points: parameter set is not bistable (fewer than two fixed "
        "points)");
  TogglePoints tp{fps.front(), fps.front()};
  for (const auto& fp : fps) {
    if (fp.n2 > tp.n2_high.n2) tp.n2_high = fp;
    if (fp.n1 > tp.n1_high.n1) tp.n1_high = fp;
  }
  return tp;
}

}  // namespace tsctl

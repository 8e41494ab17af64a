#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsctl/model.hpp"
#include "tsctl/parallel.hpp"
#include "tsctl/rng.hpp"
#include "tsctl/textio.hpp"

namespace tsctl {

// One-step system transition {n, u, n+}; the unit of all learning data.
struct TransitionTriplet {
  State state;
  Action action = 0;
  State next_state;

  friend bool operator==(const TransitionTriplet&,
                         const TransitionTriplet&) = default;
};

enum class Provenance {
  SimulatedDeterministic,
  SimulatedStochastic,
  OnlineMeasured,
};

inline const char* to_string(Provenance p) {
  switch (p) {
    case Provenance::SimulatedDeterministic: return "simulated-deterministic";
    case Provenance::SimulatedStochastic: return "simulated-stochastic";
    case Provenance::OnlineMeasured: return "online-measured";
  }
  return "?";
}

inline Provenance provenance_from(std::string_view s) {
  if (s == "simulated-deterministic") return Provenance::SimulatedDeterministic;
  if (s == "simulated-stochastic") return Provenance::SimulatedStochastic;
  if (s == "online-measured") return Provenance::OnlineMeasured;
  throw std::runtime_error("unknown provenance '" + std::string(s) + "'");
}

struct GenerationMeta {
  ToggleParams params;
  std::uint64_t seed = 0;
  int n_trajectories = 0;
  int samples_per_trajectory = 0;

  friend bool operator==(const GenerationMeta&,
                         const GenerationMeta&) = default;
};

// Ordered triplet collection. Ordering is stable so a persisted-then-loaded
// set reproduces identical training.
struct TransitionSet {
  std::vector<TransitionTriplet> triplets;
  Provenance provenance = Provenance::SimulatedDeterministic;
  GenerationMeta meta;

  friend bool operator==(const TransitionSet&, const TransitionSet&) = default;
};

// Axis-aligned box for drawing initial states.
struct StateBox {
  State lo;
  State hi;

  void validate() const {
    if (!(lo.n1 >= 0) || !(lo.n2 >= 0) || !(hi.n1 >= lo.n1) ||
        !(hi.n2 >= lo.n2))
      throw std::invalid_argument(
          "StateBox: needs 0 <= lo <= hi in both coordinates");
  }

  State sample(Rng& rng) const {
    double n1 = lo.n1 + (hi.n1 - lo.n1) * rng.uniform01();
    double n2 = lo.n2 + (hi.n2 - lo.n2) * rng.uniform01();
    return {n1, n2};
  }

  friend bool operator==(const StateBox&, const StateBox&) = default;
};

// Covers every map fixed point, widened to 150% of the covered span per axis
// (a degenerate span falls back to one unit) and clamped at zero.
inline StateBox default_init_box(const ToggleParams& p) {
  auto fps = find_fixed_points(p, 0);
  if (fps.empty()) throw std::runtime_error("default_init_box: no fixed point");
  StateBox box{fps.front(), fps.front()};
  for (const auto& fp : fps) {
    box.lo.n1 = std::min(box.lo.n1, fp.n1);
    box.lo.n2 = std::min(box.lo.n2, fp.n2);
    box.hi.n1 = std::max(box.hi.n1, fp.n1);
    box.hi.n2 = std::max(box.hi.n2, fp.n2);
  }
  auto widen = [](double& lo, double& hi) {
    double pad = 0.25 * std::max(hi - lo, 1.0);
    lo = std::max(0.0, lo - pad);
    hi = hi + pad;
  };
  widen(box.lo.n1, box.hi.n1);
  widen(box.lo.n2, box.hi.n2);
  return box;
}

enum class SimMode { Deterministic, Stochastic };

enum class ActionSampler { UniformBinary, AlwaysOff, AlwaysOn };

struct GenerateOptions {
  int n_trajectories = 1;
  int samples_per_trajectory = 1;
  SimMode mode = SimMode::Deterministic;
  StateBox init_box;
  ActionSampler action_sampler = ActionSampler::UniformBinary;
  int avg_trajectories = 100;  // SSA runs averaged per stochastic step
  double dt = 1.0;             // control sampling period
  std::uint64_t seed = 0;
};

// Simulates n_trajectories independent rollouts under the action sampler and
// records every one-step transition. Trajectory j draws from seeds derived
// from (seed, j), so generation parallelizes without changing the result.
inline TransitionSet generate(const ToggleParams& params,
                              const GenerateOptions& opt) {
  if (opt.n_trajectories < 1 || opt.samples_per_trajectory < 1)
    throw std::invalid_argument("generate: counts must be >= 1");
  opt.init_box.validate();
  if (opt.mode == SimMode::Stochastic) {
    if (opt.avg_trajectories < 1)
      throw std::invalid_argument("generate: avg_trajectories must be >= 1");
    if (!(opt.dt > 0)) throw std::invalid_argument("generate: dt must be > 0");
  }

  TransitionSet set;
  set.provenance = opt.mode == SimMode::Deterministic
                       ? Provenance::SimulatedDeterministic
                       : Provenance::SimulatedStochastic;
  set.meta = {params, opt.seed, opt.n_trajectories,
              opt.samples_per_trajectory};
  set.triplets.resize(static_cast<std::size_t>(opt.n_trajectories) *
                      opt.samples_per_trajectory);

  parallel_for(static_cast<std::size_t>(opt.n_trajectories), [&](std::size_t j) {
    std::uint64_t base = derive_seed(opt.seed, j);
    Rng rng(derive_seed(base, 0));
    State s = opt.init_box.sample(rng);
    for (int i = 0; i < opt.samples_per_trajectory; ++i) {
      Action u = 0;
      switch (opt.action_sampler) {
        case ActionSampler::UniformBinary: u = rng.uniform_below(2); break;
        case ActionSampler::AlwaysOff: u = 0; break;
        case ActionSampler::AlwaysOn: u = 1; break;
      }
      State next =
          opt.mode == SimMode::Deterministic
              ? deterministic_step(s, u, params)
              : averaged_transition(s, u, params, opt.avg_trajectories,
                                    opt.dt, derive_seed(base, 1 + i));
      set.triplets[j * opt.samples_per_trajectory + i] = {s, u, next};
      s = next;
    }
  });
  return set;
}

// Union merge of the working set with fresh samples: plain concatenation,
// duplicates retained, current first. Metadata stays with the current set.
inline TransitionSet merge(const TransitionSet& current,
                           const TransitionSet& fresh) {
  TransitionSet out = current;
  out.triplets.insert(out.triplets.end(), fresh.triplets.begin(),
                      fresh.triplets.end());
  return out;
}

// --- persistence --------------------------------------------------------

inline void save(const TransitionSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  const auto& p = set.meta.params;
  out << "# transition-set v1\n";
  out << "# format-version: 1\n";
  out << "# provenance: " << to_string(set.provenance) << "\n";
  out << "# c1: " << fmt_double(p.c1) << "\n";
  out << "# c2: " << fmt_double(p.c2) << "\n";
  out << "# alpha1: " << fmt_double(p.alpha1) << "\n";
  out << "# alpha2: " << fmt_double(p.alpha2) << "\n";
  out << "# d1: " << fmt_double(p.d1) << "\n";
  out << "# d2: " << fmt_double(p.d2) << "\n";
  out << "# b: " << fmt_double(p.b) << "\n";
  out << "# seed: " << set.meta.seed << "\n";
  out << "# n-trajectories: " << set.meta.n_trajectories << "\n";
  out << "# samples-per-trajectory: " << set.meta.samples_per_trajectory
      << "\n";
  out << "# columns: n1\tn2\tu\tn1-next\tn2-next\n";
  for (const auto& t : set.triplets)
    out << fmt_double(t.state.n1) << '\t' << fmt_double(t.state.n2) << '\t'
        << t.action << '\t' << fmt_double(t.next_state.n1) << '\t'
        << fmt_double(t.next_state.n2) << '\n';
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

inline TransitionSet load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for reading");
  TransitionSet set;
  auto& p = set.meta.params;
  std::string line;
  int lineno = 0;
  bool version_ok = false;
  auto where = [&] { return path.string() + ":" + std::to_string(lineno); };

  while (in.peek() == '#' && std::getline(in, line)) {
    ++lineno;
    auto body = trim(std::string_view(line).substr(1));
    auto colon = body.find(':');
    if (colon == std::string_view::npos) continue;
    auto key = trim(body.substr(0, colon));
    auto value = trim(body.substr(colon + 1));
    if (key == "format-version") {
      if (value != "1")
        throw std::runtime_error(where() + ": unsupported format-version '" +
                                 std::string(value) + "'");
      version_ok = true;
    } else if (key == "provenance") {
      set.provenance = provenance_from(value);
    } else if (key == "c1") p.c1 = parse_double(value, where() + ": c1");
    else if (key == "c2") p.c2 = parse_double(value, where() + ": c2");
    else if (key == "alpha1") p.alpha1 = parse_double(value, where() + ": alpha1");
    else if (key == "alpha2") p.alpha2 = parse_double(value, where() + ": alpha2");
    else if (key == "d1") p.d1 = parse_double(value, where() + ": d1");
    else if (key == "d2") p.d2 = parse_double(value, where() + ": d2");
    else if (key == "b") p.b = parse_double(value, where() + ": b");
    else if (key == "seed") set.meta.seed = parse_u64(value, where() + ": seed");
    else if (key == "n-trajectories")
      set.meta.n_trajectories =
          static_cast<int>(parse_int(value, where() + ": n-trajectories"));
    else if (key == "samples-per-trajectory")
      set.meta.samples_per_trajectory = static_cast<int>(
          parse_int(value, where() + ": samples-per-trajectory"));
  }
  if (!version_ok)
    throw std::runtime_error(path.string() +
                             ": missing format-version header");

  const char* columns[5] = {"n1", "n2", "u", "n1-next", "n2-next"};
  while (std::getline(in, line)) {
    ++lineno;
    auto text = trim(line);
    if (text.empty()) continue;
    auto fields = split_fields(text, '\t');
    if (fields.size() != 5)
      throw std::runtime_error(where() + ": expected 5 columns, got " +
                               std::to_string(fields.size()));
    TransitionTriplet t;
    double vals[5];
    for (int c = 0; c < 5; ++c) {
      vals[c] = parse_double(fields[c],
                             where() + ": column " + columns[c]);
      if (!std::isfinite(vals[c]))
        throw std::runtime_error(where() + ": non-finite value in column " +
                                 columns[c]);
    }
    for (int c : {0, 1, 3, 4})
      if (vals[c] < 0.0)
        throw std::runtime_error(where() +
                                 ": negative concentration in column " +
                                 columns[c]);
    if (vals[2] != 0.0 && vals[2] != 1.0)
      throw std::runtime_error(where() + ": column u must be 0 or 1");
    t.state = {vals[0], vals[1]};
    t.action = static_cast<Action>(vals[2]);
    t.next_state = {vals[3], vals[4]};
    set.triplets.push_back(t);
  }
  if (set.triplets.empty())
    throw std::runtime_error("empty transition set");
  return set;
}

}  // namespace tsctl

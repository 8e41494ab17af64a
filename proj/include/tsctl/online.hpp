#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsctl/dataset.hpp"
#include "tsctl/fqi.hpp"
#include "tsctl/model.hpp"

namespace tsctl {

// Exploration schedule. Note the inverted convention used throughout: epsilon
// is the probability of acting GREEDILY, and it increases over the episode.
struct EpsilonSchedule {
  enum class Kind { Constant, LinearRamp };
  Kind kind = Kind::LinearRamp;
  double start = 0.3;
  double end = 1.0;
  int ramp_steps = 100;

  static EpsilonSchedule constant(double eps) {
    return {Kind::Constant, eps, eps, 1};
  }
  static EpsilonSchedule linear(double start, double end, int ramp_steps) {
    return {Kind::LinearRamp, start, end, ramp_steps};
  }

  void validate() const {
    if (start < 0 || start > 1 || end < 0 || end > 1)
      throw std::invalid_argument("EpsilonSchedule: values must be in [0,1]");
    if (kind == Kind::LinearRamp) {
      if (end < start)
        throw std::invalid_argument(
            "EpsilonSchedule: ramp must be non-decreasing");
      if (ramp_steps < 1)
        throw std::invalid_argument("EpsilonSchedule: ramp_steps must be >= 1");
    }
  }

  double at(int t) const {
    if (kind == Kind::Constant) return start;
    if (t >= ramp_steps) return end;
    return start + (end - start) * static_cast<double>(t) / ramp_steps;
  }

  friend bool operator==(const EpsilonSchedule&,
                         const EpsilonSchedule&) = default;
};

struct OnlineConfig {
  int n_inner = 1;     // Bellman-refit sweeps per collected batch
  int batch_size = 1;  // transitions collected between refits
  EpsilonSchedule epsilon;
  int horizon = 200;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_inner < 0)
      throw std::invalid_argument("OnlineConfig: n_inner must be >= 0");
    if (batch_size < 1)
      throw std::invalid_argument("OnlineConfig: batch_size must be >= 1");
    if (horizon < batch_size)
      throw std::invalid_argument("OnlineConfig: horizon must be >= batch_size");
    epsilon.validate();
  }

  friend bool operator==(const OnlineConfig&, const OnlineConfig&) = default;
};

struct StepRecord {
  int t = 0;
  State state;
  Action action = 0;
  bool greedy = true;
  double cost = 0.0;
  State next_state;
};

struct EpisodeLog {
  std::vector<StepRecord> steps;
  double gamma = 0.75;
  double cumulative_discounted_cost = 0.0;
  std::string abort_reason;  // empty on a clean run
};

// Closed-loop plant: either the deterministic map or the 100-trajectory
// averaged SSA transition, sampled once per control period.
struct Environment {
  enum class Kind { Deterministic, StochasticAveraged };
  Kind kind = Kind::Deterministic;
  ToggleParams params;
  int avg_trajectories = 100;
  double dt = 1.0;

  State step(const State& s, Action u, std::uint64_t seed) const {
    if (kind == Kind::Deterministic) return deterministic_step(s, u, params);
    return averaged_transition(s, u, params, avg_trajectories, dt, seed);
  }
};

namespace detail {
// Shared env-seed stream so that a pure-greedy online run and
// closed_loop_run see identical stochastic transitions for the same seed.
inline std::uint64_t env_step_seed(std::uint64_t run_seed, int t) {
  return derive_seed(run_seed, 0x456e7600ULL + static_cast<std::uint64_t>(t));
}
inline std::uint64_t refit_seed(std::uint64_t run_seed, int batch, int sweep) {
  return derive_seed(run_seed, 0x52664900ULL +
                                   static_cast<std::uint64_t>(batch) * 64 +
                                   static_cast<std::uint64_t>(sweep));
}
}  // namespace detail

// Greedy with probability epsilon_t, uniform otherwise; the flag reports
// which branch was taken.
inline std::pair<Action, bool> epsilon_greedy_action(const Policy& policy,
                                                     const State& s,
                                                     double epsilon_t,
                                                     Rng& rng) {
  if (!(epsilon_t >= 0.0) || !(epsilon_t <= 1.0))
    throw std::invalid_argument("epsilon_greedy_action: epsilon not in [0,1]");
  if (rng.bernoulli(epsilon_t)) return {greedy_action(policy, s), true};
  return {rng.uniform_below(2), false};
}

inline void finalize_cumulative(EpisodeLog& log) {
  double acc = 0.0;
  double disc = 1.0;
  for (const auto& r : log.steps) {
    acc += disc * r.cost;
    disc *= log.gamma;
  }
  log.cumulative_discounted_cost = acc;
}

// Pure exploitation rollout of a fixed policy.
inline EpisodeLog closed_loop_run(const Policy& policy, const Environment& env,
                                  const CostWeights& weights, int horizon,
                                  State initial, std::uint64_t seed) {
  if (horizon < 1)
    throw std::invalid_argument("closed_loop_run: horizon must be >= 1");
  EpisodeLog log;
  log.gamma = policy.gamma;
  State s = initial;
  for (int t = 0; t < horizon; ++t) {
    Action u = greedy_action(policy, s);
    State next;
    try {
      next = env.step(s, u, detail::env_step_seed(seed, t));
    } catch (const std::exception& e) {
      log.abort_reason = e.what();
      break;
    }
    log.steps.push_back({t, s, u, true, cost(s, u, weights), next});
    s = next;
  }
  finalize_cumulative(log);
  return log;
}

struct OnlineResult {
  Policy policy;
  EpisodeLog log;
  int refits = 0;           // fitted-sweep count actually executed
  std::size_t final_data_size = 0;  // |historical| + collected transitions
};

// Online adaptation (batch policy + live data): act epsilon-greedily, merge
// each collected batch into the working set, then run n_inner sweeps of the
// Bellman target-and-refit update over the whole set and carry the refreshed
// Q forward.
inline OnlineResult online_run(const Policy& initial_policy,
                               const TransitionSet& historical,
                               const Environment& env,
                               const CostWeights& weights,
                               const FqiConfig& fqi_cfg,
                               const OnlineConfig& online_cfg, State initial) {
  weights.validate();
  fqi_cfg.validate();
  online_cfg.validate();
  if (historical.triplets.empty())
    throw std::invalid_argument("online_run: empty historical set");

  OnlineResult result;
  result.policy = initial_policy;
  result.policy.gamma = fqi_cfg.gamma;
  result.policy.weights = weights;
  result.policy.regressor = fqi_cfg.regressor;
  result.log.gamma = fqi_cfg.gamma;

  TransitionSet working = historical;
  Rng action_rng(derive_seed(online_cfg.seed, 0));
  State s = initial;
  int t = 0;
  int batch_index = 0;
  bool aborted = false;

  while (t < online_cfg.horizon && !aborted) {
    TransitionSet fresh;
    fresh.provenance = Provenance::OnlineMeasured;
    for (int i = 0; i < online_cfg.batch_size && t < online_cfg.horizon; ++i) {
      double eps = online_cfg.epsilon.at(t);
      auto [u, greedy] = epsilon_greedy_action(result.policy, s, eps,
                                               action_rng);
      State next;
      try {
        next = env.step(s, u, detail::env_step_seed(online_cfg.seed, t));
      } catch (const std::exception& e) {
        result.log.abort_reason = e.what();
        aborted = true;
        break;
      }
      result.log.steps.push_back({t, s, u, greedy, cost(s, u, weights), next});
      fresh.triplets.push_back({s, u, next});
      s = next;
      ++t;
    }
    if (aborted || fresh.triplets.empty()) break;
    working = merge(working, fresh);

    auto rows = feature_rows(working.triplets);
    for (int sweep = 1; sweep <= online_cfg.n_inner; ++sweep) {
      auto targets = bellman_targets(working.triplets, result.policy.q,
                                     weights, fqi_cfg.gamma);
      RegressorConfig reg = fqi_cfg.regressor;
      reg.seed = detail::refit_seed(online_cfg.seed, batch_index, sweep);
      result.policy.q = fit(rows, targets, reg);
      ++result.refits;
    }
    ++batch_index;
  }

  result.final_data_size = working.triplets.size();
  finalize_cumulative(result.log);
  return result;
}

// --- episode log persistence -----------------------------------------------

inline void save_episode_log(
    const EpisodeLog& log, const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& header = {}) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  out << "# episode-log v1\n";
  out << "# format-version: 1\n";
  out << "# gamma: " << fmt_double(log.gamma) << "\n";
  out << "# cumulative-discounted-cost: "
      << fmt_double(log.cumulative_discounted_cost) << "\n";
  for (const auto& [k, v] : header) out << "# " << k << ": " << v << "\n";
  if (!log.abort_reason.empty())
    out << "# aborted: " << log.abort_reason << "\n";
  out << "# columns: t\tn1\tn2\tu\tgreedy\tcost\tn1-next\tn2-next\n";
  for (const auto& r : log.steps)
    out << r.t << '\t' << fmt_double(r.state.n1) << '\t'
        << fmt_double(r.state.n2) << '\t' << r.action << '\t'
        << (r.greedy ? 1 : 0) << '\t' << fmt_double(r.cost) << '\t'
        << fmt_double(r.next_state.n1) << '\t' << fmt_double(r.next_state.n2)
        << '\n';
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

inline EpisodeLog load_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for reading");
  EpisodeLog log;
  std::string line;
  while (in.peek() == '#' && std::getline(in, line)) {
    auto body = trim(std::string_view(line).substr(1));
    auto colon = body.find(':');
    if (colon == std::string_view::npos) continue;
    auto key = trim(body.substr(0, colon));
    auto value = trim(body.substr(colon + 1));
    if (key == "gamma") log.gamma = parse_double(value, "log gamma");
    else if (key == "cumulative-discounted-cost")
      log.cumulative_discounted_cost =
          parse_double(value, "log cumulative cost");
    else if (key == "aborted") log.abort_reason = std::string(value);
  }
  while (std::getline(in, line)) {
    auto text = trim(line);
    if (text.empty()) continue;
    auto f = split_fields(text, '\t');
    if (f.size() != 8)
      throw std::runtime_error(path.string() +
                               ": episode log row needs 8 columns");
    StepRecord r;
    r.t = static_cast<int>(parse_int(f[0], "log t"));
    r.state = {parse_double(f[1], "log n1"), parse_double(f[2], "log n2")};
    r.action = static_cast<Action>(parse_int(f[3], "log u"));
    r.greedy = parse_int(f[4], "log greedy") != 0;
    r.cost = parse_double(f[5], "log cost");
    r.next_state = {parse_double(f[6], "log n1-next"),
                    parse_double(f[7], "log n2-next")};
    log.steps.push_back(r);
  }
  return log;
}

}  // namespace tsctl

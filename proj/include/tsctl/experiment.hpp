#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsctl/dataset.hpp"
#include "tsctl/fqi.hpp"
#include "tsctl/model.hpp"
#include "tsctl/online.hpp"

namespace tsctl {

// --- parameter presets ------------------------------------------------------

enum class PresetName { SettingOne, SettingTwo };

inline ToggleParams preset(PresetName name) {
  switch (name) {
    case PresetName::SettingOne:
      return {30.0, 10.0, 1.0, 3.0, 1.0, 1.0, 20.0};
    case PresetName::SettingTwo:
      return {40.0, 60.0, 3.0, 1.0, 1.0, 1.0, 20.0};
  }
  throw std::invalid_argument("unknown preset");
}

inline const char* to_string(PresetName n) {
  return n == PresetName::SettingOne ? "setting-one" : "setting-two";
}

inline PresetName preset_from(std::string_view s) {
  if (s == "setting-one") return PresetName::SettingOne;
  if (s == "setting-two") return PresetName::SettingTwo;
  throw std::invalid_argument("unknown preset name '" + std::string(s) + "'");
}

// --- scenario geometry ------------------------------------------------------

// Ball around the protein-1-dominant fixed point; radius is 10% of the
// distance between the two resting states.
struct TargetRegion {
  State center;
  double radius = 0.0;

  bool contains(const State& s) const { return distance(s, center) <= radius; }
};

// Target for controlling `controlled`. A monostable parameter set (no second
// fixed point) centers on its single protein-1-dominant rest state and
// borrows the radius scale from the bistable reference system.
inline TargetRegion toggle_target_region(const ToggleParams& controlled,
                                         const ToggleParams& reference) {
  auto ref_tp = toggle_points(reference);
  double radius = 0.1 * distance(ref_tp.n1_high, ref_tp.n2_high);
  auto fps = find_fixed_points(controlled, 0);
  if (fps.empty())
    throw std::runtime_error("toggle_target_region: no fixed point");
  State center = fps.front();
  for (const auto& fp : fps)
    if (fp.n1 > center.n1) center = fp;
  return {center, radius};
}

inline TargetRegion toggle_target_region(const ToggleParams& p) {
  return toggle_target_region(p, p);
}

// Resting start state: the protein-2-dominant fixed point rounded to counts.
inline State default_initial_state(const ToggleParams& reference) {
  auto tp = toggle_points(reference);
  return {std::nearbyint(tp.n2_high.n1), std::nearbyint(tp.n2_high.n2)};
}

// Region for a standalone run on `params`: own toggle geometry when
// bistable, otherwise a ball around the single rest state scaled by the
// distance from the start state.
inline TargetRegion region_for_run(const ToggleParams& params,
                                   const State& initial) {
  auto fps = find_fixed_points(params, 0);
  if (fps.empty())
    throw std::runtime_error("region_for_run: no fixed point");
  if (fps.size() >= 2) return toggle_target_region(params);
  return {fps.back(), 0.1 * distance(fps.back(), initial)};
}

// First step index (1-based, as steps-to-target) whose successor state lies
// in the region; -1 if the episode never reaches it.
inline int steps_to_target(const EpisodeLog& log, const TargetRegion& region) {
  for (const auto& r : log.steps)
    if (region.contains(r.next_state)) return r.t + 1;
  return -1;
}

// --- policy grid ------------------------------------------------------------

struct GridSpec {
  StateBox bounds;
  int resolution = 50;

  void validate() const {
    bounds.validate();
    if (resolution < 2)
      throw std::invalid_argument("GridSpec: resolution must be >= 2");
    if (!(bounds.hi.n1 > bounds.lo.n1) || !(bounds.hi.n2 > bounds.lo.n2))
      throw std::invalid_argument("GridSpec: bounds must be non-degenerate");
  }
};

inline StateBox default_grid_bounds(const ToggleParams& p) {
  auto fps = find_fixed_points(p, 0);
  double n1_max = 1.0, n2_max = 1.0;
  for (const auto& fp : fps) {
    n1_max = std::max(n1_max, fp.n1);
    n2_max = std::max(n2_max, fp.n2);
  }
  return {{0.0, 0.0}, {1.3 * n1_max, 1.3 * n2_max}};
}

struct GridCell {
  State s;
  Action a;
};

// Greedy action on a regular resolution x resolution lattice, row-major with
// n2 as the slow index (one n2-slice per row block).
inline std::vector<GridCell> policy_grid(const Policy& policy,
                                         const GridSpec& spec) {
  spec.validate();
  std::vector<GridCell> cells;
  cells.reserve(static_cast<std::size_t>(spec.resolution) * spec.resolution);
  for (int j = 0; j < spec.resolution; ++j) {
    double n2 = spec.bounds.lo.n2 + (spec.bounds.hi.n2 - spec.bounds.lo.n2) *
                                        j / (spec.resolution - 1);
    for (int i = 0; i < spec.resolution; ++i) {
      double n1 = spec.bounds.lo.n1 + (spec.bounds.hi.n1 - spec.bounds.lo.n1) *
                                          i / (spec.resolution - 1);
      State s{n1, n2};
      cells.push_back({s, greedy_action(policy, s)});
    }
  }
  return cells;
}

inline void export_policy_grid(const Policy& policy, const GridSpec& spec,
                               const std::filesystem::path& path) {
  auto cells = policy_grid(policy, spec);
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  out << "# policy-grid v1\n";
  out << "# format-version: 1\n";
  out << "# resolution: " << spec.resolution << "\n";
  out << "# n1-range: " << fmt_double(spec.bounds.lo.n1) << " "
      << fmt_double(spec.bounds.hi.n1) << "\n";
  out << "# n2-range: " << fmt_double(spec.bounds.lo.n2) << " "
      << fmt_double(spec.bounds.hi.n2) << "\n";
  out << "# columns: n1\tn2\taction\n";
  for (const auto& c : cells)
    out << fmt_double(c.s.n1) << '\t' << fmt_double(c.s.n2) << '\t' << c.a
        << '\n';
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

// Per-n2-slice structure of the action partition: a slice is "monotone" when
// the pulse region is a prefix in n1 (all 1s before all 0s); the slice
// threshold is the midpoint between the last pulsed cell and its neighbor.
struct ThresholdStats {
  double monotone_fraction = 0.0;
  double mean_threshold = 0.0;
};

inline ThresholdStats grid_threshold_stats(const std::vector<GridCell>& cells,
                                           const GridSpec& spec) {
  int res = spec.resolution;
  if (cells.size() != static_cast<std::size_t>(res) * res)
    throw std::invalid_argument("grid_threshold_stats: size mismatch");
  double cell_w = (spec.bounds.hi.n1 - spec.bounds.lo.n1) / (res - 1);
  int monotone = 0;
  double thr_sum = 0.0;
  for (int j = 0; j < res; ++j) {
    bool mono = true;
    int prev = -1;
    int last_pulse = -1;
    for (int i = 0; i < res; ++i) {
      int a = cells[static_cast<std::size_t>(j) * res + i].a;
      if (prev == 0 && a == 1) mono = false;
      if (a == 1) last_pulse = i;
      prev = a;
    }
    monotone += mono;
    thr_sum += last_pulse < 0 ? spec.bounds.lo.n1
                              : spec.bounds.lo.n1 + (last_pulse + 0.5) * cell_w;
  }
  return {static_cast<double>(monotone) / res, thr_sum / res};
}

// --- experiment configuration ----------------------------------------------

// One file fully determines an experiment. Values are stored resolved;
// parse_experiment_config() accepts "auto" in selected fields and resolves
// them immediately, so rendering always writes concrete numbers.
struct ExperimentConfig {
  std::string preset_name = "custom";  // setting-one | setting-two | custom
  ToggleParams params;
  SimMode mode = SimMode::Deterministic;
  int avg_trajectories = 100;
  double dt = 1.0;

  CostWeights weights;

  double gamma = 0.75;
  int n_iterations = 33;

  int n_trees = 50;
  int k_splits = 3;
  int n_min = 2;

  int n_trajectories = 500;
  int samples_per_trajectory = 50;
  StateBox init_box;
  ActionSampler action_sampler = ActionSampler::UniformBinary;

  int n_inner = 1;
  int batch_size = 1;
  EpsilonSchedule epsilon = EpsilonSchedule::linear(0.3, 1.0, 100);

  int horizon = 200;
  State initial_state;
  int grid_resolution = 50;
  std::string out_dir = "out";
  std::uint64_t master_seed = 1;

  friend bool operator==(const ExperimentConfig&,
                         const ExperimentConfig&) = default;

  RegressorConfig regressor(std::uint64_t seed) const {
    return {n_trees, k_splits, n_min, seed};
  }
  FqiConfig fqi(std::uint64_t seed) const {
    return {gamma, n_iterations, regressor(seed)};
  }

  // Collects every violated field so a bad file is diagnosed in one pass.
  void validate() const {
    std::vector<std::string> bad;
    auto check = [&](bool ok, const char* field, const char* why) {
      if (!ok) bad.push_back(std::string(field) + ": " + why);
    };
    check(params.c1 > 0, "model.c1", "must be positive");
    check(params.c2 > 0, "model.c2", "must be positive");
    check(params.alpha1 > 0, "model.alpha1", "must be positive");
    check(params.alpha2 > 0, "model.alpha2", "must be positive");
    check(params.d1 > 0, "model.d1", "must be positive");
    check(params.d2 > 0, "model.d2", "must be positive");
    check(params.b >= 0, "model.b", "must be nonnegative");
    check(avg_trajectories >= 1, "model.avg-trajectories", "must be >= 1");
    check(dt > 0, "model.dt", "must be positive");
    check(weights.w2 > 1, "cost.w2", "must exceed 1");
    check(weights.wu >= 0, "cost.wu", "must be nonnegative");
    check(gamma > 0 && gamma < 1, "fqi.gamma", "must be in (0,1)");
    check(n_iterations >= 1, "fqi.n-iterations", "must be >= 1");
    check(n_trees >= 1, "regressor.n-trees", "must be >= 1");
    check(k_splits >= 1 && k_splits <= kFeatureDim, "regressor.k-splits",
          "must be in [1,3]");
    check(n_min >= 2, "regressor.n-min", "must be >= 2");
    check(n_trajectories >= 1, "dataset.n-trajectories", "must be >= 1");
    check(samples_per_trajectory >= 1, "dataset.samples-per-trajectory",
          "must be >= 1");
    check(init_box.lo.n1 >= 0 && init_box.lo.n2 >= 0 &&
              init_box.hi.n1 >= init_box.lo.n1 &&
              init_box.hi.n2 >= init_box.lo.n2,
          "dataset.init-box", "needs 0 <= lo <= hi");
    check(n_inner >= 0, "online.n-inner", "must be >= 0");
    check(batch_size >= 1, "online.batch-size", "must be >= 1");
    check(epsilon.start >= 0 && epsilon.start <= 1 && epsilon.end >= 0 &&
              epsilon.end <= 1,
          "online.epsilon", "must be in [0,1]");
    check(epsilon.kind != EpsilonSchedule::Kind::LinearRamp ||
              (epsilon.end >= epsilon.start && epsilon.ramp_steps >= 1),
          "online.epsilon", "ramp must be non-decreasing over >= 1 steps");
    check(horizon >= 1, "run.horizon", "must be >= 1");
    check(horizon >= batch_size, "run.horizon", "must be >= batch-size");
    check(initial_state.n1 >= 0 && initial_state.n2 >= 0, "run.initial-state",
          "must be nonnegative");
    check(grid_resolution >= 2, "run.grid-resolution", "must be >= 2");
    check(!out_dir.empty(), "run.out-dir", "must not be empty");
    if (!bad.empty()) {
      std::string msg = "invalid experiment config:";
      for (const auto& b : bad) msg += "\n  " + b;
      throw std::invalid_argument(msg);
    }
  }
};

inline const char* to_string(SimMode m) {
  return m == SimMode::Deterministic ? "deterministic" : "stochastic";
}

inline const char* to_string(ActionSampler a) {
  switch (a) {
    case ActionSampler::UniformBinary: return "uniform";
    case ActionSampler::AlwaysOff: return "always-off";
    case ActionSampler::AlwaysOn: return "always-on";
  }
  return "?";
}

// Standard configuration for a preset; n-min and the exploration ramp follow
// the mode and horizon.
inline ExperimentConfig default_experiment_config(
    PresetName name, SimMode mode = SimMode::Deterministic) {
  ExperimentConfig cfg;
  cfg.preset_name = to_string(name);
  cfg.params = preset(name);
  cfg.mode = mode;
  cfg.n_iterations = default_n_iterations(cfg.gamma, 1e-4);
  cfg.n_min = mode == SimMode::Deterministic ? 2 : 5;
  cfg.init_box = default_init_box(cfg.params);
  cfg.epsilon = EpsilonSchedule::linear(0.3, 1.0, cfg.horizon / 2);
  // reference geometry comes from the bistable setting
  auto ref = name == PresetName::SettingOne ? cfg.params
                                            : preset(PresetName::SettingOne);
  cfg.initial_state = default_initial_state(ref);
  return cfg;
}

inline std::string render_experiment_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "# tsctl experiment config v1\n";
  out << "[model]\n";
  out << "preset = " << c.preset_name << "\n";
  out << "c1 = " << fmt_double(c.params.c1) << "\n";
  out << "c2 = " << fmt_double(c.params.c2) << "\n";
  out << "alpha1 = " << fmt_double(c.params.alpha1) << "\n";
  out << "alpha2 = " << fmt_double(c.params.alpha2) << "\n";
  out << "d1 = " << fmt_double(c.params.d1) << "\n";
  out << "d2 = " << fmt_double(c.params.d2) << "\n";
  out << "b = " << fmt_double(c.params.b) << "\n";
  out << "mode = " << to_string(c.mode) << "\n";
  out << "avg-trajectories = " << c.avg_trajectories << "\n";
  out << "dt = " << fmt_double(c.dt) << "\n";
  out << "\n[cost]\n";
  out << "w2 = " << fmt_double(c.weights.w2) << "\n";
  out << "wu = " << fmt_double(c.weights.wu) << "\n";
  out << "\n[fqi]\n";
  out << "gamma = " << fmt_double(c.gamma) << "\n";
  out << "n-iterations = " << c.n_iterations << "\n";
  out << "\n[regressor]\n";
  out << "n-trees = " << c.n_trees << "\n";
  out << "k-splits = " << c.k_splits << "\n";
  out << "n-min = " << c.n_min << "\n";
  out << "\n[dataset]\n";
  out << "n-trajectories = " << c.n_trajectories << "\n";
  out << "samples-per-trajectory = " << c.samples_per_trajectory << "\n";
  out << "init-box = " << fmt_double(c.init_box.lo.n1) << " "
      << fmt_double(c.init_box.hi.n1) << " " << fmt_double(c.init_box.lo.n2)
      << " " << fmt_double(c.init_box.hi.n2) << "\n";
  out << "action-sampler = " << to_string(c.action_sampler) << "\n";
  out << "\n[online]\n";
  out << "n-inner = " << c.n_inner << "\n";
  out << "batch-size = " << c.batch_size << "\n";
  out << "epsilon-kind = "
      << (c.epsilon.kind == EpsilonSchedule::Kind::Constant ? "constant"
                                                            : "linear-ramp")
      << "\n";
  out << "epsilon-start = " << fmt_double(c.epsilon.start) << "\n";
  out << "epsilon-end = " << fmt_double(c.epsilon.end) << "\n";
  out << "epsilon-ramp-steps = " << c.epsilon.ramp_steps << "\n";
  out << "\n[run]\n";
  out << "horizon = " << c.horizon << "\n";
  out << "initial-state = " << fmt_double(c.initial_state.n1) << " "
      << fmt_double(c.initial_state.n2) << "\n";
  out << "grid-resolution = " << c.grid_resolution << "\n";
  out << "out-dir = " << c.out_dir << "\n";
  out << "master-seed = " << c.master_seed << "\n";
  return out.str();
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig c;
  bool preset_given = false;
  bool init_box_auto = true, initial_auto = true;
  bool n_iterations_auto = true, n_min_auto = true, ramp_auto = true;

  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = std::string(t.substr(1, t.size() - 2));
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    std::string key = std::string(trim(t.substr(0, eq)));
    std::string value = std::string(trim(t.substr(eq + 1)));
    std::string where = "config line " + std::to_string(lineno) + " (" +
                        section + "." + key + ")";
    auto num = [&] { return parse_double(value, where); };
    auto integer = [&] { return static_cast<int>(parse_int(value, where)); };
    auto pair_of = [&](double& a, double& b) {
      auto fields = split_fields(value, ' ');
      std::vector<std::string_view> nonempty;
      for (auto f : fields)
        if (!trim(f).empty()) nonempty.push_back(trim(f));
      if (nonempty.size() != 2)
        throw std::invalid_argument(where + ": expected two numbers");
      a = parse_double(nonempty[0], where);
      b = parse_double(nonempty[1], where);
    };

    if (section == "model") {
      if (key == "preset") {
        c.preset_name = value;
        if (value != "custom") {
          c.params = preset(preset_from(value));
          preset_given = true;
        }
      } else if (key == "c1") { if (!preset_given) c.params.c1 = num(); }
      else if (key == "c2") { if (!preset_given) c.params.c2 = num(); }
      else if (key == "alpha1") { if (!preset_given) c.params.alpha1 = num(); }
      else if (key == "alpha2") { if (!preset_given) c.params.alpha2 = num(); }
      else if (key == "d1") { if (!preset_given) c.params.d1 = num(); }
      else if (key == "d2") { if (!preset_given) c.params.d2 = num(); }
      else if (key == "b") { if (!preset_given) c.params.b = num(); }
      else if (key == "mode") {
        if (value == "deterministic") c.mode = SimMode::Deterministic;
        else if (value == "stochastic") c.mode = SimMode::Stochastic;
        else throw std::invalid_argument(where + ": unknown mode");
      } else if (key == "avg-trajectories") c.avg_trajectories = integer();
      else if (key == "dt") c.dt = num();
      else throw std::invalid_argument(where + ": unknown key");
    } else if (section == "cost") {
      if (key == "w2") c.weights.w2 = num();
      else if (key == "wu") c.weights.wu = num();
      else throw std::invalid_argument(where + ": unknown key");
    } else if (section == "fqi") {
      if (key == "gamma") c.gamma = num();
      else if (key == "n-iterations") {
        if (value != "auto") { c.n_iterations = integer(); n_iterations_auto = false; }
      } else throw std::invalid_argument(where + ": unknown key");
    } else if (section == "regressor") {
      if (key == "n-trees") c.n_trees = integer();
      else if (key == "k-splits") c.k_splits = integer();
      else if (key == "n-min") {
        if (value != "auto") { c.n_min = integer(); n_min_auto = false; }
      } else throw std::invalid_argument(where + ": unknown key");
    } else if (section == "dataset") {
      if (key == "n-trajectories") c.n_trajectories = integer();
      else if (key == "samples-per-trajectory")
        c.samples_per_trajectory = integer();
      else if (key == "init-box") {
        if (value != "auto") {
          auto fields = split_fields(value, ' ');
          std::vector<std::string_view> nonempty;
          for (auto f : fields)
            if (!trim(f).empty()) nonempty.push_back(trim(f));
          if (nonempty.size() != 4)
            throw std::invalid_argument(where + ": expected 4 numbers or auto");
          c.init_box.lo.n1 = parse_double(nonempty[0], where);
          c.init_box.hi.n1 = parse_double(nonempty[1], where);
          c.init_box.lo.n2 = parse_double(nonempty[2], where);
          c.init_box.hi.n2 = parse_double(nonempty[3], where);
          init_box_auto = false;
        }
      } else if (key == "action-sampler") {
        if (value == "uniform") c.action_sampler = ActionSampler::UniformBinary;
        else if (value == "always-off") c.action_sampler = ActionSampler::AlwaysOff;
        else if (value == "always-on") c.action_sampler = ActionSampler::AlwaysOn;
        else throw std::invalid_argument(where + ": unknown action sampler");
      } else throw std::invalid_argument(where + ": unknown key");
    } else if (section == "online") {
      if (key == "n-inner") c.n_inner = integer();
      else if (key == "batch-size") c.batch_size = integer();
      else if (key == "epsilon-kind") {
        if (value == "constant") c.epsilon.kind = EpsilonSchedule::Kind::Constant;
        else if (value == "linear-ramp")
          c.epsilon.kind = EpsilonSchedule::Kind::LinearRamp;
        else throw std::invalid_argument(where + ": unknown epsilon kind");
      } else if (key == "epsilon-start") c.epsilon.start = num();
      else if (key == "epsilon-end") c.epsilon.end = num();
      else if (key == "epsilon-ramp-steps") {
        if (value != "auto") { c.epsilon.ramp_steps = integer(); ramp_auto = false; }
      } else throw std::invalid_argument(where + ": unknown key");
    } else if (section == "run") {
      if (key == "horizon") c.horizon = integer();
      else if (key == "initial-state") {
        if (value != "auto") {
          pair_of(c.initial_state.n1, c.initial_state.n2);
          initial_auto = false;
        }
      } else if (key == "grid-resolution") c.grid_resolution = integer();
      else if (key == "out-dir") c.out_dir = value;
      else if (key == "master-seed") c.master_seed = parse_u64(value, where);
      else throw std::invalid_argument(where + ": unknown key");
    } else {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": key outside any known section");
    }
  }

  // resolve the remaining auto values to concrete ones; an out-of-range
  // gamma is left for validate() so every violated field gets reported
  if (n_iterations_auto && c.gamma > 0 && c.gamma < 1)
    c.n_iterations = default_n_iterations(c.gamma, 1e-4);
  if (n_min_auto) c.n_min = c.mode == SimMode::Deterministic ? 2 : 5;
  if (ramp_auto) c.epsilon.ramp_steps = std::max(1, c.horizon / 2);
  bool params_usable = c.params.c1 > 0 && c.params.c2 > 0 &&
                       c.params.alpha1 > 0 && c.params.alpha2 > 0 &&
                       c.params.d1 > 0 && c.params.d2 > 0 && c.params.b >= 0;
  if (init_box_auto && params_usable) c.init_box = default_init_box(c.params);
  if (initial_auto && params_usable) {
    auto fps = find_fixed_points(c.params, 0);
    if (fps.size() >= 2) {
      c.initial_state = default_initial_state(c.params);
    } else {
      throw std::invalid_argument(
          "run.initial-state: auto requires a bistable parameter set; give "
          "explicit values");
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment_config(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), {});
  return parse_experiment_config(text);
}

// --- pipeline stages ---------------------------------------------------------

enum class Command {
  GenDataset,
  Train,
  Rollout,
  Online,
  PolicyGrid,
  ReproduceFig2,
  ReproduceFig3,
  ReproduceFig4,
};

inline Command command_from(std::string_view s) {
  if (s == "gen-dataset") return Command::GenDataset;
  if (s == "train") return Command::Train;
  if (s == "rollout") return Command::Rollout;
  if (s == "online") return Command::Online;
  if (s == "policy-grid") return Command::PolicyGrid;
  if (s == "reproduce-fig2") return Command::ReproduceFig2;
  if (s == "reproduce-fig3") return Command::ReproduceFig3;
  if (s == "reproduce-fig4") return Command::ReproduceFig4;
  throw std::invalid_argument("unknown command '" + std::string(s) + "'");
}

// Stage seeds fan out from the master seed through fixed ordinals, so any
// stage can be rerun independently and still see the same stream.
enum : std::uint64_t {
  kSeedDataset = 1,
  kSeedTrain = 2,
  kSeedRollout = 3,
  kSeedOnline = 4,
  kSeedRolloutTwo = 6,
};

inline std::uint64_t stage_seed(std::uint64_t master, std::uint64_t ordinal) {
  return derive_seed(master, ordinal);
}

namespace detail {

inline std::filesystem::path artifact(const ExperimentConfig& c,
                                      const char* name) {
  return std::filesystem::path(c.out_dir) / name;
}

inline void require_artifact(const std::filesystem::path& p,
                             const char* what) {
  if (!std::filesystem::exists(p))
    throw std::runtime_error(std::string(what) + " not found: '" + p.string() +
                             "' (run the producing stage first)");
}

inline GenerateOptions generate_options(const ExperimentConfig& c) {
  GenerateOptions opt;
  opt.n_trajectories = c.n_trajectories;
  opt.samples_per_trajectory = c.samples_per_trajectory;
  opt.mode = c.mode;
  opt.init_box = c.init_box;
  opt.action_sampler = c.action_sampler;
  opt.avg_trajectories = c.avg_trajectories;
  opt.dt = c.dt;
  opt.seed = stage_seed(c.master_seed, kSeedDataset);
  return opt;
}

inline Environment environment_for(const ExperimentConfig& c,
                                   const ToggleParams& params) {
  Environment env;
  env.kind = c.mode == SimMode::Deterministic
                 ? Environment::Kind::Deterministic
                 : Environment::Kind::StochasticAveraged;
  env.params = params;
  env.avg_trajectories = c.avg_trajectories;
  env.dt = c.dt;
  return env;
}

inline OnlineConfig online_config(const ExperimentConfig& c) {
  OnlineConfig ocfg;
  ocfg.n_inner = c.n_inner;
  ocfg.batch_size = c.batch_size;
  ocfg.epsilon = c.epsilon;
  ocfg.horizon = c.horizon;
  ocfg.seed = stage_seed(c.master_seed, kSeedOnline);
  return ocfg;
}

inline std::vector<std::pair<std::string, std::string>> log_header(
    const ExperimentConfig& c, const char* run_label,
    const ToggleParams& controlled, std::uint64_t run_seed) {
  return {
      {"run", run_label},
      {"mode", to_string(c.mode)},
      {"controlled-c1", fmt_double(controlled.c1)},
      {"controlled-c2", fmt_double(controlled.c2)},
      {"controlled-alpha1", fmt_double(controlled.alpha1)},
      {"controlled-alpha2", fmt_double(controlled.alpha2)},
      {"controlled-d1", fmt_double(controlled.d1)},
      {"controlled-d2", fmt_double(controlled.d2)},
      {"controlled-b", fmt_double(controlled.b)},
      {"w2", fmt_double(c.weights.w2)},
      {"wu", fmt_double(c.weights.wu)},
      {"master-seed", std::to_string(c.master_seed)},
      {"run-seed", std::to_string(run_seed)},
      {"horizon", std::to_string(c.horizon)},
  };
}

}  // namespace detail

// One machine-readable line per episode; `success` means the episode entered
// the target region within the horizon.
struct RunSummary {
  std::string command;
  std::string run_label;
  bool success = false;
  int steps_to_target = -1;
  double cumulative_cost = 0.0;
  std::string artifact_path;

  std::string line() const {
    std::ostringstream out;
    out << "RESULT cmd=" << command << " run=" << run_label
        << " success=" << (success ? 1 : 0)
        << " steps-to-target=" << steps_to_target
        << " cumulative-cost=" << fmt_double(cumulative_cost);
    if (!artifact_path.empty()) out << " file=" << artifact_path;
    return out.str();
  }
};

struct ExperimentOutcome {
  std::vector<RunSummary> runs;
  bool all_succeeded = true;

  void add(RunSummary s, std::ostream& out) {
    out << s.line() << "\n";
    all_succeeded = all_succeeded && s.success;
    runs.push_back(std::move(s));
  }
};

inline RunSummary summarize_episode(const char* command,
                                    const char* run_label,
                                    const EpisodeLog& log,
                                    const TargetRegion& region,
                                    const std::filesystem::path& path) {
  RunSummary s;
  s.command = command;
  s.run_label = run_label;
  s.steps_to_target = steps_to_target(log, region);
  s.success = s.steps_to_target > 0 && log.abort_reason.empty();
  s.cumulative_cost = log.cumulative_discounted_cost;
  s.artifact_path = path.string();
  return s;
}

// --- commands ----------------------------------------------------------------

inline int cmd_gen_dataset(const ExperimentConfig& c, std::ostream& out) {
  std::filesystem::create_directories(c.out_dir);
  auto set = generate(c.params, detail::generate_options(c));
  auto path = detail::artifact(c, "dataset.tsv");
  save(set, path);
  out << "RESULT cmd=gen-dataset run=dataset success=1 triplets="
      << set.triplets.size() << " file=" << path.string() << "\n";
  return 0;
}

inline int cmd_train(const ExperimentConfig& c, std::ostream& out) {
  auto data_path = detail::artifact(c, "dataset.tsv");
  detail::require_artifact(data_path, "dataset file");
  auto set = load(data_path);
  auto policy =
      fqi_train(set, c.weights, c.fqi(stage_seed(c.master_seed, kSeedTrain)));
  auto path = detail::artifact(c, "policy.policy");
  save_policy(policy, path);
  out << "RESULT cmd=train run=train success=1 iterations=" << c.n_iterations
      << " file=" << path.string() << "\n";
  return 0;
}

inline int cmd_rollout(const ExperimentConfig& c, std::ostream& out) {
  auto policy_path = detail::artifact(c, "policy.policy");
  if (!std::filesystem::exists(policy_path))
    throw std::runtime_error("policy file not found: '" +
                             policy_path.string() +
                             "' (run the train stage first)");
  auto policy = load_policy(policy_path);
  std::uint64_t run_seed = stage_seed(c.master_seed, kSeedRollout);
  auto env = detail::environment_for(c, c.params);
  auto log = closed_loop_run(policy, env, c.weights, c.horizon,
                             c.initial_state, run_seed);
  auto region = region_for_run(c.params, c.initial_state);
  auto path = detail::artifact(c, "rollout.log.tsv");
  save_episode_log(log, path,
                   detail::log_header(c, "rollout", c.params, run_seed));
  ExperimentOutcome outcome;
  outcome.add(summarize_episode("rollout", "rollout", log, region, path),
              out);
  return 0;
}

inline int cmd_online(const ExperimentConfig& c, std::ostream& out) {
  auto policy_path = detail::artifact(c, "policy.policy");
  if (!std::filesystem::exists(policy_path))
    throw std::runtime_error("policy file not found: '" +
                             policy_path.string() +
                             "' (run the train stage first)");
  auto data_path = detail::artifact(c, "dataset.tsv");
  detail::require_artifact(data_path, "dataset file");
  auto policy = load_policy(policy_path);
  auto historical = load(data_path);
  auto env = detail::environment_for(c, c.params);
  auto ocfg = detail::online_config(c);
  auto res = online_run(policy, historical, env, c.weights,
                        c.fqi(stage_seed(c.master_seed, kSeedTrain)), ocfg,
                        c.initial_state);
  auto region = region_for_run(c.params, c.initial_state);
  auto log_path = detail::artifact(c, "online.log.tsv");
  save_episode_log(res.log, log_path,
                   detail::log_header(c, "online", c.params, ocfg.seed));
  save_policy(res.policy, detail::artifact(c, "adapted.policy"));
  ExperimentOutcome outcome;
  outcome.add(
      summarize_episode("online", "online", res.log, region, log_path),
      out);
  return 0;
}

inline int cmd_policy_grid(const ExperimentConfig& c, std::ostream& out) {
  auto policy_path = detail::artifact(c, "policy.policy");
  if (!std::filesystem::exists(policy_path))
    throw std::runtime_error("policy file not found: '" +
                             policy_path.string() +
                             "' (run the train stage first)");
  auto policy = load_policy(policy_path);
  GridSpec spec{default_grid_bounds(c.params), c.grid_resolution};
  auto path = detail::artifact(c, "grid.tsv");
  export_policy_grid(policy, spec, path);
  auto stats = grid_threshold_stats(policy_grid(policy, spec), spec);
  out << "RESULT cmd=policy-grid run=grid success=1 rows="
      << static_cast<long>(c.grid_resolution) * c.grid_resolution
      << " monotone-fraction=" << fmt_double(stats.monotone_fraction)
      << " mean-threshold=" << fmt_double(stats.mean_threshold)
      << " file=" << path.string() << "\n";
  return 0;
}

// Deterministic scenario of the first figure: train on setting one, control
// both settings from the resting state, export the policy phase plot.
inline int cmd_reproduce_fig2(const ExperimentConfig& c, std::ostream& out) {
  std::filesystem::create_directories(c.out_dir);
  ExperimentConfig cfg = c;
  cfg.preset_name = to_string(PresetName::SettingOne);
  cfg.params = preset(PresetName::SettingOne);
  cfg.init_box = default_init_box(cfg.params);
  cfg.initial_state = default_initial_state(cfg.params);

  auto set = generate(cfg.params, detail::generate_options(cfg));
  save(set, detail::artifact(cfg, "dataset.tsv"));
  auto policy = fqi_train(
      set, cfg.weights, cfg.fqi(stage_seed(cfg.master_seed, kSeedTrain)));
  save_policy(policy, detail::artifact(cfg, "policy.policy"));

  ExperimentOutcome outcome;
  struct Leg {
    PresetName name;
    const char* label;
    const char* file;
    std::uint64_t ordinal;
  };
  for (const Leg& leg :
       {Leg{PresetName::SettingOne, "setting-one", "rollout-setting-one.log.tsv",
            kSeedRollout},
        Leg{PresetName::SettingTwo, "setting-two", "rollout-setting-two.log.tsv",
            kSeedRolloutTwo}}) {
    auto controlled = preset(leg.name);
    auto env = detail::environment_for(cfg, controlled);
    std::uint64_t run_seed = stage_seed(cfg.master_seed, leg.ordinal);
    auto log = closed_loop_run(policy, env, cfg.weights, cfg.horizon,
                               cfg.initial_state, run_seed);
    auto region = toggle_target_region(controlled, cfg.params);
    auto path = detail::artifact(cfg, leg.file);
    save_episode_log(log, path,
                     detail::log_header(cfg, leg.label, controlled, run_seed));
    outcome.add(summarize_episode("reproduce-fig2", leg.label, log, region, path),
                out);
  }

  GridSpec spec{default_grid_bounds(cfg.params), cfg.grid_resolution};
  export_policy_grid(policy, spec, detail::artifact(cfg, "grid.tsv"));
  auto stats = grid_threshold_stats(policy_grid(policy, spec), spec);
  out << "RESULT cmd=reproduce-fig2 run=grid success=1 monotone-fraction="
      << fmt_double(stats.monotone_fraction)
      << " mean-threshold=" << fmt_double(stats.mean_threshold)
      << " file=" << detail::artifact(cfg, "grid.tsv").string() << "\n";
  out << "RESULT cmd=reproduce-fig2 run=overall success="
      << (outcome.all_succeeded ? 1 : 0) << "\n";
  return outcome.all_succeeded ? 0 : 3;
}

namespace detail {

// Shared by the second and third figure scenarios: batch-train on setting
// two, then control setting one, frozen and with online adaptation.
inline int reproduce_transfer(const ExperimentConfig& c, std::ostream& out,
                              const char* command, bool run_frozen,
                              bool require_frozen_failure) {
  std::filesystem::create_directories(c.out_dir);
  ExperimentConfig cfg = c;
  cfg.preset_name = to_string(PresetName::SettingTwo);
  cfg.params = preset(PresetName::SettingTwo);
  cfg.init_box = default_init_box(cfg.params);

  auto controlled = preset(PresetName::SettingOne);
  // scenario geometry is pinned to the bistable controlled system
  cfg.initial_state = default_initial_state(controlled);
  auto region = toggle_target_region(controlled);
  auto env = environment_for(cfg, controlled);

  auto set = generate(cfg.params, generate_options(cfg));
  save(set, artifact(cfg, "dataset.tsv"));
  auto policy = fqi_train(
      set, cfg.weights, cfg.fqi(stage_seed(cfg.master_seed, kSeedTrain)));
  save_policy(policy, artifact(cfg, "policy.policy"));

  ExperimentOutcome outcome;
  bool frozen_failed = true;
  if (run_frozen) {
    std::uint64_t run_seed = stage_seed(cfg.master_seed, kSeedRollout);
    auto frozen = closed_loop_run(policy, env, cfg.weights, cfg.horizon,
                                  cfg.initial_state, run_seed);
    auto path = artifact(cfg, "frozen.log.tsv");
    save_episode_log(frozen, path,
                     log_header(cfg, "frozen", controlled, run_seed));
    auto s = summarize_episode(command, "frozen", frozen, region, path);
    frozen_failed = !s.success;
    out << s.line() << "\n";
    outcome.runs.push_back(s);
  }

  auto ocfg = online_config(cfg);
  auto res = online_run(policy, set, env, cfg.weights,
                        cfg.fqi(stage_seed(cfg.master_seed, kSeedTrain)), ocfg,
                        cfg.initial_state);
  auto log_path = artifact(cfg, "online.log.tsv");
  save_episode_log(res.log, log_path,
                   log_header(cfg, "online", controlled, ocfg.seed));
  save_policy(res.policy, artifact(cfg, "adapted.policy"));
  auto s = summarize_episode(command, "online", res.log, region, log_path);
  out << s.line() << "\n";

  bool ok = s.success && (!require_frozen_failure || frozen_failed);
  out << "RESULT cmd=" << command << " run=overall success=" << (ok ? 1 : 0)
      << "\n";
  return ok ? 0 : 3;
}

}  // namespace detail

// Batch policy from setting two fails frozen on setting one but recovers
// through online adaptation (deterministic plant).
inline int cmd_reproduce_fig3(const ExperimentConfig& c, std::ostream& out) {
  ExperimentConfig cfg = c;
  cfg.mode = SimMode::Deterministic;
  return detail::reproduce_transfer(cfg, out, "reproduce-fig3", true, true);
}

// The same transfer scenario against the averaged stochastic plant; tree
// pruning follows the stochastic smoothing default when the config was not
// already stochastic.
inline int cmd_reproduce_fig4(const ExperimentConfig& c, std::ostream& out) {
  ExperimentConfig cfg = c;
  if (cfg.mode != SimMode::Stochastic) {
    cfg.mode = SimMode::Stochastic;
    cfg.n_min = std::max(cfg.n_min, 5);
  }
  return detail::reproduce_transfer(cfg, out, "reproduce-fig4", false, false);
}

inline int run_experiment(const ExperimentConfig& c, Command cmd,
                          std::ostream& out) {
  c.validate();
  switch (cmd) {
    case Command::GenDataset: return cmd_gen_dataset(c, out);
    case Command::Train: return cmd_train(c, out);
    case Command::Rollout: return cmd_rollout(c, out);
    case Command::Online: return cmd_online(c, out);
    case Command::PolicyGrid: return cmd_policy_grid(c, out);
    case Command::ReproduceFig2: return cmd_reproduce_fig2(c, out);
    case Command::ReproduceFig3: return cmd_reproduce_fig3(c, out);
    case Command::ReproduceFig4: return cmd_reproduce_fig4(c, out);
  }
  throw std::invalid_argument("unknown command");
}

}  // namespace tsctl

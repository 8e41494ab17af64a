#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsctl/dataset.hpp"
#include "tsctl/extra_trees.hpp"
#include "tsctl/model.hpp"
#include "tsctl/parallel.hpp"

namespace tsctl {

// Weights of the instantaneous cost c(n1, n2, u) = n1 + w2*n2 + wu*u.
// Named w2/wu to avoid colliding with the cooperativity coefficients.
struct CostWeights {
  double w2 = 60.0;
  double wu = 1.0;

  void validate() const {
    if (!(w2 > 1.0))
      throw std::invalid_argument(
          "CostWeights: w2 must exceed 1 for the toggling objective");
    if (wu < 0.0)
      throw std::invalid_argument("CostWeights: wu must be nonnegative");
  }

  friend bool operator==(const CostWeights&, const CostWeights&) = default;
};

inline double cost(const State& s, Action u, const CostWeights& w) {
  return s.n1 + w.w2 * s.n2 + w.wu * u;
}

// Smallest N >= 1 with gamma^N below the discount tolerance.
inline int default_n_iterations(double gamma, double epsilon_disc) {
  if (!(gamma > 0.0) || !(gamma < 1.0))
    throw std::invalid_argument("default_n_iterations: gamma must be in (0,1)");
  if (!(epsilon_disc > 0.0))
    throw std::invalid_argument(
        "default_n_iterations: epsilon_disc must be positive");
  int n = 1;
  double g = gamma;
  while (g >= epsilon_disc) {
    ++n;
    g *= gamma;
  }
  return n;
}

struct FqiConfig {
  double gamma = 0.75;
  int n_iterations = 33;  // default_n_iterations(0.75, 1e-4)
  RegressorConfig regressor;

  void validate() const {
    if (!(gamma > 0.0) || !(gamma < 1.0))
      throw std::invalid_argument("FqiConfig: gamma must be in (0,1)");
    if (n_iterations < 1)
      throw std::invalid_argument("FqiConfig: n_iterations must be >= 1");
    regressor.validate();
  }

  friend bool operator==(const FqiConfig&, const FqiConfig&) = default;
};

// Fitted Q function plus the metadata needed to reuse or persist it.
struct Policy {
  TreeEnsemble q;
  double gamma = 0.75;
  CostWeights weights;
  RegressorConfig regressor;

  double q_value(const State& s, Action u) const {
    return q.predict({s.n1, s.n2, static_cast<double>(u)});
  }
};

// argmin over {0,1}; ties resolve to the unforced action u=0.
inline Action greedy_action(const Policy& p, const State& s) {
  return p.q_value(s, 0) <= p.q_value(s, 1) ? 0 : 1;
}

inline double value_of(const Policy& p, const State& s) {
  return std::min(p.q_value(s, 0), p.q_value(s, 1));
}

// One empirical Bellman sweep: for every triplet,
//   target = c(n, u) + gamma * min_u' Qprev(n+, u').
// Qprev is any callable (State, Action) -> double.
template <typename QFn>
  requires std::invocable<QFn&, const State&, Action>
std::vector<double> bellman_targets(const std::vector<TransitionTriplet>& data,
                                    QFn&& q_prev, const CostWeights& w,
                                    double gamma) {
  std::vector<double> targets(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto& t = data[i];
    double cont =
        std::min(q_prev(t.next_state, 0), q_prev(t.next_state, 1));
    targets[i] = cost(t.state, t.action, w) + gamma * cont;
  });
  return targets;
}

// Ensemble-backed sweep sharing the tree walks between the two actions;
// values are identical to the generic form evaluated on the same ensemble.
inline std::vector<double> bellman_targets(
    const std::vector<TransitionTriplet>& data, const TreeEnsemble& q_prev,
    const CostWeights& w, double gamma) {
  std::vector<double> targets(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    const auto& t = data[i];
    auto [q0, q1] =
        q_prev.predict_last_feature_pair(t.next_state.n1, t.next_state.n2);
    targets[i] = cost(t.state, t.action, w) + gamma * std::min(q0, q1);
  });
  return targets;
}

inline std::vector<FeatureRow> feature_rows(
    const std::vector<TransitionTriplet>& data) {
  std::vector<FeatureRow> rows(data.size());
  parallel_for(data.size(), [&](std::size_t i) {
    rows[i] = {data[i].state.n1, data[i].state.n2,
               static_cast<double>(data[i].action)};
  });
  return rows;
}

// Batch fitted Q iteration. Q0 is the analytic cost function itself, so the
// first sweep uses exact continuation values; afterwards each sweep refits
// the ensemble on the refreshed targets. Iteration k seeds its regressor
// from derive_seed(config.regressor.seed, k).
inline Policy fqi_train(const TransitionSet& data, const CostWeights& w,
                        const FqiConfig& config) {
  w.validate();
  config.validate();
  if (data.triplets.empty())
    throw std::invalid_argument("fqi_train: empty transition set");

  auto rows = feature_rows(data.triplets);
  Policy policy;
  policy.gamma = config.gamma;
  policy.weights = w;
  policy.regressor = config.regressor;

  for (int k = 1; k <= config.n_iterations; ++k) {
    std::vector<double> targets;
    if (k == 1) {
      targets = bellman_targets(
          data.triplets, [&](const State& s, Action u) { return cost(s, u, w); },
          w, config.gamma);
    } else {
      targets = bellman_targets(data.triplets, policy.q, w, config.gamma);
    }
    RegressorConfig reg = config.regressor;
    reg.seed = derive_seed(config.regressor.seed, static_cast<std::uint64_t>(k));
    try {
      policy.q = fit(rows, targets, reg);
    } catch (const std::exception& e) {
      throw std::runtime_error("fqi_train: iteration " + std::to_string(k) +
                               ": " + e.what());
    }
  }
  return policy;
}

// --- policy persistence ---------------------------------------------------

inline void save_policy(const Policy& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot open '" + path.string() +
                             "' for writing");
  out << "# policy v1\n";
  out << "# format-version: 1\n";
  out << "# gamma: " << fmt_double(p.gamma) << "\n";
  out << "# w2: " << fmt_double(p.weights.w2) << "\n";
  out << "# wu: " << fmt_double(p.weights.wu) << "\n";
  out << "# n-trees: " << p.regressor.n_trees << "\n";
  out << "# k-splits: " << p.regressor.k_splits << "\n";
  out << "# n-min: " << p.regressor.n_min << "\n";
  out << "# regressor-seed: " << p.regressor.seed << "\n";
  save_ensemble(p.q, out);
  if (!out) throw std::runtime_error("write failed on '" + path.string() + "'");
}

inline Policy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("policy file not found: '" + path.string() + "'");
  Policy p;
  std::string line;
  // the policy header ends where the embedded ensemble header starts
  while (in.peek() == '#') {
    auto pos = in.tellg();
    if (!std::getline(in, line)) break;
    auto body = trim(std::string_view(line).substr(1));
    if (body == "tree-ensemble v1") {
      in.seekg(pos);
      break;
    }
    auto colon = body.find(':');
    if (colon == std::string_view::npos) continue;
    auto key = trim(body.substr(0, colon));
    auto value = trim(body.substr(colon + 1));
    if (key == "gamma") p.gamma = parse_double(value, "policy gamma");
    else if (key == "w2") p.weights.w2 = parse_double(value, "policy w2");
    else if (key == "wu") p.weights.wu = parse_double(value, "policy wu");
    else if (key == "n-trees")
      p.regressor.n_trees = static_cast<int>(parse_int(value, "policy n-trees"));
    else if (key == "k-splits")
      p.regressor.k_splits =
          static_cast<int>(parse_int(value, "policy k-splits"));
    else if (key == "n-min")
      p.regressor.n_min = static_cast<int>(parse_int(value, "policy n-min"));
    else if (key == "regressor-seed")
      p.regressor.seed = parse_u64(value, "policy regressor-seed");
    else if (key == "format-version" && value != "1")
      throw std::runtime_error("policy: unsupported format-version '" +
                               std::string(value) + "'");
  }
  p.q = load_ensemble(in);
  return p;
}

}  // namespace tsctl

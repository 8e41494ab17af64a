#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsctl/parallel.hpp"
#include "tsctl/rng.hpp"
#include "tsctl/textio.hpp"

namespace tsctl {

inline constexpr int kFeatureDim = 3;  // (n1, n2, u)
using FeatureRow = std::array<double, kFeatureDim>;

struct RegressorConfig {
  int n_trees = 50;
  int k_splits = 3;  // candidate features per node
  int n_min = 2;     // minimum samples required to split a node
  std::uint64_t seed = 0;

  void validate() const {
    if (n_trees < 1)
      throw std::invalid_argument("RegressorConfig: n_trees must be >= 1");
    if (k_splits < 1 || k_splits > kFeatureDim)
      throw std::invalid_argument(
          "RegressorConfig: k_splits must be in [1, input dimension]");
    if (n_min < 2)
      throw std::invalid_argument("RegressorConfig: n_min must be >= 2");
  }

  friend bool operator==(const RegressorConfig&,
                         const RegressorConfig&) = default;
};

// feature < 0 marks a leaf; leaves hold the mean of the targets that
// reached them.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict(const FeatureRow& x) const {
    int i = 0;
    while (!nodes[i].is_leaf())
      i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left
                                                   : nodes[i].right;
    return nodes[i].value;
  }

  // Evaluates both values of the binary last feature in one walk: the
  // descent is shared until the first split on it (thresholds on a {0,1}
  // feature always lie strictly between the two values).
  std::pair<double, double> predict_last_feature_pair(double f0,
                                                      double f1) const {
    FeatureRow x{f0, f1, 0.0};
    int i = 0;
    while (!nodes[i].is_leaf()) {
      if (nodes[i].feature == kFeatureDim - 1) {
        x[kFeatureDim - 1] = 1.0;
        int j = nodes[i].right;
        while (!nodes[j].is_leaf())
          j = x[nodes[j].feature] < nodes[j].threshold ? nodes[j].left
                                                       : nodes[j].right;
        x[kFeatureDim - 1] = 0.0;
        int k = nodes[i].left;
        while (!nodes[k].is_leaf())
          k = x[nodes[k].feature] < nodes[k].threshold ? nodes[k].left
                                                       : nodes[k].right;
        return {nodes[k].value, nodes[j].value};
      }
      i = x[nodes[i].feature] < nodes[i].threshold ? nodes[i].left
                                                   : nodes[i].right;
    }
    return {nodes[i].value, nodes[i].value};
  }

  int leaf_count() const {
    int n = 0;
    for (const auto& node : nodes) n += node.is_leaf();
    return n;
  }
};

struct TreeEnsemble {
  std::vector<Tree> trees;

  double predict(const FeatureRow& x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }

  std::pair<double, double> predict_last_feature_pair(double f0,
                                                      double f1) const {
    double s0 = 0.0, s1 = 0.0;
    for (const auto& t : trees) {
      auto [v0, v1] = t.predict_last_feature_pair(f0, f1);
      s0 += v0;
      s1 += v1;
    }
    auto n = static_cast<double>(trees.size());
    return {s0 / n, s1 / n};
  }

  int leaf_count() const {
    int n = 0;
    for (const auto& t : trees) n += t.leaf_count();
    return n;
  }
};

namespace detail {

// Samples are partitioned in place as packed records so every node scan is
// sequential.
struct TreeSample {
  FeatureRow x;
  double y;
};

struct TreeBuilder {
  int k_splits;
  int n_min;
  std::vector<TreeSample> data;
  std::vector<TreeNode> nodes;

  // Work item: sample span [lo, hi), slot in `nodes` to fill, and the node's
  // own seed. Seeding per node (children derived from the parent) makes the
  // tree structure a function of (sample set, seed) alone: raising n_min
  // prunes subtrees but never reshapes surviving splits.
  struct Item {
    int lo, hi, slot;
    std::uint64_t seed;
  };

  int build_root(std::uint64_t tree_seed) {
    nodes.clear();
    nodes.emplace_back();
    std::vector<Item> stack{{0, static_cast<int>(data.size()), 0, tree_seed}};
    while (!stack.empty()) {
      Item it = stack.back();
      stack.pop_back();
      process(it, stack);
    }
    return 0;
  }

  void process(const Item& it, std::vector<Item>& stack) {
    const int n = it.hi - it.lo;

    // one pass: target constancy and feature ranges
    double first = data[it.lo].y;
    bool constant_targets = true;
    std::array<double, kFeatureDim> lo_val = data[it.lo].x;
    std::array<double, kFeatureDim> hi_val = lo_val;
    for (int i = it.lo + 1; i < it.hi; ++i) {
      constant_targets = constant_targets && data[i].y == first;
      const auto& row = data[i].x;
      for (int f = 0; f < kFeatureDim; ++f) {
        lo_val[f] = std::min(lo_val[f], row[f]);
        hi_val[f] = std::max(hi_val[f], row[f]);
      }
    }

    if (n < n_min || constant_targets) {
      make_leaf(it, constant_targets ? first : span_mean(it.lo, it.hi));
      return;
    }

    std::array<int, kFeatureDim> usable{};
    int n_usable = 0;
    for (int f = 0; f < kFeatureDim; ++f)
      if (hi_val[f] > lo_val[f]) usable[n_usable++] = f;
    if (n_usable == 0) {
      make_leaf(it, span_mean(it.lo, it.hi));
      return;
    }

    Rng rng(it.seed);
    // candidate features drawn without replacement, Fisher-Yates prefix
    int n_cand = std::min(k_splits, n_usable);
    for (int i = 0; i < n_cand; ++i) {
      int j = i + rng.uniform_below(n_usable - i);
      std::swap(usable[i], usable[j]);
    }

    std::array<double, kFeatureDim> thr_of{};
    for (int c = 0; c < n_cand; ++c) {
      int f = usable[c];
      double u;
      do {
        u = rng.uniform01();
      } while (u == 0.0);  // threshold strictly inside the range
      thr_of[c] = lo_val[f] + u * (hi_val[f] - lo_val[f]);
    }

    // score all candidates in a single pass over the span
    std::array<double, kFeatureDim> sum_l{}, sq_l{};
    std::array<int, kFeatureDim> cnt_l{};
    double sum = 0, sq = 0;
    for (int i = it.lo; i < it.hi; ++i) {
      const auto& row = data[i].x;
      double target = data[i].y;
      double target_sq = target * target;
      sum += target;
      sq += target_sq;
      for (int c = 0; c < n_cand; ++c)
        if (row[usable[c]] < thr_of[c]) {
          sum_l[c] += target;
          sq_l[c] += target_sq;
          ++cnt_l[c];
        }
    }

    int best_feature = -1;
    double best_threshold = 0.0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < n_cand; ++c) {
      double score = -(child_sse(sum_l[c], sq_l[c], cnt_l[c]) +
                       child_sse(sum - sum_l[c], sq - sq_l[c], n - cnt_l[c]));
      if (score > best_score) {  // ties keep the earliest candidate
        best_score = score;
        best_feature = usable[c];
        best_threshold = thr_of[c];
      }
    }

    auto* base = data.data();
    auto* mid =
        std::partition(base + it.lo, base + it.hi, [&](const TreeSample& s) {
          return s.x[best_feature] < best_threshold;
        });
    int split_at = static_cast<int>(mid - base);

    nodes[it.slot].feature = best_feature;
    nodes[it.slot].threshold = best_threshold;
    nodes[it.slot].left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[it.slot].right = static_cast<int>(nodes.size());
    nodes.emplace_back();
    stack.push_back(
        {it.lo, split_at, nodes[it.slot].left, derive_seed(it.seed, 0)});
    stack.push_back(
        {split_at, it.hi, nodes[it.slot].right, derive_seed(it.seed, 1)});
  }

  static double child_sse(double sum, double sq, int n) {
    if (n == 0) return 0.0;
    return sq - sum * sum / n;
  }

  double span_mean(int lo, int hi) const {
    double s = 0;
    for (int i = lo; i < hi; ++i) s += data[i].y;
    return s / (hi - lo);
  }

  void make_leaf(const Item& it, double value) {
    nodes[it.slot] = TreeNode{};
    nodes[it.slot].value = value;
  }
};

}  // namespace detail

// Extra-Trees regression fit: at each node with at least n_min samples and
// non-constant targets, draw k_splits candidate (feature, uniform threshold)
// pairs and keep the one with the largest variance reduction. Tree t is
// seeded from derive_seed(config.seed, t), so building in parallel cannot
// change the result.
inline TreeEnsemble fit(const std::vector<FeatureRow>& inputs,
                        const std::vector<double>& targets,
                        const RegressorConfig& config) {
  config.validate();
  if (inputs.empty()) throw std::invalid_argument("fit: empty training set");
  if (inputs.size() != targets.size())
    throw std::invalid_argument("fit: inputs/targets size mismatch");
  for (double t : targets)
    if (!std::isfinite(t))
      throw std::invalid_argument("fit: non-finite target value");

  TreeEnsemble ensemble;
  ensemble.trees.resize(static_cast<std::size_t>(config.n_trees));
  parallel_for(ensemble.trees.size(), [&](std::size_t t) {
    detail::TreeBuilder builder{config.k_splits, config.n_min, {}, {}};
    builder.data.resize(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
      builder.data[i] = {inputs[i], targets[i]};
    builder.build_root(derive_seed(config.seed, t));
    ensemble.trees[t].nodes = std::move(builder.nodes);
  });
  return ensemble;
}

// --- serialization -----------------------------------------------------

inline void save_ensemble(const TreeEnsemble& e, std::ostream& out) {
  out << "# tree-ensemble v1\n";
  out << "# format-version: 1\n";
  out << "# n-trees: " << e.trees.size() << "\n";
  out << "# input-dim: " << kFeatureDim << "\n";
  for (std::size_t t = 0; t < e.trees.size(); ++t) {
    out << "tree " << t << " " << e.trees[t].nodes.size() << "\n";
    for (const auto& n : e.trees[t].nodes) {
      if (n.is_leaf())
        out << "leaf " << fmt_double(n.value) << "\n";
      else
        out << "split " << n.feature << " " << fmt_double(n.threshold) << " "
            << n.left << " " << n.right << "\n";
    }
  }
}

inline TreeEnsemble load_ensemble(std::istream& in) {
  std::string line;
  std::size_t n_trees = 0;
  bool version_ok = false;
  // header
  while (in.peek() == '#' && std::getline(in, line)) {
    auto body = trim(std::string_view(line).substr(1));
    auto colon = body.find(':');
    if (colon == std::string_view::npos) continue;
    auto key = trim(body.substr(0, colon));
    auto value = trim(body.substr(colon + 1));
    if (key == "format-version") {
      if (value != "1")
        throw std::runtime_error("tree ensemble: unsupported format-version '" +
                                 std::string(value) + "'");
      version_ok = true;
    } else if (key == "n-trees") {
      n_trees = static_cast<std::size_t>(parse_int(value, "n-trees"));
    } else if (key == "input-dim") {
      if (parse_int(value, "input-dim") != kFeatureDim)
        throw std::runtime_error("tree ensemble: unexpected input dimension");
    }
  }
  if (!version_ok)
    throw std::runtime_error("tree ensemble: missing format-version header");
  TreeEnsemble e;
  e.trees.resize(n_trees);
  for (std::size_t t = 0; t < n_trees; ++t) {
    if (!std::getline(in, line))
      throw std::runtime_error("tree ensemble: truncated file");
    auto fields = split_fields(trim(line), ' ');
    if (fields.size() != 3 || fields[0] != "tree")
      throw std::runtime_error("tree ensemble: expected tree header, got '" +
                               line + "'");
    auto n_nodes = static_cast<std::size_t>(parse_int(fields[2], "node count"));
    e.trees[t].nodes.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      if (!std::getline(in, line))
        throw std::runtime_error("tree ensemble: truncated node list");
      auto f = split_fields(trim(line), ' ');
      TreeNode node;
      if (!f.empty() && f[0] == "leaf" && f.size() == 2) {
        node.value = parse_double(f[1], "leaf value");
      } else if (!f.empty() && f[0] == "split" && f.size() == 5) {
        node.feature = static_cast<int>(parse_int(f[1], "split feature"));
        node.threshold = parse_double(f[2], "split threshold");
        node.left = static_cast<int>(parse_int(f[3], "split left"));
        node.right = static_cast<int>(parse_int(f[4], "split right"));
        if (node.feature < 0 || node.feature >= kFeatureDim)
          throw std::runtime_error("tree ensemble: feature index out of range");
      } else {
        throw std::runtime_error("tree ensemble: malformed node '" + line +
                                 "'");
      }
      e.trees[t].nodes[i] = node;
    }
  }
  return e;
}

}  // namespace tsctl

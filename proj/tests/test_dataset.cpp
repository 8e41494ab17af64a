#include <catch2/catch.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tsctl/dataset.hpp"

using namespace tsctl;

namespace {

ToggleParams setting_one_params() { return {30, 10, 1, 3, 1, 1, 20}; }

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const char* name)
      : path(std::filesystem::temp_directory_path() / name) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("a 1x1 deterministic set is a single consistent triplet") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.init_box = {{0, 0}, {20, 6}};
  opt.seed = 7;
  auto set = generate(p, opt);
  REQUIRE(set.triplets.size() == 1);
  const auto& t = set.triplets[0];
  CHECK(t.next_state == deterministic_step(t.state, t.action, p));
}

TEST_CASE("every deterministic triplet matches the map exactly") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.n_trajectories = 20;
  opt.samples_per_trajectory = 10;
  opt.init_box = default_init_box(p);
  opt.seed = 21;
  auto set = generate(p, opt);
  REQUIRE(set.triplets.size() == 200);
  bool saw_both_actions[2] = {false, false};
  for (const auto& t : set.triplets) {
    CHECK(t.next_state == deterministic_step(t.state, t.action, p));
    saw_both_actions[t.action] = true;
  }
  CHECK(saw_both_actions[0]);
  CHECK(saw_both_actions[1]);
}

TEST_CASE("full-scale generation yields 250000 triplets") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.n_trajectories = 5000;
  opt.samples_per_trajectory = 50;
  opt.init_box = default_init_box(p);
  opt.seed = 3;
  auto set = generate(p, opt);
  CHECK(set.triplets.size() == 250000);
  CHECK(set.meta.n_trajectories == 5000);
  CHECK(set.provenance == Provenance::SimulatedDeterministic);
}

TEST_CASE("trajectories pinned at a fixed point never move") {
  auto p = setting_one_params();
  auto tp = toggle_points(p);
  GenerateOptions opt;
  opt.n_trajectories = 2;
  opt.samples_per_trajectory = 15;
  opt.init_box = {tp.n1_high, tp.n1_high};
  opt.action_sampler = ActionSampler::AlwaysOff;
  opt.seed = 11;
  auto set = generate(p, opt);
  for (const auto& t : set.triplets) {
    CHECK(t.next_state.n1 == Approx(t.state.n1).margin(1e-9));
    CHECK(t.next_state.n2 == Approx(t.state.n2).margin(1e-9));
  }
}

TEST_CASE("generation is seed-reproducible") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.n_trajectories = 8;
  opt.samples_per_trajectory = 6;
  opt.init_box = default_init_box(p);
  opt.seed = 99;
  auto a = generate(p, opt);
  auto b = generate(p, opt);
  CHECK(a == b);
  opt.seed = 100;
  CHECK(!(generate(p, opt) == a));
}

TEST_CASE("stochastic generation matches the documented seed fan-out") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.n_trajectories = 2;
  opt.samples_per_trajectory = 3;
  opt.mode = SimMode::Stochastic;
  opt.avg_trajectories = 10;
  opt.init_box = {{0, 4}, {0, 4}};
  opt.seed = 42;
  auto set = generate(p, opt);
  REQUIRE(set.triplets.size() == 6);
  CHECK(set.provenance == Provenance::SimulatedStochastic);
  // trajectory 0, step 0 uses env seed derive_seed(derive_seed(seed, 0), 1)
  std::uint64_t base = derive_seed(42, 0);
  const auto& t0 = set.triplets[0];
  State expect = averaged_transition(t0.state, t0.action, p, 10, 1.0,
                                     derive_seed(base, 1));
  CHECK(t0.next_state == expect);
  // chained: step 1 starts from step 0's mean endpoint
  CHECK(set.triplets[1].state == t0.next_state);
}

TEST_CASE("merge concatenates and keeps duplicates") {
  TransitionSet a, b, empty;
  a.triplets = {{{1, 2}, 0, {3, 4}}, {{5, 6}, 1, {7, 8}}};
  b.triplets = {{{1, 2}, 0, {3, 4}}};

  auto ab = merge(a, b);
  CHECK(ab.triplets.size() == a.triplets.size() + b.triplets.size());
  CHECK(ab.triplets[0] == a.triplets[0]);
  CHECK(ab.triplets[2] == b.triplets[0]);
  CHECK(ab.triplets[0] == ab.triplets[2]);  // duplicate retained

  CHECK(merge(a, empty) == a);
  auto left = merge(merge(a, b), a);
  auto right = merge(a, merge(b, a));
  CHECK(left.triplets == right.triplets);
}

TEST_CASE("save/load round-trips a set bit-exactly") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.n_trajectories = 5;
  opt.samples_per_trajectory = 4;
  opt.init_box = default_init_box(p);
  opt.seed = 1234;
  auto set = generate(p, opt);

  TempFile f("tsctl_roundtrip.tsv");
  save(set, f.path);
  auto back = load(f.path);
  CHECK(back == set);

  // a second save of the loaded set writes identical bytes
  TempFile g("tsctl_roundtrip2.tsv");
  save(back, g.path);
  std::ifstream fa(f.path), fb(g.path);
  std::string sa((std::istreambuf_iterator<char>(fa)), {});
  std::string sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
}

TEST_CASE("loader diagnoses bad rows with line and column") {
  TempFile f("tsctl_bad.tsv");
  {
    std::ofstream out(f.path);
    out << "# transition-set v1\n# format-version: 1\n";
    out << "# provenance: simulated-deterministic\n";
    out << "1\t2\t0\t3\t4\n";
    out << "-1\t2\t0\t3\t4\n";
  }
  CHECK_THROWS_WITH(load(f.path), Catch::Contains(":5") &&
                                      Catch::Contains("negative") &&
                                      Catch::Contains("n1"));
}

TEST_CASE("loader rejects an action outside {0,1}") {
  TempFile f("tsctl_badu.tsv");
  {
    std::ofstream out(f.path);
    out << "# transition-set v1\n# format-version: 1\n";
    out << "1\t2\t2\t3\t4\n";
  }
  CHECK_THROWS_WITH(load(f.path), Catch::Contains("u must be 0 or 1"));
}

TEST_CASE("loading an empty set is an error") {
  TempFile f("tsctl_empty.tsv");
  {
    std::ofstream out(f.path);
    out << "# transition-set v1\n# format-version: 1\n";
  }
  CHECK_THROWS_WITH(load(f.path), Catch::Contains("empty transition set"));
}

TEST_CASE("generate validates its sampler support") {
  auto p = setting_one_params();
  GenerateOptions opt;
  opt.init_box = {{-1, 0}, {5, 5}};
  CHECK_THROWS_AS(generate(p, opt), std::invalid_argument);
  opt.init_box = {{2, 2}, {1, 1}};
  CHECK_THROWS_AS(generate(p, opt), std::invalid_argument);
  opt.init_box = {{0, 0}, {1, 1}};
  opt.n_trajectories = 0;
  CHECK_THROWS_AS(generate(p, opt), std::invalid_argument);
}

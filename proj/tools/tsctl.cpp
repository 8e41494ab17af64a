#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tsctl/experiment.hpp"

namespace {

constexpr const char* kCommands[] = {
    "gen-dataset", "train",          "rollout",        "online",
    "policy-grid", "reproduce-fig2", "reproduce-fig3", "reproduce-fig4",
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "tsctl - reinforcement-learning control of the genetic toggle switch"};
  app.require_subcommand(1);
  app.fallthrough();  // accept the global options after the subcommand too

  std::string config_path, out_dir, preset_name;
  std::uint64_t seed = 0;
  bool seed_given = false;

  app.add_option("--config", config_path, "experiment config file")
      ->type_name("PATH");
  app.add_option("--preset", preset_name,
                 "built-in parameter preset (setting-one | setting-two); "
                 "mutually exclusive with --config")
      ->type_name("NAME");
  auto* seed_opt =
      app.add_option("--seed", seed, "master seed (overrides the config)")
          ->type_name("INT");
  app.add_option("--out", out_dir, "output directory (overrides the config)")
      ->type_name("DIR");

  for (const char* name : kCommands) app.add_subcommand(name);
  auto* print_cmd = app.add_subcommand(
      "print-config", "write the resolved experiment config to stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  seed_given = seed_opt->count() > 0;

  try {
    if (!config_path.empty() && !preset_name.empty())
      throw std::invalid_argument("give either --config or --preset, not both");

    tsctl::ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = tsctl::load_experiment_config(config_path);
    } else {
      auto preset = preset_name.empty()
                        ? tsctl::PresetName::SettingOne
                        : tsctl::preset_from(preset_name);
      cfg = tsctl::default_experiment_config(preset);
    }
    if (seed_given) cfg.master_seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;

    if (print_cmd->parsed()) {
      std::cout << tsctl::render_experiment_config(cfg);
      return 0;
    }
    for (const char* name : kCommands)
      if (app.get_subcommand(name)->parsed())
        return tsctl::run_experiment(cfg, tsctl::command_from(name),
                                     std::cout);
    throw std::invalid_argument("no command given");
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

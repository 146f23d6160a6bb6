// rrl <subcommand> --config <path> [--out <dir>] [--seed <u64>]

#include "rrl/config.hpp"
#include "rrl/errors.hpp"
#include "rrl/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  CLI::App app{"Question-rewriting RL laboratory"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string data, qa, policy, setting;
  std::vector<std::string> runs;
  for (const auto& name : rrl::subcommands()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "run directory (default runs/<subcommand>)");
    sub->add_option("--seed", seed, "overrides the config seed and RRL_SEED");
    sub->add_option("--data", data, "overrides inputs.data");
    sub->add_option("--qa", qa, "overrides inputs.qa");
    sub->add_option("--policy", policy, "overrides inputs.policy");
    sub->add_option("--run", runs, "overrides inputs.runs (repeatable)");
    sub->add_option("--setting", setting, "overrides setting");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  if (out_dir.empty()) out_dir = "runs/" + command;

  rrl::RunConfig cfg;
  std::string seed_source;
  try {
    cfg = rrl::load_run_config(config_path);
    seed_source = rrl::apply_seed_overrides(cfg, seed);
    if (!data.empty()) cfg.inputs.data = data;
    if (!qa.empty()) cfg.inputs.qa = qa;
    if (!policy.empty()) cfg.inputs.policy = policy;
    if (!runs.empty()) cfg.inputs.runs = runs;
    if (!setting.empty()) cfg.setting = setting;
    rrl::validate_run_config(cfg);
  } catch (const rrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  try {
    rrl::run_subcommand(command, cfg, out_dir, seed_source);
  } catch (const rrl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << command << " failed: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

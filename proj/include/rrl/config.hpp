#pragma once

// Run configuration: one JSON document with a section per module.

#include "rrl/augment.hpp"
#include "rrl/perturb.hpp"
#include "rrl/policy.hpp"
#include "rrl/ppo.hpp"
#include "rrl/qaenv.hpp"
#include "rrl/saliency.hpp"
#include "rrl/synthworld.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rrl {

// Artifacts of earlier runs consumed by a subcommand.
struct RunInputs {
  std::string data;       // directory holding {train,validation,test}.jsonl
  std::string qa;         // QA checkpoint
  std::string policy;     // rewriter checkpoint
  std::vector<std::string> runs;  // run directories joined by `report`
};

struct RunConfig {
  std::uint64_t seed = 1;
  // "end-to-end" or "pipeline" (train-qa, evaluate).
  std::string setting = "end-to-end";
  // Split scored by evaluate, perturb-eval and saliency.
  std::string eval_split = "validation";
  double heq_reference = 1.0;
  WorldConfig world;
  QAConfig qa;
  PolicyConfig policy;
  PPOConfig ppo;
  AugmentConfig augment;
  PerturbConfig perturb;
  SaliencyConfig saliency;
  RunInputs inputs;
};

// Strict parse: unknown keys and wrong types raise ConfigError naming the
// field. Relative paths are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_json(const RunConfig& cfg);

void validate_run_config(const RunConfig& cfg);

nlohmann::json world_config_json(const WorldConfig& cfg);
WorldConfig world_config_from_json(const nlohmann::json& j, const std::string& prefix = "world");

}  // namespace rrl

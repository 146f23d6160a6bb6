#pragma once

#include "rrl/policy.hpp"
#include "rrl/qaenv.hpp"
#include "rrl/rng.hpp"
#include "rrl/synthworld.hpp"

#include <filesystem>
#include <string>

namespace fixtures {

inline rrl::WorldConfig tiny_world(std::uint64_t seed = 3, int n_dialogues = 40) {
  rrl::WorldConfig w;
  w.n_dialogues = n_dialogues;
  w.n_entities = 8;
  w.n_relations = 4;
  w.n_values = 8;
  w.entities_per_doc = 3;
  w.facts_per_entity = 2;
  w.ellipsis_prob = 0.6;
  w.seed = seed;
  return w;
}

inline rrl::QAConfig random_qa_config(rrl::Rng& rng) {
  rrl::QAConfig c;
  c.d = 2 + static_cast<int>(rng.below(5));
  c.d_hidden = 2 + static_cast<int>(rng.below(5));
  c.evidence_heads = 1 + static_cast<int>(rng.below(3));
  c.mixing = rng.bernoulli(0.5) ? rrl::Mixing::attention : rrl::Mixing::mean;
  c.history_turns = static_cast<int>(rng.below(4));
  c.max_recency = 2 + static_cast<int>(rng.below(6));
  c.init_scale = 0.3 + rng.uniform();
  return c;
}

inline rrl::PolicyConfig random_policy_config(rrl::Rng& rng) {
  rrl::PolicyConfig c;
  c.d = 2 + static_cast<int>(rng.below(5));
  c.d_hidden = 2 + static_cast<int>(rng.below(5));
  c.history_utterances = static_cast<int>(rng.below(5));
  c.max_recency = 2 + static_cast<int>(rng.below(6));
  c.max_state_len = 12 + static_cast<int>(rng.below(40));
  c.init_scale = 0.3 + rng.uniform();
  return c;
}

// Fresh scratch directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rrl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures

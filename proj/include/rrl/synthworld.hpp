#pragma once

#include "rrl/core.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rrl {

struct WorldConfig {
  int n_dialogues = 1000;
  int turns_min = 3;
  int turns_max = 6;
  int n_entities = 24;
  int n_relations = 8;
  int n_values = 24;
  int entities_per_doc = 4;
  int facts_per_entity = 3;
  double ellipsis_prob = 0.5;
  // Among elliptical "what" questions, the share that drops the entity
  // instead of using a pronoun.
  double omission_prob = 0.3;
  double yesno_prob = 0.2;
  double unknown_prob = 0.1;
  // Chance that an explicit follow-up moves to another entity.
  double switch_prob = 0.4;
  // Chance that a value carries a modifier ("dark red").
  double modifier_prob = 0.2;
  int n_domains = 5;
  // Case-sensitive vocab; restored entities in rewrites are capitalized.
  bool case_sensitive = true;
  bool capitalize_rewrites = true;
  double validation_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t seed = 1;
};

// Throws ConfigError naming the offending field ("world.<name>").
void validate_world(const WorldConfig& cfg);

// Word lists actually used by a config (sizes follow the lexicon counts).
struct WorldLexicon {
  std::vector<std::string> entities;
  std::vector<std::string> relations;
  std::vector<std::string> values;
  std::vector<std::string> modifiers;
  std::vector<std::string> domains;
};
WorldLexicon world_lexicon(const WorldConfig& cfg);

// Every word the generator can emit, plus `extra_words`.
Vocab world_vocab(const WorldConfig& cfg, const std::vector<std::string>& extra_words = {});

// All dialogues in one dataset (split = train).
Dataset generate_dataset(const WorldConfig& cfg, const std::vector<std::string>& extra_words = {});

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
};
// Dialogue-level split: the trailing fractions become validation and test.
Splits generate_splits(const WorldConfig& cfg, const std::vector<std::string>& extra_words = {});

struct OracleAnswer {
  Label label = Label::unknown;
  std::optional<Span> span;
};
OracleAnswer oracle_answer(const Utterance& question, const Utterance& document);

using RewritePair = std::pair<Tokens, Tokens>;
std::vector<RewritePair> gold_rewrite_pairs(const Dataset& ds, int h, int max_state_len);

}  // namespace rrl

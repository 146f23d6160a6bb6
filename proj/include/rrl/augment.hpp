#pragma once

// Best-of-n rewrite selection against the QA environment, producing
// (state, rewrite) pairs for retraining a fresh rewriter.

#include "rrl/core.hpp"
#include "rrl/policy.hpp"
#include "rrl/qaenv.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rrl {

struct AugmentConfig {
  int n_candidates = 10;
  int top_k = 20;
  double top_p = 0.95;
  int max_rewrite_len = 100;
};

void validate_augment(const AugmentConfig& cfg);

// n sampled rewrites (EOS stripped), sample i seeded by derive_seed(seed, i).
std::vector<Tokens> generate_candidates(const PolicyModel& policy, const Tokens& state, int n, int k, double p,
                                        int max_len, std::uint64_t seed);

enum class Source { original, candidate };
const char* source_name(Source s);

struct Selection {
  Tokens tokens;
  double f1 = 0.0;
  Source source = Source::original;
  int index = -1;  // candidate index, -1 for the original
};

// Highest-scoring of the original and the candidates. Ties go to the
// original, then to the lowest candidate index.
Selection select_best(const std::vector<Tokens>& candidates, const Tokens& original,
                      const std::function<double(const Tokens&)>& score);
Selection select_best(const std::vector<Tokens>& candidates, const Tokens& original, const QAModel& qa,
                      const CQAExample& example, const Vocab& vocab);

struct AugmentRecord {
  Tokens state;
  Tokens rewrite;
  double f1 = 0.0;
  double original_f1 = 0.0;
  Source source = Source::original;
};

struct AugmentReport {
  std::size_t n_examples = 0;
  std::size_t n_from_candidates = 0;
  double candidate_fraction = 0.0;
  double mean_chosen_f1 = 0.0;
  double mean_original_f1 = 0.0;
  nlohmann::ordered_json to_json() const;
};

struct AugmentResult {
  std::vector<AugmentRecord> records;
  AugmentReport report;
  std::vector<StatePair> pairs() const;
};

AugmentResult build_augmented_dataset(const PolicyModel& policy, const QAModel& qa, const Dataset& ds,
                                      const AugmentConfig& cfg, std::uint64_t seed);

// One {state_tokens, rewrite_tokens, f1, source} object per line.
std::string augment_jsonl(const std::vector<AugmentRecord>& records);

nlohmann::json augment_config_json(const AugmentConfig& cfg);
AugmentConfig augment_config_from_json(const nlohmann::json& j, const std::string& prefix = "augment");

}  // namespace rrl

#pragma once

// The rewriter: an autoregressive decoder over the vocabulary that reads the
// serialized state through a question-aligned attention head and a history
// attention head, with a per-position value head on the shared trunk.

#include "rrl/ad.hpp"
#include "rrl/core.hpp"
#include "rrl/params.hpp"

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace rrl {

struct PolicyConfig {
  // Architecture.
  int d = 32;
  int d_hidden = 64;
  int max_question_len = 64;
  int max_recency = 16;
  double init_scale = 0.1;
  // Inputs and decoding.
  int history_utterances = 3;
  int max_state_len = 150;
  int max_rewrite_len = 100;
  int beam_width = 5;
  double rep_penalty = 1.1;
  // Supervised training.
  double lr = 5e-5;
  int batch_size = 8;
  int grad_accum = 8;
  int max_epochs = 20;
  int patience = 3;
  int warmup_steps = 500;
  double weight_decay = 0.0;
  double max_grad_norm = 1.0;
  double heldout_fraction = 0.1;
  // Cap on held-out pairs decoded for BLEU after each epoch (0 = all).
  int valid_limit = 0;
  // Share of rewrite targets replaced by the original question when
  // building initialization pairs (0 = gold rewrites, 1 = copy pairs).
  double init_copy_fraction = 0.0;
};

struct PolicyModel {
  PolicyConfig cfg;
  int vocab_size = 0;
  int bos = 1, eos = 2, sep = 3, pad = 0;
  std::string vocab_hash;
  ParamSet params;
};

void validate_policy(const PolicyConfig& cfg);

PolicyModel init_policy(const PolicyConfig& cfg, const Vocab& vocab, std::uint64_t seed);

// State encodings reused across decoding steps.
struct PolicyState {
  ad::Var question;       // raw question-segment embeddings (nq x d)
  ad::Var question_keys;  // nq x d
  ad::Var history_keys;   // (nh + 1) x d, first row is the null slot
  ad::Var history_values;
};

PolicyState encode_state(ad::Tape& tape, const PolicyModel& model, const Tokens& state, bool train);

struct PolicyForward {
  ad::Var logits;  // L x |V|, row l predicts token l given prev[0..l]
  ad::Var values;  // L x 1
};
// `prev` starts with BOS.
PolicyForward policy_forward(ad::Tape& tape, const PolicyModel& model, const PolicyState& enc, const Tokens& prev,
                             bool train);

// Teacher-forced log-probs of `output` (must end with EOS) as an L x 1 node.
struct PolicyScores {
  ad::Var logp;
  ad::Var values;
  ad::Var log_softmax;
};
PolicyScores score_output(ad::Tape& tape, const PolicyModel& model, const Tokens& state, const Tokens& output,
                          bool train);

struct LogProbsValues {
  std::vector<double> logp;
  std::vector<double> values;
};
LogProbsValues log_probs_and_values(const PolicyModel& model, const Tokens& state, const Tokens& output);

// Top-k then top-p filtered ancestral sampling. Returns tokens ending in
// EOS; EOS is forced after max_len content tokens.
Tokens sample_top_k(const PolicyModel& model, const Tokens& state, int k, double p, int max_len, std::uint64_t seed);
Tokens greedy_decode(const PolicyModel& model, const Tokens& state, int max_len);
// Beam search with average log-prob length normalization and repetition
// penalty over generated tokens.
Tokens beam_search(const PolicyModel& model, const Tokens& state, int width, double rep_penalty, int max_len);

// Drops a trailing EOS.
Tokens strip_eos(const Tokens& tokens, int eos);

using StatePair = std::pair<Tokens, Tokens>;

struct PolicyEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_bleu = 0.0;
};
struct PolicyTrainReport {
  std::vector<PolicyEpochStats> epochs;
  int best_epoch = 0;
  double best_valid_bleu = 0.0;
  bool stopped_early = false;
};
struct PolicyTrainResult {
  PolicyModel model;
  PolicyTrainReport report;
};

// Cross-entropy training from `model`. Pairs hold raw rewrite tokens (EOS is
// appended). With empty `valid`, a held-out slice of `train` is used.
PolicyTrainResult supervised_train(const PolicyModel& model, const std::vector<StatePair>& train,
                                   const std::vector<StatePair>& valid, std::uint64_t seed);

// Mean token cross-entropy over `pairs` as a 1x1 node (for auxiliary losses).
ad::Var pairs_cross_entropy(ad::Tape& tape, const PolicyModel& model, const std::vector<const StatePair*>& pairs,
                            bool train);

class ReferencePolicy {
 public:
  ReferencePolicy() = default;
  explicit ReferencePolicy(std::shared_ptr<const PolicyModel> model) : model_(std::move(model)) {}
  const PolicyModel& model() const { return *model_; }
  std::vector<double> log_probs(const Tokens& state, const Tokens& output) const;

 private:
  std::shared_ptr<const PolicyModel> model_;
};

ReferencePolicy clone_reference(const PolicyModel& model);

void save_policy(const std::filesystem::path& path, const PolicyModel& model);
PolicyModel load_policy(const std::filesystem::path& path);

nlohmann::json policy_config_json(const PolicyConfig& cfg);
PolicyConfig policy_config_from_json(const nlohmann::json& j, const std::string& prefix = "policy");

}  // namespace rrl

#pragma once

// KL-penalized PPO for the rewriter against a frozen reward environment.

#include "rrl/core.hpp"
#include "rrl/params.hpp"
#include "rrl/policy.hpp"
#include "rrl/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace rrl {

struct PPOConfig {
  double lr = 1e-7;
  int batch_size = 64;
  int minibatch_size = 16;
  int ppo_epochs = 4;
  double gamma = 1.0;
  double lambda = 0.95;
  double cliprange = 0.2;
  double vf_coef = 0.5;
  double ce_coef = 1.0;
  // Initialization pairs per minibatch for the auxiliary cross-entropy.
  int aux_batch = 16;
  double kl_beta_init = 0.2;
  double kl_target = 6.0;
  double kl_horizon = 10000.0;
  double k_beta = 0.1;
  int top_k = 0;  // 0 = whole vocabulary
  double top_p = 1.0;
  int max_rewrite_len = 100;
  int max_epochs = 6;
  int max_iterations = 0;  // 0 = derived from max_epochs
  int eval_every = 50;
  int eval_limit = 0;      // validation examples per checkpoint (0 = all)
  int patience = 0;        // in checkpoints; 0 disables early stopping
  double max_grad_norm = 1.0;
};

void validate_ppo(const PPOConfig& cfg);

struct Trajectory {
  std::size_t example = 0;
  Tokens state;
  Tokens rewrite;  // ends with EOS
  std::vector<double> logp;
  std::vector<double> ref_logp;
  std::vector<double> values;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::vector<double> returns;
  double f1 = 0.0;
};

std::vector<double> kl_per_token(const std::vector<double>& policy_logp, const std::vector<double>& ref_logp);
std::vector<double> shape_rewards(const std::vector<double>& kl, double f1, double beta);

struct Gae {
  std::vector<double> advantages;
  std::vector<double> returns;
};
Gae compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda);

double adapt_kl(double beta, double observed_mean_kl, const PPOConfig& cfg, double n_samples);

struct PPOStats {
  double mean_kl = 0.0;
  double clip_frac = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double aux_loss = 0.0;
};

// Clipped-surrogate update over `trajectories` (advantages filled in).
// `aux_pairs` feed the cross-entropy anchor when cfg.ce_coef > 0.
PPOStats ppo_update(PolicyModel& model, Adam& adam, const std::vector<Trajectory>& trajectories,
                    const PPOConfig& cfg, const std::vector<StatePair>& aux_pairs, Rng& rng);

// Environment score of a rewrite (no EOS) for an example, in [0, 1].
using RewardFn = std::function<double(const CQAExample&, const Tokens&)>;

struct PPOIterStats {
  int iter = 0;
  double mean_reward = 0.0;
  double mean_f1 = 0.0;
  double mean_kl = 0.0;
  double beta = 0.0;
  double copy_rate = 0.0;
  double mean_edit_distance = 0.0;
  double clip_frac = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
  nlohmann::ordered_json to_json() const;
};

struct CheckpointRow {
  int iter = 0;
  double f1 = 0.0;  // percentage
  double copy_rate = 0.0;
  double mean_edit_distance = 0.0;
  double beta = 0.0;
  nlohmann::ordered_json to_json() const;
  static CheckpointRow from_json(const nlohmann::json& j);
};

struct PPOResult {
  PolicyModel model;  // best checkpoint by validation F1
  std::vector<PPOIterStats> iterations;
  std::vector<CheckpointRow> checkpoints;
  int best_iter = 0;
  double final_beta = 0.0;
};

struct PPOHooks {
  std::function<void(const PPOIterStats&)> on_iteration;
  std::function<void(const CheckpointRow&, const PolicyModel&)> on_checkpoint;
};

// Rewrites of `ds` by greedy decoding (EOS stripped).
std::vector<Tokens> decode_rewrites(const PolicyModel& model, const Dataset& ds, int h, int max_state_len,
                                    int max_len, std::size_t limit = 0);

// Validation F1 (x100), copy rate and mean edit distance of given rewrites.
CheckpointRow score_rewrites(const Dataset& ds, const std::vector<Tokens>& rewrites, const RewardFn& reward_fn);

PPOResult train_loop(const PolicyModel& policy, const ReferencePolicy& reference, const RewardFn& reward_fn,
                     const Dataset& train, const Dataset& valid, const PPOConfig& cfg,
                     const std::vector<StatePair>& aux_pairs, std::uint64_t seed, const PPOHooks& hooks = {});

nlohmann::json ppo_config_json(const PPOConfig& cfg);
PPOConfig ppo_config_from_json(const nlohmann::json& j, const std::string& prefix = "ppo");

}  // namespace rrl

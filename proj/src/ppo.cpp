#include "rrl/ppo.hpp"

#include "rrl/errors.hpp"
#include "rrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rrl {

void validate_ppo(const PPOConfig& cfg) {
  auto fail = [](const char* field, const char* what) { throw ConfigError(std::string("ppo.") + field, what); };
  if (!(cfg.cliprange > 0.0)) fail("cliprange", "must be > 0");
  if (!(cfg.lambda >= 0.0 && cfg.lambda <= 1.0)) fail("lambda", "must be in [0, 1]");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) fail("gamma", "must be in (0, 1]");
  if (!(cfg.lr >= 0.0)) fail("lr", "must be >= 0");
  if (!(cfg.vf_coef >= 0.0)) fail("vf_coef", "must be >= 0");
  if (!(cfg.ce_coef >= 0.0)) fail("ce_coef", "must be >= 0");
  if (!(cfg.kl_beta_init > 0.0)) fail("kl_beta_init", "must be > 0");
  if (!(cfg.kl_target > 0.0)) fail("kl_target", "must be > 0");
  if (!(cfg.kl_horizon > 0.0)) fail("kl_horizon", "must be > 0");
  if (!(cfg.k_beta >= 0.0)) fail("k_beta", "must be >= 0");
  if (cfg.batch_size < 1) fail("batch_size", "must be >= 1");
  if (cfg.minibatch_size < 1) fail("minibatch_size", "must be >= 1");
  if (cfg.ppo_epochs < 1) fail("ppo_epochs", "must be >= 1");
  if (cfg.aux_batch < 0) fail("aux_batch", "must be >= 0");
  if (cfg.top_k < 0) fail("top_k", "must be >= 0");
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) fail("top_p", "must be in (0, 1]");
  if (cfg.max_rewrite_len < 1) fail("max_rewrite_len", "must be >= 1");
  if (cfg.max_epochs < 0) fail("max_epochs", "must be >= 0");
  if (cfg.max_iterations < 0) fail("max_iterations", "must be >= 0");
  if (cfg.eval_every < 1) fail("eval_every", "must be >= 1");
  if (cfg.eval_limit < 0) fail("eval_limit", "must be >= 0");
  if (cfg.patience < 0) fail("patience", "must be >= 0");
  // Keeps the adaptive multiplier positive for one full horizon of samples.
  if (!(cfg.k_beta * 0.2 < 1.0)) fail("k_beta", "k_beta * 0.2 must be < 1");
}

std::vector<double> kl_per_token(const std::vector<double>& policy_logp, const std::vector<double>& ref_logp) {
  if (policy_logp.size() != ref_logp.size()) throw PreconditionError("kl_per_token: length mismatch");
  std::vector<double> kl(policy_logp.size());
  for (std::size_t i = 0; i < kl.size(); ++i) kl[i] = policy_logp[i] - ref_logp[i];
  return kl;
}

std::vector<double> shape_rewards(const std::vector<double>& kl, double f1, double beta) {
  std::vector<double> r(kl.size());
  for (std::size_t i = 0; i < kl.size(); ++i) r[i] = -beta * kl[i];
  if (!r.empty()) r.back() += f1;
  return r;
}

Gae compute_gae(const std::vector<double>& rewards, const std::vector<double>& values, double gamma, double lambda) {
  if (rewards.size() != values.size()) throw PreconditionError("compute_gae: length mismatch");
  if (rewards.empty()) throw PreconditionError("compute_gae: empty sequence");
  const std::size_t n = rewards.size();
  Gae g;
  g.advantages.assign(n, 0.0);
  g.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_v = k + 1 < n ? values[k + 1] : 0.0;
    const double delta = rewards[k] + gamma * next_v - values[k];
    running = delta + gamma * lambda * running;
    g.advantages[k] = running;
    g.returns[k] = running + values[k];
  }
  return g;
}

double adapt_kl(double beta, double observed_mean_kl, const PPOConfig& cfg, double n_samples) {
  if (!(beta > 0.0)) throw PreconditionError("adapt_kl: beta must be > 0");
  const double e = std::clamp((observed_mean_kl - cfg.kl_target) / cfg.kl_target, -0.2, 0.2);
  return beta * (1.0 + cfg.k_beta * e * (n_samples / cfg.kl_horizon));
}

PPOStats ppo_update(PolicyModel& model, Adam& adam, const std::vector<Trajectory>& trajectories,
                    const PPOConfig& cfg, const std::vector<StatePair>& aux_pairs, Rng& rng) {
  using namespace ad;
  if (trajectories.empty()) throw PreconditionError("ppo_update: no trajectories");

  double total = 0.0, sq = 0.0, count = 0.0;
  for (const auto& t : trajectories) {
    if (t.advantages.size() != t.rewrite.size()) throw PreconditionError("ppo_update: advantages not computed");
    for (double a : t.advantages) {
      total += a;
      sq += a * a;
      count += 1.0;
    }
  }
  const double mean = total / count;
  const double std = std::sqrt(std::max(sq / count - mean * mean, 0.0));
  std::vector<Mat> adv(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& a = trajectories[i].advantages;
    adv[i].resize(static_cast<Eigen::Index>(a.size()), 1);
    for (std::size_t l = 0; l < a.size(); ++l) adv[i](static_cast<Eigen::Index>(l)) = (a[l] - mean) / (std + 1e-8);
  }

  PPOStats stats;
  for (const auto& t : trajectories) {
    double s = 0.0;
    for (std::size_t l = 0; l < t.logp.size(); ++l) s += t.logp[l] - t.ref_logp[l];
    stats.mean_kl += s / static_cast<double>(trajectories.size());
  }

  std::vector<std::size_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> aux_order(aux_pairs.size());
  std::iota(aux_order.begin(), aux_order.end(), std::size_t{0});
  std::size_t aux_pos = aux_order.size();
  const std::size_t mb = static_cast<std::size_t>(cfg.minibatch_size);
  double tokens_seen = 0.0, clipped = 0.0, vloss = 0.0, ploss = 0.0, aloss = 0.0;
  int aux_steps = 0;

  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t b = 0; b < order.size(); b += mb) {
      const std::size_t e = std::min(order.size(), b + mb);
      double n_tok = 0.0;
      for (std::size_t k = b; k < e; ++k) n_tok += static_cast<double>(trajectories[order[k]].rewrite.size());
      model.params.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const Trajectory& t = trajectories[order[k]];
        const Eigen::Index len = static_cast<Eigen::Index>(t.rewrite.size());
        Mat old_lp(len, 1), ret(len, 1);
        for (Eigen::Index l = 0; l < len; ++l) {
          old_lp(l) = t.logp[static_cast<std::size_t>(l)];
          ret(l) = t.returns[static_cast<std::size_t>(l)];
        }
        Tape tape;
        const PolicyScores s = score_output(tape, model, t.state, t.rewrite, true);
        const Var ratio = exp(sub(s.logp, tape.constant(old_lp)));
        const Var a = tape.constant(adv[order[k]]);
        const Var surr1 = hadamard(ratio, a);
        const Var surr2 = hadamard(clamp(ratio, 1.0 - cfg.cliprange, 1.0 + cfg.cliprange), a);
        const Var pg = scale(sum(minimum(surr1, surr2)), -1.0);
        const Var vl = sum(square(sub(s.values, tape.constant(ret))));
        const Var loss = add(pg, scale(vl, cfg.vf_coef));
        if (!std::isfinite(loss.scalar())) {
          throw NumericError("ppo_update: non-finite loss (policy " + std::to_string(ploss / std::max(tokens_seen, 1.0)) +
                             ", value " + std::to_string(vloss / std::max(tokens_seen, 1.0)) + ")");
        }
        tape.backward(loss, 1.0 / n_tok);
        const Mat& s1 = surr1.value();
        const Mat& s2 = surr2.value();
        for (Eigen::Index l = 0; l < len; ++l) clipped += s2(l) < s1(l) ? 1.0 : 0.0;
        ploss += pg.scalar();
        vloss += vl.scalar();
        tokens_seen += static_cast<double>(len);
      }
      if (cfg.ce_coef > 0.0 && cfg.aux_batch > 0 && !aux_pairs.empty()) {
        std::vector<const StatePair*> batch;
        for (int i = 0; i < cfg.aux_batch; ++i) {
          if (aux_pos >= aux_order.size()) {
            rng.shuffle(std::span<std::size_t>(aux_order));
            aux_pos = 0;
          }
          batch.push_back(&aux_pairs[aux_order[aux_pos++]]);
        }
        Tape tape;
        const Var ce = pairs_cross_entropy(tape, model, batch, true);
        if (!std::isfinite(ce.scalar())) throw NumericError("ppo_update: non-finite auxiliary loss");
        tape.backward(ce, cfg.ce_coef);
        aloss += ce.scalar();
        ++aux_steps;
      }
      if (!model.params.grads_finite()) throw NumericError("ppo_update: non-finite gradient");
      clip_grad_norm(model.params, cfg.max_grad_norm);
      adam.step(model.params, cfg.lr);
    }
  }
  stats.clip_frac = clipped / tokens_seen;
  stats.value_loss = vloss / tokens_seen;
  stats.policy_loss = ploss / tokens_seen;
  stats.aux_loss = aux_steps > 0 ? aloss / aux_steps : 0.0;
  return stats;
}

nlohmann::ordered_json PPOIterStats::to_json() const {
  return nlohmann::ordered_json{{"iter", iter},
                                {"mean_reward", mean_reward},
                                {"mean_f1", mean_f1},
                                {"mean_kl", mean_kl},
                                {"beta", beta},
                                {"copy_rate", copy_rate},
                                {"mean_edit_distance", mean_edit_distance},
                                {"clip_frac", clip_frac},
                                {"value_loss", value_loss},
                                {"policy_loss", policy_loss}};
}

nlohmann::ordered_json CheckpointRow::to_json() const {
  return nlohmann::ordered_json{{"iter", iter},
                                {"f1", f1},
                                {"copy_rate", copy_rate},
                                {"mean_edit_distance", mean_edit_distance},
                                {"beta", beta}};
}

CheckpointRow CheckpointRow::from_json(const nlohmann::json& j) {
  CheckpointRow r;
  r.iter = j.at("iter").get<int>();
  r.f1 = j.at("f1").get<double>();
  r.copy_rate = j.at("copy_rate").get<double>();
  r.mean_edit_distance = j.at("mean_edit_distance").get<double>();
  r.beta = j.value("beta", 0.0);
  return r;
}

std::vector<Tokens> decode_rewrites(const PolicyModel& model, const Dataset& ds, int h, int max_state_len,
                                    int max_len, std::size_t limit) {
  const std::size_t n = limit > 0 ? std::min(limit, ds.examples.size()) : ds.examples.size();
  std::vector<Tokens> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const CQAExample& ex = ds.examples[i];
    const Tokens state = serialize_state(ex.history, ex.question.token_ids, h, max_state_len, ds.vocab);
    out.push_back(strip_eos(greedy_decode(model, state, max_len), model.eos));
  }
  return out;
}

namespace {

double edit_fraction(const Tokens& original, const Tokens& rewrite, const Vocab& vocab) {
  const std::string o = detokenize(original, vocab);
  if (o.empty()) return rewrite.empty() ? 0.0 : 1.0;
  return normalized_levenshtein(o, detokenize(rewrite, vocab));
}

}  // namespace

CheckpointRow score_rewrites(const Dataset& ds, const std::vector<Tokens>& rewrites, const RewardFn& reward_fn) {
  if (rewrites.empty() || rewrites.size() > ds.examples.size()) throw PreconditionError("score_rewrites: bad rewrite count");
  CheckpointRow row;
  std::vector<Tokens> originals;
  double f1 = 0.0, edit = 0.0;
  for (std::size_t i = 0; i < rewrites.size(); ++i) {
    const CQAExample& ex = ds.examples[i];
    originals.push_back(ex.question.token_ids);
    f1 += reward_fn(ex, rewrites[i]);
    edit += edit_fraction(ex.question.token_ids, rewrites[i], ds.vocab);
  }
  const double n = static_cast<double>(rewrites.size());
  row.f1 = 100.0 * f1 / n;
  row.copy_rate = copy_rate(rewrites, originals);
  row.mean_edit_distance = edit / n;
  return row;
}

PPOResult train_loop(const PolicyModel& policy, const ReferencePolicy& reference, const RewardFn& reward_fn,
                     const Dataset& train, const Dataset& valid, const PPOConfig& cfg,
                     const std::vector<StatePair>& aux_pairs, std::uint64_t seed, const PPOHooks& hooks) {
  validate_ppo(cfg);
  if (train.examples.empty()) throw PreconditionError("train_loop: empty training set");
  if (valid.examples.empty()) throw PreconditionError("train_loop: empty validation set");
  const PolicyConfig& pc = policy.cfg;
  const int max_len = std::min(cfg.max_rewrite_len, pc.max_rewrite_len);
  const int top_k = cfg.top_k > 0 ? std::min(cfg.top_k, policy.vocab_size) : policy.vocab_size;

  PPOResult result;
  result.model = policy;
  PolicyModel& model = result.model;
  Adam adam(model.params, AdamConfig{0.9, 0.999, 1e-8, 0.0});
  Rng rng(derive_seed(seed, 0x99));
  double beta = cfg.kl_beta_init;

  std::vector<Tokens> states;
  states.reserve(train.examples.size());
  for (const auto& ex : train.examples) {
    states.push_back(serialize_state(ex.history, ex.question.token_ids, pc.history_utterances, pc.max_state_len, train.vocab));
  }
  const long n_train = static_cast<long>(train.examples.size());
  const int iterations = cfg.max_iterations > 0
                             ? cfg.max_iterations
                             : static_cast<int>((static_cast<long>(cfg.max_epochs) * n_train + cfg.batch_size - 1) / cfg.batch_size);

  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t pos = order.size();

  ParamSet best = model.params;
  double best_f1 = -1.0;
  int bad = 0;
  auto evaluate = [&](int iter) {
    const std::vector<Tokens> rw = decode_rewrites(model, valid, pc.history_utterances, pc.max_state_len, max_len,
                                                   static_cast<std::size_t>(cfg.eval_limit));
    CheckpointRow row = score_rewrites(valid, rw, reward_fn);
    row.iter = iter;
    row.beta = beta;
    result.checkpoints.push_back(row);
    if (hooks.on_checkpoint) hooks.on_checkpoint(row, model);
    if (row.f1 > best_f1) {
      best_f1 = row.f1;
      best = model.params;
      result.best_iter = iter;
      bad = 0;
      return false;
    }
    ++bad;
    return cfg.patience > 0 && bad >= cfg.patience;
  };

  evaluate(0);
  for (int it = 1; it <= iterations; ++it) {
    std::vector<Trajectory> trajs;
    trajs.reserve(static_cast<std::size_t>(cfg.batch_size));
    double copies = 0.0, edit = 0.0, reward_sum = 0.0, f1_sum = 0.0;
    for (int i = 0; i < cfg.batch_size; ++i) {
      if (pos >= order.size()) {
        rng.shuffle(std::span<std::size_t>(order));
        pos = 0;
      }
      Trajectory t;
      t.example = order[pos++];
      const CQAExample& ex = train.examples[t.example];
      t.state = states[t.example];
      const std::uint64_t sub = derive_seed(seed, static_cast<std::uint64_t>(it) * 1000003ULL + static_cast<std::uint64_t>(i));
      t.rewrite = sample_top_k(model, t.state, top_k, cfg.top_p, max_len, sub);
      const LogProbsValues lv = log_probs_and_values(model, t.state, t.rewrite);
      t.logp = lv.logp;
      t.values = lv.values;
      t.ref_logp = reference.log_probs(t.state, t.rewrite);
      const Tokens content = strip_eos(t.rewrite, model.eos);
      t.f1 = reward_fn(ex, content);
      t.rewards = shape_rewards(kl_per_token(t.logp, t.ref_logp), t.f1, beta);
      Gae g = compute_gae(t.rewards, t.values, cfg.gamma, cfg.lambda);
      t.advantages = std::move(g.advantages);
      t.returns = std::move(g.returns);
      copies += content == ex.question.token_ids ? 1.0 : 0.0;
      edit += edit_fraction(ex.question.token_ids, content, train.vocab);
      reward_sum += std::accumulate(t.rewards.begin(), t.rewards.end(), 0.0);
      f1_sum += t.f1;
      trajs.push_back(std::move(t));
    }
    const PPOStats st = ppo_update(model, adam, trajs, cfg, aux_pairs, rng);
    const double n = static_cast<double>(cfg.batch_size);
    PPOIterStats is;
    is.iter = it;
    is.mean_reward = reward_sum / n;
    is.mean_f1 = f1_sum / n;
    is.mean_kl = st.mean_kl;
    is.beta = beta;
    is.copy_rate = copies / n;
    is.mean_edit_distance = edit / n;
    is.clip_frac = st.clip_frac;
    is.value_loss = st.value_loss;
    is.policy_loss = st.policy_loss;
    result.iterations.push_back(is);
    if (hooks.on_iteration) hooks.on_iteration(is);
    beta = adapt_kl(beta, st.mean_kl, cfg, n);
    if (it % cfg.eval_every == 0 || it == iterations) {
      if (evaluate(it)) break;
    }
  }
  model.params = std::move(best);
  result.final_beta = beta;
  return result;
}

}  // namespace rrl

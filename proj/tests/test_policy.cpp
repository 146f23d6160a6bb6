#include "rrl/errors.hpp"
#include "rrl/policy.hpp"

#include "support/fixtures.hpp"
#include "support/gradcases.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace rrl;

namespace {

struct Small {
  Dataset ds = generate_dataset(fixtures::tiny_world(41, 6));
  PolicyConfig cfg = [] {
    PolicyConfig c;
    c.d = 8;
    c.d_hidden = 8;
    c.max_rewrite_len = 6;
    c.max_state_len = 40;
    return c;
  }();
  PolicyModel model = init_policy(cfg, ds.vocab, 7);
  Tokens state(std::size_t i) const {
    const auto& ex = ds.examples[i % ds.examples.size()];
    return serialize_state(ex.history, ex.question.token_ids, cfg.history_utterances, cfg.max_state_len, ds.vocab);
  }
};

}  // namespace

TEST(Policy, LossGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto r = gradcases::policy_case(seed);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
  }
}

TEST(Policy, ScoresAreNormalizedLogProbs) {
  Small s;
  ad::Tape tape(false);
  const Tokens state = s.state(3);
  const PolicyState enc = encode_state(tape, s.model, state, false);
  const PolicyForward f = policy_forward(tape, s.model, enc, Tokens{s.model.bos, 5, 6}, false);
  ASSERT_EQ(f.logits.rows(), 3);
  ASSERT_EQ(f.logits.cols(), s.model.vocab_size);
  // log_probs_and_values agrees with a manual softmax over the logits.
  const Tokens out = {5, 6, s.model.eos};
  const LogProbsValues lv = log_probs_and_values(s.model, state, out);
  ASSERT_EQ(lv.logp.size(), 3u);
  ASSERT_EQ(lv.values.size(), 3u);
  Tokens prev = {s.model.bos, 5, 6};
  ad::Tape t2(false);
  const PolicyForward g = policy_forward(t2, s.model, encode_state(t2, s.model, state, false), prev, false);
  for (int r = 0; r < 3; ++r) {
    const auto row = g.logits.value().row(r);
    const double lse = std::log((row.array() - row.maxCoeff()).exp().sum()) + row.maxCoeff();
    EXPECT_NEAR(lv.logp[static_cast<std::size_t>(r)], row(out[static_cast<std::size_t>(r)]) - lse, 1e-9);
    EXPECT_LE(lv.logp[static_cast<std::size_t>(r)], 0.0);
  }
}

TEST(Policy, SamplingIsSeededAndTerminates) {
  Small s;
  for (std::size_t i = 0; i < 5; ++i) {
    const Tokens st = s.state(i);
    const Tokens a = sample_top_k(s.model, st, s.model.vocab_size, 1.0, 5, 100 + i);
    EXPECT_EQ(a, sample_top_k(s.model, st, s.model.vocab_size, 1.0, 5, 100 + i));
    EXPECT_EQ(a.back(), s.model.eos);
    EXPECT_LE(a.size(), 6u);
  }
}

TEST(Policy, TopOneEqualsGreedyEqualsWidthOneBeam) {
  Small s;
  for (std::size_t i = 0; i < 5; ++i) {
    const Tokens st = s.state(i);
    const Tokens g = greedy_decode(s.model, st, 6);
    EXPECT_EQ(sample_top_k(s.model, st, 1, 1.0, 6, 999), g);
    EXPECT_EQ(beam_search(s.model, st, 1, 1.0, 6), g);
  }
}

TEST(Policy, BeamOutputsAreTerminated) {
  Small s;
  for (std::size_t i = 0; i < 5; ++i) {
    const Tokens b = beam_search(s.model, s.state(i), 4, 1.1, 6);
    EXPECT_EQ(b.back(), s.model.eos);
    EXPECT_LE(b.size(), 7u);
    EXPECT_EQ(b, beam_search(s.model, s.state(i), 4, 1.1, 6));
  }
}

TEST(Policy, SamplerRejectsBadArguments) {
  Small s;
  EXPECT_THROW(sample_top_k(s.model, s.state(0), 0, 1.0, 5, 1), PreconditionError);
  EXPECT_THROW(sample_top_k(s.model, s.state(0), 3, 0.0, 5, 1), PreconditionError);
  EXPECT_THROW(beam_search(s.model, s.state(0), 0, 1.0, 5), PreconditionError);
  EXPECT_THROW(beam_search(s.model, s.state(0), 2, 0.5, 5), PreconditionError);
}

TEST(Policy, StripEos) {
  EXPECT_EQ(strip_eos({4, 5, 2}, 2), (Tokens{4, 5}));
  EXPECT_EQ(strip_eos({4, 5}, 2), (Tokens{4, 5}));
}

TEST(Policy, SupervisedTrainingFitsCopyPairs) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(42, 40));
  PolicyConfig cfg;
  cfg.d = 16;
  cfg.d_hidden = 16;
  cfg.lr = 0.01;
  cfg.batch_size = 8;
  cfg.grad_accum = 1;
  cfg.warmup_steps = 5;
  cfg.max_epochs = 8;
  cfg.max_rewrite_len = 8;
  cfg.max_state_len = 40;
  cfg.history_utterances = 0;
  std::vector<StatePair> pairs;
  for (const auto& ex : ds.examples) {
    pairs.emplace_back(serialize_state(ex.history, ex.question.token_ids, 0, 40, ds.vocab), ex.question.token_ids);
  }
  const PolicyModel init = init_policy(cfg, ds.vocab, 3);
  const PolicyTrainResult r = supervised_train(init, pairs, {}, 5);
  ASSERT_FALSE(r.report.epochs.empty());
  EXPECT_LT(r.report.epochs.back().train_loss, r.report.epochs.front().train_loss);
  int copies = 0;
  for (const auto& [st, q] : pairs) copies += strip_eos(greedy_decode(r.model, st, 8), r.model.eos) == q ? 1 : 0;
  EXPECT_GT(copies, static_cast<int>(pairs.size()) / 2);
}

TEST(Policy, CheckpointRoundTrip) {
  Small s;
  const auto dir = fixtures::scratch_dir("policy_ckpt");
  save_policy(dir / "p.ckpt", s.model);
  PolicyModel back = load_policy(dir / "p.ckpt");
  PolicyModel rounded = s.model;
  rounded.params.round_to_float();
  EXPECT_TRUE(back.params == rounded.params);
  EXPECT_EQ(back.eos, s.model.eos);
  EXPECT_EQ(policy_config_json(back.cfg).dump(), policy_config_json(s.model.cfg).dump());
}

TEST(Policy, ReferenceIsFrozenCopy) {
  Small s;
  const ReferencePolicy ref = clone_reference(s.model);
  const Tokens st = s.state(1);
  const Tokens out = {5, s.model.eos};
  const auto before = ref.log_probs(st, out);
  s.model.params[0].value.array() += 1.0;
  EXPECT_EQ(ref.log_probs(st, out), before);
}

TEST(Policy, ConfigValidation) {
  PolicyConfig c;
  c.rep_penalty = 0.5;
  try {
    validate_policy(c);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "policy.rep_penalty");
  }
  c = PolicyConfig{};
  c.init_copy_fraction = 2.0;
  EXPECT_THROW(validate_policy(c), ConfigError);
}

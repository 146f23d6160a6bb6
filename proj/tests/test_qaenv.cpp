#include "rrl/errors.hpp"
#include "rrl/qaenv.hpp"

#include "support/fixtures.hpp"
#include "support/gradcases.hpp"

#include <gtest/gtest.h>

using namespace rrl;

TEST(QAEnv, LossGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto r = gradcases::qa_case(seed);
    EXPECT_LE(r.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_GT(r.checked, 0);
  }
}

TEST(QAEnv, InputWindowAndRecency) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(31, 20));
  QAConfig cfg;
  cfg.history_turns = 1;
  for (const auto& ex : ds.examples) {
    const QAInput in = make_qa_input(ex.question.token_ids, ex.history, ex.document.token_ids, cfg, ds.vocab);
    EXPECT_EQ(in.history.size(), in.recency.size());
    if (ex.history.empty()) {
      EXPECT_TRUE(in.history.empty());
    } else {
      const auto& last = ex.history.back();
      EXPECT_EQ(in.history.size(), last.question.token_ids.size() + last.answer.token_ids.size() + 2);
      EXPECT_EQ(in.recency.front(), 1);
      EXPECT_EQ(in.recency.back(), 0);
    }
  }
  cfg.max_seq_len = 4;
  const auto& ex = ds.examples.front();
  const QAInput cut = make_qa_input(ex.question.token_ids, ex.history, ex.document.token_ids, cfg, ds.vocab);
  EXPECT_TRUE(cut.truncated);
  EXPECT_EQ(cut.document.size(), 4u);
}

TEST(QAEnv, PredictionsAreWellFormed) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(32, 20));
  QAConfig cfg;
  cfg.d = 8;
  cfg.d_hidden = 8;
  cfg.max_answer_len = 2;
  const QAModel m = init_qa(cfg, ds.vocab, 5);
  for (const auto& ex : ds.examples) {
    const QAPrediction p = predict(m, ex.question.token_ids, ex.history, ex.document.token_ids, ds.vocab);
    EXPECT_EQ(p.start_logits.size(), ex.document.token_ids.size());
    if (p.label == Label::span) {
      ASSERT_TRUE(p.span.has_value());
      EXPECT_LE(p.span->start, p.span->end);
      EXPECT_LT(p.span->end - p.span->start, cfg.max_answer_len);
    }
    const double r = reward(p, ex, ds.vocab);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
  CQAExample empty = ds.examples.front();
  EXPECT_THROW(predict(m, empty.question.token_ids, empty.history, Tokens{}, ds.vocab), PreconditionError);
}

TEST(QAEnv, SameSeedSameParameters) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(33, 2));
  QAConfig cfg;
  EXPECT_TRUE(init_qa(cfg, ds.vocab, 9).params == init_qa(cfg, ds.vocab, 9).params);
  EXPECT_FALSE(init_qa(cfg, ds.vocab, 9).params == init_qa(cfg, ds.vocab, 10).params);
}

TEST(QAEnv, TrainingLearnsTinyWorld) {
  auto w = fixtures::tiny_world(34, 120);
  w.ellipsis_prob = 0.0;
  const Splits s = generate_splits(w);
  QAConfig cfg;
  cfg.d = 16;
  cfg.d_hidden = 16;
  cfg.lr = 0.01;
  cfg.batch_size = 8;
  cfg.grad_accum = 1;
  cfg.warmup_steps = 10;
  cfg.max_epochs = 6;
  const QATrainResult r = train_qa(s.train, s.validation, cfg, 3);
  ASSERT_FALSE(r.report.epochs.empty());
  EXPECT_LT(r.report.epochs.back().train_loss, r.report.epochs.front().train_loss);
  const QAModel untrained = init_qa(cfg, s.train.vocab, 3);
  EXPECT_GT(evaluate_qa(r.model, s.validation).mean_f1, evaluate_qa(untrained, s.validation).mean_f1 + 20.0);
}

TEST(QAEnv, CheckpointRoundTrip) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(35, 2));
  QAConfig cfg;
  cfg.history_turns = 2;
  QAModel m = init_qa(cfg, ds.vocab, 4);
  const auto dir = fixtures::scratch_dir("qa_ckpt");
  save_qa(dir / "qa.ckpt", m);
  const QAModel back = load_qa(dir / "qa.ckpt");
  m.params.round_to_float();
  EXPECT_TRUE(back.params == m.params);
  EXPECT_EQ(back.cfg.history_turns, 2);
  EXPECT_EQ(back.vocab_hash, m.vocab_hash);
}

TEST(QAEnv, ConfigValidation) {
  QAConfig cfg;
  cfg.d = 0;
  try {
    validate_qa(cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "qa.d");
  }
  cfg = QAConfig{};
  cfg.augment_kinds = {"XYZ"};
  EXPECT_THROW(validate_qa(cfg), ConfigError);
  EXPECT_NO_THROW(validate_qa(QAConfig{}));
}

TEST(QAEnv, ConfigJsonRoundTrip) {
  QAConfig cfg;
  cfg.d = 12;
  cfg.mixing = Mixing::mean;
  cfg.augment_kinds = {"UPC"};
  EXPECT_EQ(qa_config_json(qa_config_from_json(qa_config_json(cfg))).dump(), qa_config_json(cfg).dump());
  EXPECT_THROW(qa_config_from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
}

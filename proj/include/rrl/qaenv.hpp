#pragma once

// The QA environment: a small extractive reader that scores document
// positions as answer start/end and classifies the answer kind.

#include "rrl/ad.hpp"
#include "rrl/core.hpp"
#include "rrl/params.hpp"
#include "rrl/rng.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rrl {

enum class Mixing { attention, mean };

struct QAConfig {
  // Architecture.
  int d = 32;
  int d_hidden = 32;
  Mixing mixing = Mixing::attention;
  int evidence_heads = 4;
  int max_question_len = 64;
  int max_recency = 16;
  double init_scale = 0.1;
  // Inputs and decoding.
  int history_turns = 3;
  int max_seq_len = 512;
  int max_answer_len = 50;
  int n_best = 1;
  // Optimization.
  double lr = 3e-5;
  int batch_size = 6;
  int grad_accum = 10;
  int max_epochs = 10;
  int patience = 3;
  int warmup_steps = 2000;
  double weight_decay = 0.01;
  double max_grad_norm = 1.0;
  // Surface-noise augmentation during training (applied by the caller's
  // question transform).
  std::vector<std::string> augment_kinds;
  double augment_prob = 0.0;
};

struct QAModel {
  QAConfig cfg;
  int vocab_size = 0;
  int pad_id = 0;
  std::string vocab_hash;
  ParamSet params;
};

// Throws ConfigError naming the offending field ("qa.<name>").
void validate_qa(const QAConfig& cfg);

// Fresh parameters drawn from `seed`.
QAModel init_qa(const QAConfig& cfg, const Vocab& vocab, std::uint64_t seed);

// Model-ready view of one question in context.
struct QAInput {
  Tokens question;
  Tokens history;
  std::vector<int> recency;  // utterance index from the end, per history token
  Tokens document;
  bool truncated = false;
};
QAInput make_qa_input(const Tokens& question, const std::vector<QAPair>& history, const Tokens& document,
                      const QAConfig& cfg, const Vocab& vocab);

struct QAForward {
  ad::Var start;  // n_doc x 1
  ad::Var end;    // n_doc x 1
  ad::Var label;  // 1 x 4
};

// Forward pass over already-embedded inputs (rows are token embeddings).
// `xh` may be an invalid Var when there is no history.
QAForward qa_forward(ad::Tape& tape, const QAModel& model, const ad::Var& xq, const ad::Var& xh, const ad::Var& xd,
                     const std::vector<int>& recency, bool train);

// Embeds `input` from the model's table and runs qa_forward.
QAForward qa_forward(ad::Tape& tape, const QAModel& model, const QAInput& input, bool train);

struct QAPrediction {
  Label label = Label::span;
  std::optional<Span> span;
  std::vector<double> start_logits;
  std::vector<double> end_logits;
  std::array<double, 4> label_logits{};
  bool truncated = false;
};

QAPrediction predict(const QAModel& model, const QAInput& input);
QAPrediction predict(const QAModel& model, const Tokens& question, const std::vector<QAPair>& history,
                     const Tokens& document, const Vocab& vocab);

// Answer tokens of a prediction: the span, or the label word.
Tokens predicted_answer(const QAPrediction& pred, const Tokens& document, const Vocab& vocab);

// Token F1 between rendered predicted and gold answers.
double reward(const QAPrediction& pred, const CQAExample& gold, const Vocab& vocab);

// Sum of start, end (span examples) and label cross-entropies.
ad::Var qa_loss(ad::Tape& tape, const QAModel& model, const QAInput& input, const CQAExample& gold, bool train);

// Replaces a training question before each use (noise augmentation).
using QuestionTransform = std::function<Tokens(const CQAExample&, Rng&)>;

struct QAEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_f1 = 0.0;
};

struct QATrainReport {
  std::vector<QAEpochStats> epochs;
  int best_epoch = 0;
  double best_valid_f1 = 0.0;
  bool stopped_early = false;
};

struct QATrainResult {
  QAModel model;
  QATrainReport report;
};

QATrainResult train_qa(const Dataset& train, const Dataset& valid, const QAConfig& cfg, std::uint64_t seed,
                       const QuestionTransform& transform = {});

// Mean reward over `ds` (x100). `questions` optionally replaces each question.
struct QAEvaluation {
  std::vector<double> f1;      // per example, 0..1
  std::vector<Label> labels;   // predicted labels
  double mean_f1 = 0.0;        // percentage
};
QAEvaluation evaluate_qa(const QAModel& model, const Dataset& ds, const std::vector<Tokens>* questions = nullptr);

void save_qa(const std::filesystem::path& path, const QAModel& model);
QAModel load_qa(const std::filesystem::path& path);

// Field-complete JSON form and its strict inverse (errors name `prefix.field`).
nlohmann::json qa_config_json(const QAConfig& cfg);
QAConfig qa_config_from_json(const nlohmann::json& j, const std::string& prefix = "qa");

}  // namespace rrl

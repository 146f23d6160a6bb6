#include "rrl/experiment.hpp"

#include "rrl/errors.hpp"
#include "rrl/rng.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace rrl {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Seed streams of the subcommands.
constexpr std::uint64_t kStreamQA = 0xA1;
constexpr std::uint64_t kStreamQR = 0xB2;
constexpr std::uint64_t kStreamPairs = 0xB3;
constexpr std::uint64_t kStreamPPO = 0xC3;
constexpr std::uint64_t kStreamAugment = 0xD4;
constexpr std::uint64_t kStreamAugmentQR = 0xD5;
constexpr std::uint64_t kStreamPerturb = 0xE5;
constexpr std::uint64_t kStreamSaliency = 0xF6;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

void log(const std::string& msg) { std::cerr << msg << std::endl; }

void check_vocab(const std::string& model_hash, const Vocab& vocab, const std::string& what) {
  if (model_hash != vocab.fingerprint()) throw ValidationError(what + " was trained on a different vocabulary");
}

// Splits from inputs.data, or generated from the world section.
Splits obtain_splits(const RunConfig& cfg, RunDir& run) {
  if (!cfg.inputs.data.empty()) {
    Splits s = load_splits(cfg.inputs.data);
    for (const char* name : {"train", "validation", "test"}) {
      run.add_input(std::string("data/") + name + ".jsonl", sha256_file(fs::path(cfg.inputs.data) / (std::string(name) + ".jsonl")));
    }
    return s;
  }
  Splits s = generate_splits(cfg.world);
  run.add_input("data/train.jsonl", sha256_hex(dump_dataset(s.train)));
  run.add_input("data/validation.jsonl", sha256_hex(dump_dataset(s.validation)));
  run.add_input("data/test.jsonl", sha256_hex(dump_dataset(s.test)));
  return s;
}

QAModel obtain_qa(const RunConfig& cfg, RunDir& run) {
  if (cfg.inputs.qa.empty()) throw ConfigError("inputs.qa", "a QA checkpoint is required");
  run.add_input("qa.ckpt", sha256_file(cfg.inputs.qa));
  return load_qa(cfg.inputs.qa);
}

PolicyModel obtain_policy(const RunConfig& cfg, RunDir& run) {
  if (cfg.inputs.policy.empty()) throw ConfigError("inputs.policy", "a rewriter checkpoint is required");
  run.add_input("policy.ckpt", sha256_file(cfg.inputs.policy));
  return load_policy(cfg.inputs.policy);
}

QuestionTransform noise_transform(const RunConfig& cfg, const Vocab& vocab) {
  if (cfg.qa.augment_kinds.empty() || cfg.qa.augment_prob <= 0.0) return {};
  auto lexicon = std::make_shared<PerturbationLexicon>(load_lexicon(cfg.perturb.lexicon));
  std::vector<PerturbKind> kinds;
  for (const auto& k : cfg.qa.augment_kinds) kinds.push_back(parse_perturb_kind(k));
  const double p = cfg.qa.augment_prob;
  const double upc = cfg.perturb.upc_prob;
  return [lexicon, kinds, p, upc, &vocab](const CQAExample& ex, Rng& rng) {
    if (!rng.bernoulli(p)) return ex.question.token_ids;
    const PerturbKind kind = kinds[rng.below(kinds.size())];
    return tokenize(perturb(ex.question.text, kind, *lexicon, rng.next(), upc), vocab);
  };
}

ojson qa_report_json(const QATrainReport& r) {
  ojson epochs = ojson::array();
  for (const auto& e : r.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_f1", e.valid_f1}});
  return ojson{{"epochs", epochs},
               {"best_epoch", r.best_epoch},
               {"best_valid_f1", r.best_valid_f1},
               {"stopped_early", r.stopped_early}};
}

ojson policy_report_json(const PolicyTrainReport& r) {
  ojson epochs = ojson::array();
  for (const auto& e : r.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"valid_bleu", e.valid_bleu}});
  return ojson{{"epochs", epochs},
               {"best_epoch", r.best_epoch},
               {"best_valid_bleu", r.best_valid_bleu},
               {"stopped_early", r.stopped_early}};
}

void write_metrics(RunDir& run, const MetricsReport& m) {
  run.write("metrics.json", dump(m.to_json()));
  run.write("metrics.csv", metrics_csv({m}));
}

double copy_rate_of(const std::vector<Tokens>& rewrites, const Dataset& ds) {
  std::vector<Tokens> originals;
  for (const auto& ex : ds.examples) originals.push_back(ex.question.token_ids);
  return copy_rate(rewrites, originals);
}

std::vector<std::vector<std::string>> words_of(const std::vector<Tokens>& seqs, const Vocab& vocab) {
  std::vector<std::vector<std::string>> out;
  for (const auto& s : seqs) {
    std::vector<std::string> w;
    for (int id : s) w.push_back(vocab.token(id));
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

RunDir::RunDir(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  const fs::path lock = dir_ / ".lock";
  std::FILE* f = std::fopen(lock.c_str(), "wx");
  if (f == nullptr) throw Error("run directory " + dir_.string() + " is locked by another process");
  std::fclose(f);
}

RunDir::~RunDir() {
  std::error_code ec;
  fs::remove(dir_ / ".lock", ec);
}

void RunDir::write(const std::string& name, const std::string& content) {
  const fs::path p = dir_ / name;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
  out.close();
  if (!out) throw Error("write failed: " + p.string());
  outputs_[name] = sha256_hex(content);
}

void RunDir::add_output(const std::string& name) { outputs_[name] = sha256_file(dir_ / name); }

void RunDir::add_input(const std::string& name, const std::string& sha256) { inputs_[name] = sha256; }

void RunDir::finish(const std::string& command, const RunConfig& cfg, const std::string& seed_source) {
  const std::string config = dump(run_config_json(cfg));
  write("config.json", config);
  ojson manifest{{"command", command},
                 {"seed", cfg.seed},
                 {"seed_source", seed_source},
                 {"config_sha256", sha256_hex(config)},
                 {"inputs", inputs_},
                 {"outputs", outputs_}};
  std::ofstream out(dir_ / "manifest.json", std::ios::binary);
  out << dump(manifest);
}

std::string apply_seed_overrides(RunConfig& cfg, std::optional<std::uint64_t> cli_seed) {
  std::string source = "config";
  if (const char* env = std::getenv("RRL_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || env[0] == '-') throw ConfigError("RRL_SEED", "expected an unsigned integer");
    cfg.seed = v;
    source = "env";
  }
  if (cli_seed) {
    cfg.seed = *cli_seed;
    source = "cli";
  }
  return source;
}

const Dataset& split_of(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "validation") return s.validation;
  if (name == "test") return s.test;
  throw ConfigError("eval_split", "unknown split '" + name + "'");
}

Splits load_splits(const fs::path& dir) {
  Splits s;
  s.train = load_dataset(dir / "train.jsonl");
  s.validation = load_dataset(dir / "validation.jsonl");
  s.test = load_dataset(dir / "test.jsonl");
  if (!(s.train.vocab == s.validation.vocab) || !(s.train.vocab == s.test.vocab)) {
    throw ValidationError("splits in " + dir.string() + " use different vocabularies");
  }
  return s;
}

std::vector<StatePair> init_pairs(const Dataset& ds, const PolicyConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kStreamPairs));
  std::vector<StatePair> pairs;
  pairs.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) {
    Tokens state = serialize_state(ex.history, ex.question.token_ids, cfg.history_utterances, cfg.max_state_len, ds.vocab);
    const bool copy = rng.bernoulli(cfg.init_copy_fraction);
    pairs.emplace_back(std::move(state), copy ? ex.question.token_ids : ex.gold_rewrite.token_ids);
  }
  return pairs;
}

std::vector<Tokens> rewrite_dataset(const PolicyModel& policy, const Dataset& ds) {
  const PolicyConfig& c = policy.cfg;
  std::vector<Tokens> out;
  out.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) {
    const Tokens state = serialize_state(ex.history, ex.question.token_ids, c.history_utterances, c.max_state_len, ds.vocab);
    const Tokens rw = c.beam_width > 1 ? beam_search(policy, state, c.beam_width, c.rep_penalty, c.max_rewrite_len)
                                       : greedy_decode(policy, state, c.max_rewrite_len);
    out.push_back(strip_eos(rw, policy.eos));
  }
  return out;
}

Dataset with_questions(const Dataset& ds, const std::vector<Tokens>& questions) {
  if (questions.size() != ds.examples.size()) throw PreconditionError("with_questions: count mismatch");
  Dataset out = ds;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    out.examples[i].question = Utterance{detokenize(questions[i], ds.vocab), questions[i]};
  }
  return out;
}

RewardFn qa_reward(const QAModel& qa, const Vocab& vocab) {
  return [&qa, &vocab](const CQAExample& ex, const Tokens& rewrite) {
    return reward(predict(qa, rewrite, ex.history, ex.document.token_ids, vocab), ex, vocab);
  };
}

MetricsReport compute_metrics(const std::string& setting, const QAModel& qa, const Dataset& ds,
                              const std::vector<Tokens>* rewrites, double heq_reference) {
  if (ds.examples.empty()) throw PreconditionError("compute_metrics: empty dataset");
  if (rewrites != nullptr && rewrites->size() != ds.examples.size()) throw PreconditionError("compute_metrics: rewrite count mismatch");
  MetricsReport m;
  m.setting = setting;
  m.n_questions = ds.examples.size();

  std::map<std::string, std::pair<double, double>> domain;
  std::vector<std::vector<double>> model_f1, ref_f1;
  std::string last_dialogue;
  double em = 0.0, total_f1 = 0.0;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const CQAExample& ex = ds.examples[i];
    const Tokens& q = rewrites != nullptr ? (*rewrites)[i] : ex.question.token_ids;
    const QAPrediction p = predict(qa, q, ex.history, ex.document.token_ids, ds.vocab);
    const double f1 = reward(p, ex, ds.vocab);
    total_f1 += f1;
    const auto pred = words_of({predicted_answer(p, ex.document.token_ids, ds.vocab)}, ds.vocab)[0];
    const auto gold = words_of({ex.answer_ids(ds.vocab)}, ds.vocab)[0];
    em += exact_match(pred, gold, true);
    auto& d = domain[ex.domain];
    d.first += f1;
    d.second += 1.0;
    if (model_f1.empty() || ex.dialogue_id != last_dialogue) {
      model_f1.emplace_back();
      ref_f1.emplace_back();
      last_dialogue = ex.dialogue_id;
    }
    model_f1.back().push_back(f1);
    ref_f1.back().push_back(heq_reference);
  }
  m.overall_f1 = 100.0 * total_f1 / static_cast<double>(ds.examples.size());
  m.em = 100.0 * em / static_cast<double>(ds.examples.size());
  for (const auto& [name, v] : domain) m.per_domain_f1[name] = 100.0 * v.first / v.second;
  const HeqResult h = heq(model_f1, ref_f1);
  m.heq_q = h.heq_q;
  m.heq_d = h.heq_d;
  if (rewrites != nullptr) {
    m.copy_rate = copy_rate_of(*rewrites, ds);
    double edit = 0.0;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
      edit += normalized_levenshtein(ds.examples[i].question.text, detokenize((*rewrites)[i], ds.vocab));
    }
    m.mean_edit_distance = edit / static_cast<double>(ds.examples.size());
  } else {
    m.copy_rate = 1.0;
    m.mean_edit_distance = 0.0;
  }
  return m;
}

Correlations correlation_analysis(const std::vector<CheckpointRow>& rows) {
  if (rows.size() < 2) throw PreconditionError("correlation_analysis: need at least 2 checkpoints");
  std::vector<double> f1, copy, edit;
  for (const auto& r : rows) {
    f1.push_back(r.f1);
    copy.push_back(r.copy_rate);
    edit.push_back(r.mean_edit_distance);
  }
  Correlations c;
  c.copy_f1 = pearson(copy, f1);
  c.edit_f1 = pearson(edit, f1);
  c.n_checkpoints = rows.size();
  return c;
}

Correlations correlation_analysis(const fs::path& run_dir) {
  std::ifstream in(run_dir / "checkpoints.jsonl");
  if (!in) throw Error("no checkpoints.jsonl in " + run_dir.string());
  std::vector<CheckpointRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(CheckpointRow::from_json(nlohmann::json::parse(line)));
  }
  return correlation_analysis(rows);
}

std::vector<double> running_mean(const std::vector<double>& xs, std::size_t window) {
  if (window == 0) throw PreconditionError("running_mean: window must be >= 1");
  std::vector<double> out(xs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += xs[i];
    if (i >= window) acc -= xs[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

void run_gen_data(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = generate_splits(cfg.world);
  run.write("train.jsonl", dump_dataset(s.train));
  run.write("validation.jsonl", dump_dataset(s.validation));
  run.write("test.jsonl", dump_dataset(s.test));
  ojson stats{{"train", s.train.examples.size()},
              {"validation", s.validation.examples.size()},
              {"test", s.test.examples.size()},
              {"vocab_size", s.train.vocab.size()},
              {"vocab_sha256", s.train.vocab.fingerprint()}};
  run.write("data_stats.json", dump(stats));
  run.finish("gen-data", cfg, seed_source);
}

void run_train_qa(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  Dataset train = s.train;
  Dataset valid = s.validation;
  std::vector<Tokens> valid_rewrites;
  if (cfg.setting == "pipeline") {
    const PolicyModel policy = obtain_policy(cfg, run);
    check_vocab(policy.vocab_hash, train.vocab, "rewriter");
    log("train-qa: rewriting training questions");
    train = with_questions(train, rewrite_dataset(policy, train));
    valid_rewrites = rewrite_dataset(policy, valid);
    valid = with_questions(valid, valid_rewrites);
  } else if (cfg.setting != "end-to-end") {
    throw ConfigError("setting", "train-qa supports \"end-to-end\" and \"pipeline\"");
  }
  log("train-qa: training (" + cfg.setting + ")");
  QATrainResult r = train_qa(train, valid, cfg.qa, derive_seed(cfg.seed, kStreamQA), noise_transform(cfg, train.vocab));
  r.model.params.round_to_float();
  save_qa(run.file("qa.ckpt"), r.model);
  run.add_output("qa.ckpt");
  run.write("train_report.json", dump(qa_report_json(r.report)));
  const MetricsReport m = compute_metrics(cfg.setting, r.model, s.validation,
                                          cfg.setting == "pipeline" ? &valid_rewrites : nullptr, cfg.heq_reference);
  write_metrics(run, m);
  log("train-qa: validation F1 " + format_pct(m.overall_f1));
  run.finish("train-qa", cfg, seed_source);
}

void run_train_qr(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  const std::vector<StatePair> train = init_pairs(s.train, cfg.policy, cfg.seed);
  PolicyConfig gold_cfg = cfg.policy;
  gold_cfg.init_copy_fraction = 0.0;
  const std::vector<StatePair> valid = init_pairs(s.validation, gold_cfg, cfg.seed);
  const PolicyModel init = init_policy(cfg.policy, s.train.vocab, derive_seed(cfg.seed, kStreamQR));
  log("train-qr: supervised training on " + std::to_string(train.size()) + " pairs");
  PolicyTrainResult r = supervised_train(init, train, valid, derive_seed(cfg.seed, kStreamQR + 1));
  r.model.params.round_to_float();
  save_policy(run.file("policy.ckpt"), r.model);
  run.add_output("policy.ckpt");

  const std::vector<Tokens> rewrites = rewrite_dataset(r.model, s.validation);
  std::vector<Tokens> gold;
  for (const auto& ex : s.validation.examples) gold.push_back(ex.gold_rewrite.token_ids);
  double em = 0.0;
  for (std::size_t i = 0; i < gold.size(); ++i) em += rewrites[i] == gold[i] ? 1.0 : 0.0;
  ojson report = policy_report_json(r.report);
  report["validation"] = {{"bleu", bleu(words_of(rewrites, s.validation.vocab), words_of(gold, s.validation.vocab))},
                          {"rewrite_em", 100.0 * em / static_cast<double>(std::max<std::size_t>(gold.size(), 1))},
                          {"copy_rate", copy_rate_of(rewrites, s.validation)}};
  run.write("train_report.json", dump(report));
  log("train-qr: validation copy rate " + format_pct(100.0 * copy_rate_of(rewrites, s.validation)) + "%");
  run.finish("train-qr", cfg, seed_source);
}

void run_train_ppo(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  const QAModel qa = obtain_qa(cfg, run);
  const PolicyModel init = obtain_policy(cfg, run);
  check_vocab(qa.vocab_hash, s.train.vocab, "QA model");
  check_vocab(init.vocab_hash, s.train.vocab, "rewriter");
  const ReferencePolicy reference = clone_reference(init);
  const RewardFn reward_fn = qa_reward(qa, s.train.vocab);
  const std::vector<StatePair> aux = init_pairs(s.train, init.cfg, cfg.seed);

  std::ostringstream iter_log, ckpt_log;
  PPOHooks hooks;
  hooks.on_iteration = [&](const PPOIterStats& st) {
    iter_log << st.to_json().dump() << '\n';
    if (st.iter % 10 == 0) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "train-ppo: iter %d reward %.3f kl %.3f beta %.4f copy %.2f", st.iter,
                    st.mean_reward, st.mean_kl, st.beta, st.copy_rate);
      log(buf);
    }
  };
  hooks.on_checkpoint = [&](const CheckpointRow& row, const PolicyModel&) {
    ckpt_log << row.to_json().dump() << '\n';
    char buf[160];
    std::snprintf(buf, sizeof buf, "train-ppo: checkpoint %d f1 %.1f copy %.3f edit %.3f", row.iter, row.f1,
                  row.copy_rate, row.mean_edit_distance);
    log(buf);
  };
  PPOResult r = train_loop(init, reference, reward_fn, s.train, s.validation, cfg.ppo, aux,
                           derive_seed(cfg.seed, kStreamPPO), hooks);
  r.model.params.round_to_float();
  save_policy(run.file("policy.ckpt"), r.model);
  run.add_output("policy.ckpt");
  run.write("iterations.jsonl", iter_log.str());
  run.write("checkpoints.jsonl", ckpt_log.str());

  const std::vector<Tokens> init_rw = rewrite_dataset(init, s.validation);
  const std::vector<Tokens> final_rw = rewrite_dataset(r.model, s.validation);
  MetricsReport m = compute_metrics("rl", qa, s.validation, &final_rw, cfg.heq_reference);
  const MetricsReport m0 = compute_metrics("rl-init", qa, s.validation, &init_rw, cfg.heq_reference);

  ojson summary{{"iterations", r.iterations.size()},
                {"best_iter", r.best_iter},
                {"final_beta", r.final_beta},
                {"init_copy_rate", m0.copy_rate},
                {"final_copy_rate", m.copy_rate},
                {"init_f1", m0.overall_f1},
                {"final_f1", m.overall_f1}};
  try {
    const Correlations c = correlation_analysis(r.checkpoints);
    m.correlations["copy_rate_f1"] = c.copy_f1;
    m.correlations["edit_distance_f1"] = c.edit_f1;
    summary["correlations"] = {{"copy_rate_f1", c.copy_f1}, {"edit_distance_f1", c.edit_f1}, {"n_checkpoints", c.n_checkpoints}};
  } catch (const Error& e) {
    summary["correlations"] = {{"error", e.what()}, {"n_checkpoints", r.checkpoints.size()}};
  }
  std::vector<double> kl;
  for (const auto& it : r.iterations) kl.push_back(it.mean_kl);
  summary["kl_target"] = cfg.ppo.kl_target;
  summary["mean_kl"] = kl.empty() ? 0.0 : std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(kl.size());
  write_metrics(run, m);
  run.write("summary.json", dump(summary));
  log("train-ppo: validation F1 " + format_pct(m.overall_f1) + ", copy rate " + format_pct(100.0 * m.copy_rate) + "%");
  run.finish("train-ppo", cfg, seed_source);
}

void run_augment(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  const QAModel qa = obtain_qa(cfg, run);
  const PolicyModel policy = obtain_policy(cfg, run);
  check_vocab(qa.vocab_hash, s.train.vocab, "QA model");
  check_vocab(policy.vocab_hash, s.train.vocab, "rewriter");

  log("augment: selecting rewrites");
  const AugmentResult tr = build_augmented_dataset(policy, qa, s.train, cfg.augment, derive_seed(cfg.seed, kStreamAugment));
  const AugmentResult va =
      build_augmented_dataset(policy, qa, s.validation, cfg.augment, derive_seed(cfg.seed, kStreamAugment + 1));
  run.write("augmented_train.jsonl", augment_jsonl(tr.records));
  run.write("augmented_validation.jsonl", augment_jsonl(va.records));
  std::size_t violations = 0;
  for (const auto* res : {&tr, &va}) {
    for (const auto& rec : res->records) violations += rec.f1 < rec.original_f1 ? 1 : 0;
  }

  log("augment: retraining a fresh rewriter");
  const PolicyModel fresh = init_policy(policy.cfg, s.train.vocab, derive_seed(cfg.seed, kStreamAugmentQR));
  PolicyTrainResult retrained = supervised_train(fresh, tr.pairs(), va.pairs(), derive_seed(cfg.seed, kStreamAugmentQR + 1));
  retrained.model.params.round_to_float();
  save_policy(run.file("policy.ckpt"), retrained.model);
  run.add_output("policy.ckpt");

  const std::vector<Tokens> rewrites = rewrite_dataset(retrained.model, s.validation);
  const MetricsReport e2e = compute_metrics("end-to-end", qa, s.validation, nullptr, cfg.heq_reference);
  const MetricsReport aug = compute_metrics("augmented", qa, s.validation, &rewrites, cfg.heq_reference);
  run.write("table5.csv", metrics_csv({e2e, aug}));
  ojson report{{"train", tr.report.to_json()},
               {"validation", va.report.to_json()},
               {"dominance_violations", violations},
               {"retrain", policy_report_json(retrained.report)},
               {"end_to_end_f1", e2e.overall_f1},
               {"augmented_f1", aug.overall_f1},
               {"delta_f1", aug.overall_f1 - e2e.overall_f1}};
  run.write("augment_report.json", dump(report));
  log("augment: end-to-end F1 " + format_pct(e2e.overall_f1) + ", augmented F1 " + format_pct(aug.overall_f1));
  run.finish("augment", cfg, seed_source);
}

void run_evaluate(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  const Dataset& ds = split_of(s, cfg.eval_split);
  const QAModel qa = obtain_qa(cfg, run);
  check_vocab(qa.vocab_hash, ds.vocab, "QA model");
  MetricsReport m;
  if (!cfg.inputs.policy.empty()) {
    const PolicyModel policy = obtain_policy(cfg, run);
    check_vocab(policy.vocab_hash, ds.vocab, "rewriter");
    const std::vector<Tokens> rewrites = rewrite_dataset(policy, ds);
    m = compute_metrics(cfg.setting, qa, ds, &rewrites, cfg.heq_reference);
  } else {
    m = compute_metrics(cfg.setting, qa, ds, nullptr, cfg.heq_reference);
  }
  write_metrics(run, m);
  run.finish("evaluate", cfg, seed_source);
}

void run_perturb_eval(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  const Dataset& ds = split_of(s, cfg.eval_split);
  const QAModel qa = obtain_qa(cfg, run);
  check_vocab(qa.vocab_hash, ds.vocab, "QA model");
  run.add_input("lexicon.json", sha256_file(cfg.perturb.lexicon));
  const PerturbationLexicon lex = load_lexicon(cfg.perturb.lexicon);
  const auto rows = robustness_eval(qa, ds, cfg.perturb.kinds, lex, derive_seed(cfg.seed, kStreamPerturb), cfg.perturb.upc_prob);
  run.write("robustness.csv", robustness_csv(rows));
  ojson j = ojson::array();
  for (const auto& r : rows) {
    j.push_back({{"kind", r.kind},
                 {"f1", r.f1},
                 {"delta_f1", r.delta_f1},
                 {"label_acc", r.label_acc},
                 {"delta_label_acc", r.delta_label_acc},
                 {"span_f1", r.span_f1},
                 {"delta_span_f1", r.delta_span_f1},
                 {"ld_fraction", r.ld_fraction},
                 {"bleu", r.bleu}});
  }
  run.write("robustness.json", dump(j));
  run.finish("perturb-eval", cfg, seed_source);
}

void run_saliency(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  RunDir run(out);
  const Splits s = obtain_splits(cfg, run);
  const Dataset& ds = split_of(s, cfg.eval_split);
  const QAModel qa = obtain_qa(cfg, run);
  check_vocab(qa.vocab_hash, ds.vocab, "QA model");
  std::vector<Tokens> rewrites;
  if (!cfg.inputs.policy.empty()) {
    const PolicyModel policy = obtain_policy(cfg, run);
    check_vocab(policy.vocab_hash, ds.vocab, "rewriter");
    rewrites = rewrite_dataset(policy, ds);
  }
  const SaliencyReport rep =
      saliency_report(qa, ds, rewrites.empty() ? nullptr : &rewrites, cfg.saliency, derive_seed(cfg.seed, kStreamSaliency));
  run.write("saliency.csv", saliency_csv(rep));
  run.write("saliency.json", dump(rep.to_json()));
  run.finish("saliency", cfg, seed_source);
}

void run_report(const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  if (cfg.inputs.runs.empty()) throw ConfigError("inputs.runs", "report needs at least one run directory");
  RunDir run(out);
  std::vector<MetricsReport> rows;
  ojson corr = ojson::object();
  for (const auto& dir : cfg.inputs.runs) {
    const fs::path p = fs::path(dir) / "metrics.json";
    const std::string text = read_file(p);
    run.add_input(fs::path(dir).filename().string() + "/metrics.json", sha256_hex(text));
    rows.push_back(MetricsReport::from_json(nlohmann::json::parse(text)));
    if (fs::exists(fs::path(dir) / "checkpoints.jsonl")) {
      try {
        const Correlations c = correlation_analysis(fs::path(dir));
        corr[rows.back().setting] = {{"copy_rate_f1", c.copy_f1}, {"edit_distance_f1", c.edit_f1}, {"n_checkpoints", c.n_checkpoints}};
      } catch (const Error& e) {
        corr[rows.back().setting] = {{"error", e.what()}};
      }
    }
  }
  run.write("table1.csv", metrics_csv(rows));
  ojson rj{{"rows", ojson::array()}, {"correlations", corr}};
  for (const auto& r : rows) rj["rows"].push_back(r.to_json());
  run.write("report.json", dump(rj));
  run.finish("report", cfg, seed_source);
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"gen-data", "train-qa", "train-qr",     "train-ppo", "augment",
                                                 "evaluate", "perturb-eval", "saliency", "report"};
  return names;
}

void run_subcommand(const std::string& name, const RunConfig& cfg, const fs::path& out, const std::string& seed_source) {
  if (name == "gen-data") return run_gen_data(cfg, out, seed_source);
  if (name == "train-qa") return run_train_qa(cfg, out, seed_source);
  if (name == "train-qr") return run_train_qr(cfg, out, seed_source);
  if (name == "train-ppo") return run_train_ppo(cfg, out, seed_source);
  if (name == "augment") return run_augment(cfg, out, seed_source);
  if (name == "evaluate") return run_evaluate(cfg, out, seed_source);
  if (name == "perturb-eval") return run_perturb_eval(cfg, out, seed_source);
  if (name == "saliency") return run_saliency(cfg, out, seed_source);
  if (name == "report") return run_report(cfg, out, seed_source);
  throw ConfigError("subcommand", "unknown subcommand '" + name + "'");
}

}  // namespace rrl

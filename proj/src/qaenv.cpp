#include "rrl/qaenv.hpp"

#include "rrl/errors.hpp"
#include "rrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rrl {

namespace {

enum QAParam : std::size_t { kEmb, kQpos, kHrec, kNullK, kNullV, kWq, kWk, kWu, kBu, kWz, kBz, kAs, kAe, kAg, kCg, kWl, kBl };

void fill_normal(ad::Mat& m, double std, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std * rng.normal();
}

int argmax_first(const ad::Mat& v, Eigen::Index lo, Eigen::Index hi) {
  Eigen::Index best = lo;
  for (Eigen::Index i = lo + 1; i < hi; ++i) {
    if (v(i) > v(best)) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace

QAModel init_qa(const QAConfig& cfg, const Vocab& vocab, std::uint64_t seed) {
  QAModel m;
  m.cfg = cfg;
  m.vocab_size = vocab.size();
  m.pad_id = vocab.pad();
  m.vocab_hash = vocab.fingerprint();
  const int d = cfg.d, h = cfg.d_hidden, k = cfg.evidence_heads;
  auto& p = m.params;
  p.add("emb", vocab.size(), d);
  p.add("qpos", cfg.max_question_len, d);
  p.add("hrec", cfg.max_recency, d);
  p.add("null_k", 1, d);
  p.add("null_v", 1, d);
  p.add("wq", d, d);
  p.add("wk", d, d);
  p.add("wu", 2 * d, h);
  p.add("bu", 1, h);
  p.add("wz", 5 * d, h);
  p.add("bz", 1, h);
  p.add("as", h, h);
  p.add("ae", h, h);
  p.add("ag", h, h);
  p.add("cg", h, k);
  p.add("wl", h + k, kNumLabels);
  p.add("bl", 1, kNumLabels);

  Rng rng(derive_seed(seed, 0x9a));
  for (std::size_t i : {kEmb, kQpos, kHrec, kNullK, kNullV}) fill_normal(p[i].value, cfg.init_scale, rng);
  for (std::size_t i : {kWq, kWk, kWu, kWz, kAs, kAe, kAg, kCg, kWl}) {
    fill_normal(p[i].value, 1.0 / std::sqrt(static_cast<double>(p[i].value.rows())), rng);
  }
  return m;
}

QAInput make_qa_input(const Tokens& question, const std::vector<QAPair>& history, const Tokens& document,
                      const QAConfig& cfg, const Vocab& vocab) {
  QAInput in;
  const std::size_t qmax = static_cast<std::size_t>(cfg.max_question_len);
  in.question.assign(question.begin(), question.begin() + static_cast<std::ptrdiff_t>(std::min(question.size(), qmax)));
  const std::size_t turns = std::min<std::size_t>(history.size(), static_cast<std::size_t>(std::max(cfg.history_turns, 0)));
  for (std::size_t i = history.size() - turns; i < history.size(); ++i) {
    const int from_end = static_cast<int>(history.size() - 1 - i);
    const int rq = std::min(2 * from_end + 1, cfg.max_recency - 1);
    const int ra = std::min(2 * from_end, cfg.max_recency - 1);
    for (int t : history[i].question.token_ids) {
      in.history.push_back(t);
      in.recency.push_back(rq);
    }
    in.history.push_back(vocab.sep());
    in.recency.push_back(rq);
    for (int t : history[i].answer.token_ids) {
      in.history.push_back(t);
      in.recency.push_back(ra);
    }
    in.history.push_back(vocab.sep());
    in.recency.push_back(ra);
  }
  const std::size_t dmax = static_cast<std::size_t>(cfg.max_seq_len);
  in.truncated = document.size() > dmax;
  in.document.assign(document.begin(), document.begin() + static_cast<std::ptrdiff_t>(std::min(document.size(), dmax)));
  return in;
}

QAForward qa_forward(ad::Tape& tape, const QAModel& model, const ad::Var& xq, const ad::Var& xh, const ad::Var& xd,
                     const std::vector<int>& recency, bool train) {
  using namespace ad;
  const QAConfig& c = model.cfg;
  auto W = [&](std::size_t i) { return model.params.bind(tape, i, train); };
  const Eigen::Index d = c.d;

  Var q_vec;
  if (xq.valid() && xq.rows() > 0) {
    q_vec = mean_rows(add(xq, slice_rows(W(kQpos), 0, xq.rows())));
  } else {
    q_vec = tape.constant(Mat::Zero(1, d));
  }

  const bool has_h = xh.valid() && xh.rows() > 0;
  Var h_vec;
  if (c.mixing == Mixing::attention) {
    Var keys = W(kNullK);
    Var vals = W(kNullV);
    if (has_h) {
      const Var rec = gather_rows(W(kHrec), recency);
      const Var kparts[] = {keys, add(xh, rec)};
      const Var vparts[] = {vals, xh};
      keys = concat_rows(kparts);
      vals = concat_rows(vparts);
    }
    const Var qh = matmul(q_vec, W(kWq));
    const Var scores = scale(matmul(qh, transpose(matmul(keys, W(kWk)))), 1.0 / std::sqrt(static_cast<double>(d)));
    h_vec = matmul(softmax_rows(scores), vals);
  } else if (has_h) {
    h_vec = mean_rows(add(xh, gather_rows(W(kHrec), recency)));
  } else {
    h_vec = tape.constant(Mat::Zero(1, d));
  }

  const Var qh_parts[] = {q_vec, h_vec};
  const Var u = tanh(add(matmul(concat_cols(qh_parts), W(kWu)), W(kBu)));

  const Eigen::Index nd = xd.rows();
  const int pad_row[] = {model.pad_id};
  const Var pad = gather_rows(W(kEmb), pad_row);
  const Var padded_parts[] = {pad, pad, pad, xd, pad};
  const Var padded = concat_rows(padded_parts);
  const Var windows[] = {slice_rows(padded, 0, nd), slice_rows(padded, 1, nd), slice_rows(padded, 2, nd),
                         slice_rows(padded, 3, nd), slice_rows(padded, 4, nd)};
  const Var z = tanh(add_row(matmul(concat_cols(windows), W(kWz)), W(kBz)));

  const Var ut = transpose(u);
  QAForward out;
  out.start = matmul(z, matmul(W(kAs), ut));
  out.end = matmul(z, matmul(W(kAe), ut));
  const Var evidence = logsumexp_rows(matmul(mul_row(z, matmul(u, W(kAg))), W(kCg)));
  const Var lparts[] = {u, evidence};
  out.label = add(matmul(concat_cols(lparts), W(kWl)), W(kBl));
  return out;
}

QAForward qa_forward(ad::Tape& tape, const QAModel& model, const QAInput& input, bool train) {
  const ad::Var emb = model.params.bind(tape, kEmb, train);
  ad::Var xq, xh;
  if (!input.question.empty()) xq = ad::gather_rows(emb, input.question);
  if (!input.history.empty()) xh = ad::gather_rows(emb, input.history);
  const ad::Var xd = ad::gather_rows(emb, input.document);
  return qa_forward(tape, model, xq, xh, xd, input.recency, train);
}

QAPrediction predict(const QAModel& model, const QAInput& input) {
  if (input.document.empty()) throw PreconditionError("predict: empty document");
  ad::Tape tape(false);
  const QAForward f = qa_forward(tape, model, input, false);
  QAPrediction p;
  p.truncated = input.truncated;
  const ad::Mat& s = f.start.value();
  const ad::Mat& e = f.end.value();
  const ad::Mat& l = f.label.value();
  p.start_logits.assign(s.data(), s.data() + s.size());
  p.end_logits.assign(e.data(), e.data() + e.size());
  for (int i = 0; i < kNumLabels; ++i) p.label_logits[static_cast<std::size_t>(i)] = l(0, i);
  p.label = static_cast<Label>(argmax_first(l.transpose(), 0, kNumLabels));
  if (p.label == Label::span) {
    const int start = argmax_first(s, 0, s.rows());
    const Eigen::Index hi = std::min<Eigen::Index>(s.rows(), start + std::max(model.cfg.max_answer_len, 1));
    const int end = argmax_first(e, start, hi);
    p.span = Span{start, end};
  }
  return p;
}

QAPrediction predict(const QAModel& model, const Tokens& question, const std::vector<QAPair>& history,
                     const Tokens& document, const Vocab& vocab) {
  return predict(model, make_qa_input(question, history, document, model.cfg, vocab));
}

Tokens predicted_answer(const QAPrediction& pred, const Tokens& document, const Vocab& vocab) {
  if (pred.label == Label::span && pred.span) {
    return Tokens(document.begin() + pred.span->start, document.begin() + pred.span->end + 1);
  }
  return {vocab.lookup(label_name(pred.label))};
}

double reward(const QAPrediction& pred, const CQAExample& gold, const Vocab& vocab) {
  auto words = [&](const Tokens& ids) {
    std::vector<std::string> w;
    for (int id : ids) w.push_back(vocab.token(id));
    return w;
  };
  return token_f1(words(predicted_answer(pred, gold.document.token_ids, vocab)), words(gold.answer_ids(vocab)), true);
}

ad::Var qa_loss(ad::Tape& tape, const QAModel& model, const QAInput& input, const CQAExample& gold, bool train) {
  using namespace ad;
  const QAForward f = qa_forward(tape, model, input, train);
  Var loss = scale(pick(log_softmax_rows(f.label), 0, static_cast<int>(gold.gold_label)), -1.0);
  const Eigen::Index nd = static_cast<Eigen::Index>(input.document.size());
  if (gold.gold_label == Label::span && gold.gold_span && gold.gold_span->end < nd) {
    loss = sub(loss, pick(log_softmax_rows(transpose(f.start)), 0, gold.gold_span->start));
    loss = sub(loss, pick(log_softmax_rows(transpose(f.end)), 0, gold.gold_span->end));
  }
  return loss;
}

QAEvaluation evaluate_qa(const QAModel& model, const Dataset& ds, const std::vector<Tokens>* questions) {
  if (questions != nullptr && questions->size() != ds.examples.size()) {
    throw PreconditionError("evaluate_qa: question count mismatch");
  }
  QAEvaluation ev;
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const CQAExample& ex = ds.examples[i];
    const Tokens& q = questions != nullptr ? (*questions)[i] : ex.question.token_ids;
    const QAPrediction p = predict(model, q, ex.history, ex.document.token_ids, ds.vocab);
    ev.f1.push_back(reward(p, ex, ds.vocab));
    ev.labels.push_back(p.label);
  }
  if (!ev.f1.empty()) ev.mean_f1 = 100.0 * std::accumulate(ev.f1.begin(), ev.f1.end(), 0.0) / static_cast<double>(ev.f1.size());
  return ev;
}

QATrainResult train_qa(const Dataset& train, const Dataset& valid, const QAConfig& cfg, std::uint64_t seed,
                       const QuestionTransform& transform) {
  if (train.examples.empty()) throw PreconditionError("train_qa: empty training set");
  if (!(valid.vocab == train.vocab)) throw ValidationError("train_qa: train and validation vocabs differ");

  QATrainResult result;
  result.model = init_qa(cfg, train.vocab, seed);
  QAModel& model = result.model;
  Adam adam(model.params, AdamConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  Rng rng(derive_seed(seed, 0x7a));

  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.batch_size * std::max(1, cfg.grad_accum)));

  ParamSet best = model.params;
  double best_f1 = -1.0;
  int bad = 0;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += chunk) {
      const std::size_t e = std::min(order.size(), b + chunk);
      model.params.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const CQAExample& ex = train.examples[order[k]];
        const Tokens q = transform ? transform(ex, rng) : ex.question.token_ids;
        const QAInput in = make_qa_input(q, ex.history, ex.document.token_ids, cfg, train.vocab);
        ad::Tape tape;
        const ad::Var loss = qa_loss(tape, model, in, ex, true);
        const double lv = loss.scalar();
        if (!std::isfinite(lv)) {
          throw NumericError("train_qa: non-finite loss at epoch " + std::to_string(epoch) + ", example " +
                             ex.dialogue_id + " turn " + std::to_string(ex.turn));
        }
        loss_sum += lv;
        tape.backward(loss, 1.0 / static_cast<double>(e - b));
      }
      if (!model.params.grads_finite()) throw NumericError("train_qa: non-finite gradient at epoch " + std::to_string(epoch));
      clip_grad_norm(model.params, cfg.max_grad_norm);
      adam.step(model.params, warmup_lr(cfg.lr, step, cfg.warmup_steps));
      ++step;
    }
    QAEpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(order.size());
    st.valid_f1 = evaluate_qa(model, valid).mean_f1;
    result.report.epochs.push_back(st);
    if (st.valid_f1 > best_f1) {
      best_f1 = st.valid_f1;
      best = model.params;
      result.report.best_epoch = epoch;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      result.report.stopped_early = true;
      break;
    }
  }
  model.params = std::move(best);
  result.report.best_valid_f1 = best_f1;
  return result;
}

void save_qa(const std::filesystem::path& path, const QAModel& model) {
  nlohmann::json meta;
  meta["kind"] = "qa";
  meta["config"] = qa_config_json(model.cfg);
  meta["d"] = model.cfg.d;
  meta["vocab_size"] = model.vocab_size;
  meta["pad_id"] = model.pad_id;
  meta["vocab_hash"] = model.vocab_hash;
  save_checkpoint(path, model.params, meta);
}

QAModel load_qa(const std::filesystem::path& path) {
  nlohmann::json meta;
  QAModel m;
  m.params = load_checkpoint(path, &meta);
  if (meta.value("kind", "") != "qa") throw ValidationError("not a QA checkpoint: " + path.string());
  m.cfg = qa_config_from_json(meta.at("config"), "checkpoint.config");
  m.vocab_size = meta.at("vocab_size").get<int>();
  m.pad_id = meta.at("pad_id").get<int>();
  m.vocab_hash = meta.at("vocab_hash").get<std::string>();
  return m;
}

}  // namespace rrl

#include "rrl/policy.hpp"

#include "rrl/errors.hpp"
#include "rrl/metrics.hpp"
#include "rrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace rrl {

namespace {

enum PolicyParam : std::size_t {
  kEmb, kQkey, kHrec, kOpos, kWqa, kWka, kWqb, kWkb, kNullK, kNullV, kW1, kB1, kWo, kBo, kWv, kBv
};

void fill_normal(ad::Mat& m, double std, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std * rng.normal();
}

ad::Mat causal_mean(Eigen::Index n) {
  ad::Mat c = ad::Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) c.row(i).head(i + 1).setConstant(1.0 / static_cast<double>(i + 1));
  return c;
}

// Row `row` of `logits` as a vector.
std::vector<double> row_of(const ad::Mat& logits, Eigen::Index row) {
  std::vector<double> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out[static_cast<std::size_t>(j)] = logits(row, j);
  return out;
}

std::vector<double> log_softmax(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

// Logits of the next token after `generated`.
std::vector<double> next_logits(ad::Tape& tape, const PolicyModel& model, const PolicyState& enc,
                                const Tokens& generated) {
  Tokens prev{model.bos};
  prev.insert(prev.end(), generated.begin(), generated.end());
  const PolicyForward f = policy_forward(tape, model, enc, prev, false);
  return row_of(f.logits.value(), f.logits.rows() - 1);
}

}  // namespace

PolicyModel init_policy(const PolicyConfig& cfg, const Vocab& vocab, std::uint64_t seed) {
  PolicyModel m;
  m.cfg = cfg;
  m.vocab_size = vocab.size();
  m.bos = vocab.bos();
  m.eos = vocab.eos();
  m.sep = vocab.sep();
  m.pad = vocab.pad();
  m.vocab_hash = vocab.fingerprint();
  const int d = cfg.d, h = cfg.d_hidden, v = vocab.size();
  auto& p = m.params;
  p.add("emb", v, d);
  p.add("qkey", cfg.max_question_len, d);
  p.add("hrec", cfg.max_recency, d);
  p.add("opos", cfg.max_rewrite_len + 1, d);
  p.add("wqa", d, d);
  p.add("wka", d, d);
  p.add("wqb", 2 * d, d);
  p.add("wkb", d, d);
  p.add("null_k", 1, d);
  p.add("null_v", 1, d);
  p.add("w1", 5 * d, h);
  p.add("b1", 1, h);
  p.add("wo", h, v);
  p.add("bo", 1, v);
  p.add("wv", h, 1);
  p.add("bv", 1, 1);

  Rng rng(derive_seed(seed, 0x90));
  for (std::size_t i : {kEmb, kQkey, kHrec, kOpos, kNullK, kNullV}) fill_normal(p[i].value, cfg.init_scale, rng);
  for (std::size_t i : {kWqa, kWka, kWqb, kWkb, kW1, kWo}) {
    fill_normal(p[i].value, 1.0 / std::sqrt(static_cast<double>(p[i].value.rows())), rng);
  }
  return m;
}

PolicyState encode_state(ad::Tape& tape, const PolicyModel& model, const Tokens& state, bool train) {
  using namespace ad;
  const PolicyConfig& c = model.cfg;
  auto W = [&](std::size_t i) { return model.params.bind(tape, i, train); };

  std::size_t last_sep = 0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] == model.sep) last_sep = i;
  }
  const std::size_t first = !state.empty() && state[0] == model.bos ? 1 : 0;
  const std::size_t q_begin = last_sep > 0 ? last_sep + 1 : first;

  Tokens q(state.begin() + static_cast<std::ptrdiff_t>(q_begin), state.end());
  if (q.empty()) q.push_back(model.eos);
  std::vector<int> qpos(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) qpos[i] = std::min<int>(static_cast<int>(i), c.max_question_len - 1);

  Tokens hist;
  std::vector<int> rec;
  if (last_sep > 0) {
    int seps_after = 0;
    for (std::size_t i = first; i <= last_sep; ++i) seps_after += state[i] == model.sep ? 1 : 0;
    for (std::size_t i = first; i <= last_sep; ++i) {
      hist.push_back(state[i]);
      rec.push_back(std::min(seps_after - 1, c.max_recency - 1));
      if (state[i] == model.sep) --seps_after;
    }
  }

  const Var emb = W(kEmb);
  PolicyState enc;
  enc.question = gather_rows(emb, q);
  enc.question_keys = matmul(add(enc.question, gather_rows(W(kQkey), qpos)), W(kWka));
  Var keys = W(kNullK);
  Var vals = W(kNullV);
  if (!hist.empty()) {
    const Var eh = gather_rows(emb, hist);
    const Var kparts[] = {keys, add(eh, gather_rows(W(kHrec), rec))};
    const Var vparts[] = {vals, eh};
    keys = concat_rows(kparts);
    vals = concat_rows(vparts);
  }
  enc.history_keys = matmul(keys, W(kWkb));
  enc.history_values = vals;
  return enc;
}

PolicyForward policy_forward(ad::Tape& tape, const PolicyModel& model, const PolicyState& enc, const Tokens& prev,
                             bool train) {
  using namespace ad;
  const PolicyConfig& c = model.cfg;
  auto W = [&](std::size_t i) { return model.params.bind(tape, i, train); };
  const Eigen::Index len = static_cast<Eigen::Index>(prev.size());
  if (len > c.max_rewrite_len + 1) throw PreconditionError("rewrite longer than max_rewrite_len");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c.d));

  const Var p = gather_rows(W(kEmb), prev);
  const Var o = slice_rows(W(kOpos), 0, len);
  const Var qa = matmul(add(p, o), W(kWqa));
  const Var att_a = softmax_rows(scale(matmul(qa, transpose(enc.question_keys)), inv_sqrt_d));
  const Var ca = matmul(att_a, enc.question);
  const Var qb_parts[] = {p, ca};
  const Var qb = matmul(concat_cols(qb_parts), W(kWqb));
  const Var att_b = softmax_rows(scale(matmul(qb, transpose(enc.history_keys)), inv_sqrt_d));
  const Var cb = matmul(att_b, enc.history_values);
  const Var m = matmul(tape.constant(causal_mean(len)), p);
  const Var h_parts[] = {p, ca, cb, m, o};
  const Var h = tanh(add_row(matmul(concat_cols(h_parts), W(kW1)), W(kB1)));

  PolicyForward f;
  f.logits = add_row(matmul(h, W(kWo)), W(kBo));
  f.values = add_row(matmul(h, W(kWv)), W(kBv));
  return f;
}

PolicyScores score_output(ad::Tape& tape, const PolicyModel& model, const Tokens& state, const Tokens& output,
                          bool train) {
  if (output.empty() || output.back() != model.eos) throw PreconditionError("output must be nonempty and end with EOS");
  if (static_cast<int>(output.size()) > model.cfg.max_rewrite_len + 1) {
    throw PreconditionError("output longer than max_rewrite_len");
  }
  Tokens prev{model.bos};
  prev.insert(prev.end(), output.begin(), output.end() - 1);
  const PolicyState enc = encode_state(tape, model, state, train);
  const PolicyForward f = policy_forward(tape, model, enc, prev, train);
  PolicyScores s;
  s.log_softmax = ad::log_softmax_rows(f.logits);
  std::vector<ad::Var> picks;
  picks.reserve(output.size());
  for (std::size_t l = 0; l < output.size(); ++l) {
    picks.push_back(ad::pick(s.log_softmax, static_cast<Eigen::Index>(l), output[l]));
  }
  s.logp = ad::concat_rows(picks);
  s.values = f.values;
  return s;
}

LogProbsValues log_probs_and_values(const PolicyModel& model, const Tokens& state, const Tokens& output) {
  ad::Tape tape(false);
  const PolicyScores s = score_output(tape, model, state, output, false);
  LogProbsValues out;
  const ad::Mat& lp = s.logp.value();
  const ad::Mat& v = s.values.value();
  out.logp.assign(lp.data(), lp.data() + lp.size());
  out.values.assign(v.data(), v.data() + v.size());
  return out;
}

Tokens sample_top_k(const PolicyModel& model, const Tokens& state, int k, double p, int max_len, std::uint64_t seed) {
  if (k < 1 || k > model.vocab_size) throw PreconditionError("sample_top_k: k out of range");
  if (!(p > 0.0 && p <= 1.0)) throw PreconditionError("sample_top_k: p must be in (0, 1]");
  max_len = std::min(max_len, model.cfg.max_rewrite_len);
  Rng rng(seed);
  ad::Tape tape(false);
  const PolicyState enc = encode_state(tape, model, state, false);
  Tokens out;
  std::vector<int> order(static_cast<std::size_t>(model.vocab_size));
  while (true) {
    if (static_cast<int>(out.size()) >= max_len) {
      out.push_back(model.eos);
      return out;
    }
    const std::vector<double> logits = next_logits(tape, model, enc, out);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)];
    });
    const std::size_t kk = static_cast<std::size_t>(k);
    const double top = logits[static_cast<std::size_t>(order[0])];
    std::vector<double> probs(kk);
    double total = 0.0;
    for (std::size_t i = 0; i < kk; ++i) {
      probs[i] = std::exp(logits[static_cast<std::size_t>(order[i])] - top);
      total += probs[i];
    }
    std::size_t keep = kk;
    double cum = 0.0;
    for (std::size_t i = 0; i < kk; ++i) {
      cum += probs[i] / total;
      if (cum >= p) {
        keep = i + 1;
        break;
      }
    }
    double kept = 0.0;
    for (std::size_t i = 0; i < keep; ++i) kept += probs[i];
    const double u = rng.uniform() * kept;
    double acc = 0.0;
    int tok = order[keep - 1];
    for (std::size_t i = 0; i < keep; ++i) {
      acc += probs[i];
      if (u < acc) {
        tok = order[i];
        break;
      }
    }
    out.push_back(tok);
    if (tok == model.eos) return out;
  }
}

Tokens greedy_decode(const PolicyModel& model, const Tokens& state, int max_len) {
  return sample_top_k(model, state, 1, 1.0, max_len, 0);
}

Tokens beam_search(const PolicyModel& model, const Tokens& state, int width, double rep_penalty, int max_len) {
  if (width < 1) throw PreconditionError("beam_search: width must be >= 1");
  if (rep_penalty < 1.0) throw PreconditionError("beam_search: rep_penalty must be >= 1");
  max_len = std::min(max_len, model.cfg.max_rewrite_len);
  ad::Tape tape(false);
  const PolicyState enc = encode_state(tape, model, state, false);

  struct Hyp {
    Tokens seq;
    double score;
  };
  struct Cand {
    double score;
    std::size_t beam;
    int tok;
  };
  std::vector<Hyp> alive{Hyp{{}, 0.0}};
  std::vector<std::pair<double, Tokens>> finished;
  for (int step = 0; step <= max_len && !alive.empty(); ++step) {
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      std::vector<double> logits = next_logits(tape, model, enc, alive[b].seq);
      const std::set<int> seen(alive[b].seq.begin(), alive[b].seq.end());
      for (int t : seen) {
        double& x = logits[static_cast<std::size_t>(t)];
        x = x > 0.0 ? x / rep_penalty : x * rep_penalty;
      }
      const std::vector<double> lp = log_softmax(logits);
      if (step == max_len) {
        cands.push_back(Cand{alive[b].score + lp[static_cast<std::size_t>(model.eos)], b, model.eos});
      } else {
        for (int t = 0; t < model.vocab_size; ++t) cands.push_back(Cand{alive[b].score + lp[static_cast<std::size_t>(t)], b, t});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      Tokens seq = alive[c.beam].seq;
      seq.push_back(c.tok);
      if (c.tok == model.eos) {
        finished.emplace_back(c.score / static_cast<double>(seq.size()), std::move(seq));
      } else {
        next.push_back(Hyp{std::move(seq), c.score});
      }
      if (static_cast<int>(next.size()) == width) break;
    }
    alive = std::move(next);
    if (static_cast<int>(finished.size()) >= width) break;
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].first > finished[best].first) best = i;
  }
  return finished.at(best).second;
}

Tokens strip_eos(const Tokens& tokens, int eos) {
  if (!tokens.empty() && tokens.back() == eos) return Tokens(tokens.begin(), tokens.end() - 1);
  return tokens;
}

ad::Var pairs_cross_entropy(ad::Tape& tape, const PolicyModel& model, const std::vector<const StatePair*>& pairs,
                            bool train) {
  std::vector<ad::Var> parts;
  double tokens = 0.0;
  for (const StatePair* pr : pairs) {
    Tokens out = pr->second;
    out.push_back(model.eos);
    const PolicyScores s = score_output(tape, model, pr->first, out, train);
    parts.push_back(ad::sum(s.logp));
    tokens += static_cast<double>(out.size());
  }
  if (parts.empty()) return tape.constant(ad::Mat::Zero(1, 1));
  return ad::scale(ad::sum(ad::concat_rows(parts)), -1.0 / tokens);
}

PolicyTrainResult supervised_train(const PolicyModel& init, const std::vector<StatePair>& train_in,
                                   const std::vector<StatePair>& valid_in, std::uint64_t seed) {
  if (train_in.empty()) throw PreconditionError("supervised_train: no training pairs");
  const PolicyConfig& cfg = init.cfg;
  Rng rng(derive_seed(seed, 0x51));

  std::vector<StatePair> train = train_in;
  std::vector<StatePair> valid = valid_in;
  if (valid.empty()) {
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(idx));
    std::size_t n_hold = static_cast<std::size_t>(static_cast<double>(train.size()) * cfg.heldout_fraction);
    if (train.size() == 1 || n_hold == 0) {
      valid = train;
    } else {
      std::vector<bool> held(train.size(), false);
      for (std::size_t i = 0; i < n_hold; ++i) held[idx[i]] = true;
      std::vector<StatePair> rest;
      for (std::size_t i = 0; i < train.size(); ++i) (held[i] ? valid : rest).push_back(train[i]);
      train = std::move(rest);
    }
  }
  if (cfg.valid_limit > 0 && static_cast<int>(valid.size()) > cfg.valid_limit) {
    valid.resize(static_cast<std::size_t>(cfg.valid_limit));
  }

  PolicyTrainResult result;
  result.model = init;
  PolicyModel& model = result.model;
  Adam adam(model.params, AdamConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, cfg.batch_size * std::max(1, cfg.grad_accum)));

  auto evaluate = [&](const PolicyModel& m) {
    std::vector<Tokens> cands, refs;
    double em = 0.0;
    for (const auto& [state, target] : valid) {
      cands.push_back(strip_eos(greedy_decode(m, state, cfg.max_rewrite_len), m.eos));
      refs.push_back(target);
      em += cands.back() == target ? 1.0 : 0.0;
    }
    return std::pair<double, double>{bleu(cands, refs), em / static_cast<double>(valid.size())};
  };

  ParamSet best = model.params;
  std::pair<double, double> best_key{-1.0, -1.0};
  int bad = 0;
  long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    double token_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += chunk) {
      const std::size_t e = std::min(order.size(), b + chunk);
      double n_tok = 0.0;
      for (std::size_t k = b; k < e; ++k) n_tok += static_cast<double>(train[order[k]].second.size() + 1);
      model.params.zero_grad();
      for (std::size_t k = b; k < e; ++k) {
        const StatePair& pr = train[order[k]];
        Tokens out = pr.second;
        out.push_back(model.eos);
        ad::Tape tape;
        const PolicyScores s = score_output(tape, model, pr.first, out, true);
        const ad::Var loss = ad::scale(ad::sum(s.logp), -1.0);
        const double lv = loss.scalar();
        if (!std::isfinite(lv)) throw NumericError("supervised_train: non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += lv;
        tape.backward(loss, 1.0 / n_tok);
      }
      token_sum += n_tok;
      if (!model.params.grads_finite()) throw NumericError("supervised_train: non-finite gradient");
      clip_grad_norm(model.params, cfg.max_grad_norm);
      adam.step(model.params, warmup_lr(cfg.lr, step, cfg.warmup_steps));
      ++step;
    }
    const auto key = evaluate(model);
    result.report.epochs.push_back(PolicyEpochStats{epoch, loss_sum / token_sum, key.first});
    if (key > best_key) {
      best_key = key;
      best = model.params;
      result.report.best_epoch = epoch;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      result.report.stopped_early = true;
      break;
    }
  }
  model.params = std::move(best);
  result.report.best_valid_bleu = best_key.first;
  return result;
}

std::vector<double> ReferencePolicy::log_probs(const Tokens& state, const Tokens& output) const {
  return log_probs_and_values(*model_, state, output).logp;
}

ReferencePolicy clone_reference(const PolicyModel& model) {
  return ReferencePolicy(std::make_shared<const PolicyModel>(model));
}

void save_policy(const std::filesystem::path& path, const PolicyModel& model) {
  nlohmann::json meta;
  meta["kind"] = "policy";
  meta["config"] = policy_config_json(model.cfg);
  meta["d"] = model.cfg.d;
  meta["vocab_size"] = model.vocab_size;
  meta["special_ids"] = {{"pad", model.pad}, {"bos", model.bos}, {"eos", model.eos}, {"sep", model.sep}};
  meta["vocab_hash"] = model.vocab_hash;
  save_checkpoint(path, model.params, meta);
}

PolicyModel load_policy(const std::filesystem::path& path) {
  nlohmann::json meta;
  PolicyModel m;
  m.params = load_checkpoint(path, &meta);
  if (meta.value("kind", "") != "policy") throw ValidationError("not a policy checkpoint: " + path.string());
  m.cfg = policy_config_from_json(meta.at("config"), "checkpoint.config");
  m.vocab_size = meta.at("vocab_size").get<int>();
  const auto& ids = meta.at("special_ids");
  m.pad = ids.at("pad").get<int>();
  m.bos = ids.at("bos").get<int>();
  m.eos = ids.at("eos").get<int>();
  m.sep = ids.at("sep").get<int>();
  m.vocab_hash = meta.at("vocab_hash").get<std::string>();
  return m;
}

}  // namespace rrl

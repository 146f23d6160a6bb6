#include "rrl/augment.hpp"

#include "rrl/errors.hpp"
#include "rrl/rng.hpp"

#include <algorithm>
#include <sstream>

namespace rrl {

void validate_augment(const AugmentConfig& cfg) {
  if (cfg.n_candidates < 1) throw ConfigError("augment.n_candidates", "must be >= 1");
  if (cfg.top_k < 1) throw ConfigError("augment.top_k", "must be >= 1");
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) throw ConfigError("augment.top_p", "must be in (0, 1]");
  if (cfg.max_rewrite_len < 1) throw ConfigError("augment.max_rewrite_len", "must be >= 1");
}

std::vector<Tokens> generate_candidates(const PolicyModel& policy, const Tokens& state, int n, int k, double p,
                                        int max_len, std::uint64_t seed) {
  if (n < 1) throw PreconditionError("generate_candidates: n must be >= 1");
  std::vector<Tokens> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    out.push_back(strip_eos(sample_top_k(policy, state, k, p, max_len, derive_seed(seed, static_cast<std::uint64_t>(i))),
                            policy.eos));
  }
  return out;
}

const char* source_name(Source s) { return s == Source::original ? "original" : "candidate"; }

Selection select_best(const std::vector<Tokens>& candidates, const Tokens& original,
                      const std::function<double(const Tokens&)>& score) {
  if (candidates.empty()) throw PreconditionError("select_best: no candidates");
  Selection best;
  best.tokens = original;
  best.f1 = score(original);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double f = score(candidates[i]);
    if (f > best.f1) {
      best.tokens = candidates[i];
      best.f1 = f;
      best.source = Source::candidate;
      best.index = static_cast<int>(i);
    }
  }
  return best;
}

Selection select_best(const std::vector<Tokens>& candidates, const Tokens& original, const QAModel& qa,
                      const CQAExample& example, const Vocab& vocab) {
  return select_best(candidates, original, [&](const Tokens& q) {
    return reward(predict(qa, q, example.history, example.document.token_ids, vocab), example, vocab);
  });
}

nlohmann::ordered_json AugmentReport::to_json() const {
  return nlohmann::ordered_json{{"n_examples", n_examples},
                                {"n_from_candidates", n_from_candidates},
                                {"candidate_fraction", candidate_fraction},
                                {"mean_chosen_f1", mean_chosen_f1},
                                {"mean_original_f1", mean_original_f1}};
}

std::vector<StatePair> AugmentResult::pairs() const {
  std::vector<StatePair> out;
  out.reserve(records.size());
  for (const auto& r : records) out.emplace_back(r.state, r.rewrite);
  return out;
}

AugmentResult build_augmented_dataset(const PolicyModel& policy, const QAModel& qa, const Dataset& ds,
                                      const AugmentConfig& cfg, std::uint64_t seed) {
  validate_augment(cfg);
  AugmentResult result;
  const int max_len = std::min(cfg.max_rewrite_len, policy.cfg.max_rewrite_len);
  for (std::size_t i = 0; i < ds.examples.size(); ++i) {
    const CQAExample& ex = ds.examples[i];
    AugmentRecord rec;
    rec.state = serialize_state(ex.history, ex.question.token_ids, policy.cfg.history_utterances,
                                policy.cfg.max_state_len, ds.vocab);
    const auto cands = generate_candidates(policy, rec.state, cfg.n_candidates, cfg.top_k, cfg.top_p, max_len,
                                           derive_seed(seed, i));
    const auto score = [&](const Tokens& q) {
      return reward(predict(qa, q, ex.history, ex.document.token_ids, ds.vocab), ex, ds.vocab);
    };
    const Selection sel = select_best(cands, ex.question.token_ids, score);
    rec.rewrite = sel.tokens;
    rec.f1 = sel.f1;
    rec.original_f1 = score(ex.question.token_ids);
    rec.source = sel.source;
    result.report.n_from_candidates += sel.source == Source::candidate ? 1 : 0;
    result.report.mean_chosen_f1 += rec.f1;
    result.report.mean_original_f1 += rec.original_f1;
    result.records.push_back(std::move(rec));
  }
  AugmentReport& r = result.report;
  r.n_examples = result.records.size();
  if (r.n_examples > 0) {
    const double n = static_cast<double>(r.n_examples);
    r.candidate_fraction = static_cast<double>(r.n_from_candidates) / n;
    r.mean_chosen_f1 /= n;
    r.mean_original_f1 /= n;
  }
  return result;
}

std::string augment_jsonl(const std::vector<AugmentRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::ordered_json j{{"state_tokens", r.state},
                             {"rewrite_tokens", r.rewrite},
                             {"f1", r.f1},
                             {"source", source_name(r.source)}};
    out << j.dump() << '\n';
  }
  return out.str();
}

}  // namespace rrl

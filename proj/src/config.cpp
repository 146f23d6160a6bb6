#include "rrl/config.hpp"

#include "rrl/errors.hpp"

#include <fstream>
#include <limits>
#include <set>

namespace rrl {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads typed fields from one JSON object and rejects keys it never saw.
class Fields {
 public:
  Fields(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) throw ConfigError(prefix_, "expected an object");
  }

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(path(key), "expected an integer");
      const auto x = v->get<long long>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        throw ConfigError(path(key), "out of range");
      }
      out = static_cast<int>(x);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (v->is_number_unsigned()) {
        out = v->get<std::uint64_t>();
      } else if (v->is_number_integer() && v->get<long long>() >= 0) {
        out = static_cast<std::uint64_t>(v->get<long long>());
      } else {
        throw ConfigError(path(key), "expected a non-negative integer");
      }
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(path(key), "expected a boolean");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(path(key), "expected an array of strings");
      std::vector<std::string> items;
      for (const auto& e : *v) {
        if (!e.is_string()) throw ConfigError(path(key), "expected an array of strings");
        items.push_back(e.get<std::string>());
      }
      out = std::move(items);
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key()) == 0) throw ConfigError(path(it.key()), "unknown field");
    }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void positive(int v, const std::string& field) {
  if (v < 1) throw ConfigError(field, "must be >= 1");
}
void non_negative(int v, const std::string& field) {
  if (v < 0) throw ConfigError(field, "must be >= 0");
}
void non_negative(double v, const std::string& field) {
  if (!(v >= 0.0)) throw ConfigError(field, "must be >= 0");
}
void unit_interval(double v, const std::string& field) {
  if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field, "must be in [0, 1]");
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty()) return p;
  const std::filesystem::path path(p);
  if (path.is_absolute()) return p;
  return (base / path).lexically_normal().string();
}

}  // namespace

void validate_qa(const QAConfig& c) {
  positive(c.d, "qa.d");
  positive(c.d_hidden, "qa.d_hidden");
  positive(c.evidence_heads, "qa.evidence_heads");
  positive(c.max_question_len, "qa.max_question_len");
  positive(c.max_recency, "qa.max_recency");
  if (!(c.init_scale > 0.0)) throw ConfigError("qa.init_scale", "must be > 0");
  non_negative(c.history_turns, "qa.history_turns");
  positive(c.max_seq_len, "qa.max_seq_len");
  positive(c.max_answer_len, "qa.max_answer_len");
  positive(c.n_best, "qa.n_best");
  non_negative(c.lr, "qa.lr");
  positive(c.batch_size, "qa.batch_size");
  positive(c.grad_accum, "qa.grad_accum");
  non_negative(c.max_epochs, "qa.max_epochs");
  non_negative(c.patience, "qa.patience");
  non_negative(c.warmup_steps, "qa.warmup_steps");
  non_negative(c.weight_decay, "qa.weight_decay");
  non_negative(c.max_grad_norm, "qa.max_grad_norm");
  unit_interval(c.augment_prob, "qa.augment_prob");
  for (const auto& k : c.augment_kinds) {
    try {
      parse_perturb_kind(k);
    } catch (const ValidationError& e) {
      throw ConfigError("qa.augment_kinds", e.what());
    }
  }
}

void validate_policy(const PolicyConfig& c) {
  positive(c.d, "policy.d");
  positive(c.d_hidden, "policy.d_hidden");
  positive(c.max_question_len, "policy.max_question_len");
  positive(c.max_recency, "policy.max_recency");
  if (!(c.init_scale > 0.0)) throw ConfigError("policy.init_scale", "must be > 0");
  non_negative(c.history_utterances, "policy.history_utterances");
  if (c.max_state_len < 3) throw ConfigError("policy.max_state_len", "must be >= 3");
  positive(c.max_rewrite_len, "policy.max_rewrite_len");
  positive(c.beam_width, "policy.beam_width");
  if (!(c.rep_penalty >= 1.0)) throw ConfigError("policy.rep_penalty", "must be >= 1");
  non_negative(c.lr, "policy.lr");
  positive(c.batch_size, "policy.batch_size");
  positive(c.grad_accum, "policy.grad_accum");
  non_negative(c.max_epochs, "policy.max_epochs");
  non_negative(c.patience, "policy.patience");
  non_negative(c.warmup_steps, "policy.warmup_steps");
  non_negative(c.weight_decay, "policy.weight_decay");
  non_negative(c.max_grad_norm, "policy.max_grad_norm");
  if (!(c.heldout_fraction > 0.0 && c.heldout_fraction < 1.0)) {
    throw ConfigError("policy.heldout_fraction", "must be in (0, 1)");
  }
  non_negative(c.valid_limit, "policy.valid_limit");
  unit_interval(c.init_copy_fraction, "policy.init_copy_fraction");
}

json world_config_json(const WorldConfig& c) {
  return ojson{{"n_dialogues", c.n_dialogues},
               {"turns_min", c.turns_min},
               {"turns_max", c.turns_max},
               {"n_entities", c.n_entities},
               {"n_relations", c.n_relations},
               {"n_values", c.n_values},
               {"entities_per_doc", c.entities_per_doc},
               {"facts_per_entity", c.facts_per_entity},
               {"ellipsis_prob", c.ellipsis_prob},
               {"omission_prob", c.omission_prob},
               {"yesno_prob", c.yesno_prob},
               {"unknown_prob", c.unknown_prob},
               {"switch_prob", c.switch_prob},
               {"modifier_prob", c.modifier_prob},
               {"n_domains", c.n_domains},
               {"case_sensitive", c.case_sensitive},
               {"capitalize_rewrites", c.capitalize_rewrites},
               {"validation_fraction", c.validation_fraction},
               {"test_fraction", c.test_fraction},
               {"seed", c.seed}};
}

WorldConfig world_config_from_json(const json& j, const std::string& prefix) {
  WorldConfig c;
  Fields f(j, prefix);
  f.get("n_dialogues", c.n_dialogues);
  f.get("turns_min", c.turns_min);
  f.get("turns_max", c.turns_max);
  f.get("n_entities", c.n_entities);
  f.get("n_relations", c.n_relations);
  f.get("n_values", c.n_values);
  f.get("entities_per_doc", c.entities_per_doc);
  f.get("facts_per_entity", c.facts_per_entity);
  f.get("ellipsis_prob", c.ellipsis_prob);
  f.get("omission_prob", c.omission_prob);
  f.get("yesno_prob", c.yesno_prob);
  f.get("unknown_prob", c.unknown_prob);
  f.get("switch_prob", c.switch_prob);
  f.get("modifier_prob", c.modifier_prob);
  f.get("n_domains", c.n_domains);
  f.get("case_sensitive", c.case_sensitive);
  f.get("capitalize_rewrites", c.capitalize_rewrites);
  f.get("validation_fraction", c.validation_fraction);
  f.get("test_fraction", c.test_fraction);
  f.get("seed", c.seed);
  f.finish();
  return c;
}

json qa_config_json(const QAConfig& c) {
  return ojson{{"d", c.d},
               {"d_hidden", c.d_hidden},
               {"mixing", c.mixing == Mixing::attention ? "attention" : "mean"},
               {"evidence_heads", c.evidence_heads},
               {"max_question_len", c.max_question_len},
               {"max_recency", c.max_recency},
               {"init_scale", c.init_scale},
               {"history_turns", c.history_turns},
               {"max_seq_len", c.max_seq_len},
               {"max_answer_len", c.max_answer_len},
               {"n_best", c.n_best},
               {"lr", c.lr},
               {"batch_size", c.batch_size},
               {"grad_accum", c.grad_accum},
               {"max_epochs", c.max_epochs},
               {"patience", c.patience},
               {"warmup_steps", c.warmup_steps},
               {"weight_decay", c.weight_decay},
               {"max_grad_norm", c.max_grad_norm},
               {"augment_kinds", c.augment_kinds},
               {"augment_prob", c.augment_prob}};
}

QAConfig qa_config_from_json(const json& j, const std::string& prefix) {
  QAConfig c;
  Fields f(j, prefix);
  f.get("d", c.d);
  f.get("d_hidden", c.d_hidden);
  std::string mixing = c.mixing == Mixing::attention ? "attention" : "mean";
  f.get("mixing", mixing);
  if (mixing == "attention") {
    c.mixing = Mixing::attention;
  } else if (mixing == "mean") {
    c.mixing = Mixing::mean;
  } else {
    throw ConfigError(f.path("mixing"), "expected \"attention\" or \"mean\"");
  }
  f.get("evidence_heads", c.evidence_heads);
  f.get("max_question_len", c.max_question_len);
  f.get("max_recency", c.max_recency);
  f.get("init_scale", c.init_scale);
  f.get("history_turns", c.history_turns);
  f.get("max_seq_len", c.max_seq_len);
  f.get("max_answer_len", c.max_answer_len);
  f.get("n_best", c.n_best);
  f.get("lr", c.lr);
  f.get("batch_size", c.batch_size);
  f.get("grad_accum", c.grad_accum);
  f.get("max_epochs", c.max_epochs);
  f.get("patience", c.patience);
  f.get("warmup_steps", c.warmup_steps);
  f.get("weight_decay", c.weight_decay);
  f.get("max_grad_norm", c.max_grad_norm);
  f.get("augment_kinds", c.augment_kinds);
  f.get("augment_prob", c.augment_prob);
  f.finish();
  return c;
}

json policy_config_json(const PolicyConfig& c) {
  return ojson{{"d", c.d},
               {"d_hidden", c.d_hidden},
               {"max_question_len", c.max_question_len},
               {"max_recency", c.max_recency},
               {"init_scale", c.init_scale},
               {"history_utterances", c.history_utterances},
               {"max_state_len", c.max_state_len},
               {"max_rewrite_len", c.max_rewrite_len},
               {"beam_width", c.beam_width},
               {"rep_penalty", c.rep_penalty},
               {"lr", c.lr},
               {"batch_size", c.batch_size},
               {"grad_accum", c.grad_accum},
               {"max_epochs", c.max_epochs},
               {"patience", c.patience},
               {"warmup_steps", c.warmup_steps},
               {"weight_decay", c.weight_decay},
               {"max_grad_norm", c.max_grad_norm},
               {"heldout_fraction", c.heldout_fraction},
               {"valid_limit", c.valid_limit},
               {"init_copy_fraction", c.init_copy_fraction}};
}

PolicyConfig policy_config_from_json(const json& j, const std::string& prefix) {
  PolicyConfig c;
  Fields f(j, prefix);
  f.get("d", c.d);
  f.get("d_hidden", c.d_hidden);
  f.get("max_question_len", c.max_question_len);
  f.get("max_recency", c.max_recency);
  f.get("init_scale", c.init_scale);
  f.get("history_utterances", c.history_utterances);
  f.get("max_state_len", c.max_state_len);
  f.get("max_rewrite_len", c.max_rewrite_len);
  f.get("beam_width", c.beam_width);
  f.get("rep_penalty", c.rep_penalty);
  f.get("lr", c.lr);
  f.get("batch_size", c.batch_size);
  f.get("grad_accum", c.grad_accum);
  f.get("max_epochs", c.max_epochs);
  f.get("patience", c.patience);
  f.get("warmup_steps", c.warmup_steps);
  f.get("weight_decay", c.weight_decay);
  f.get("max_grad_norm", c.max_grad_norm);
  f.get("heldout_fraction", c.heldout_fraction);
  f.get("valid_limit", c.valid_limit);
  f.get("init_copy_fraction", c.init_copy_fraction);
  f.finish();
  return c;
}

json ppo_config_json(const PPOConfig& c) {
  return ojson{{"lr", c.lr},
               {"batch_size", c.batch_size},
               {"minibatch_size", c.minibatch_size},
               {"ppo_epochs", c.ppo_epochs},
               {"gamma", c.gamma},
               {"lambda", c.lambda},
               {"cliprange", c.cliprange},
               {"vf_coef", c.vf_coef},
               {"ce_coef", c.ce_coef},
               {"aux_batch", c.aux_batch},
               {"kl_beta_init", c.kl_beta_init},
               {"kl_target", c.kl_target},
               {"kl_horizon", c.kl_horizon},
               {"k_beta", c.k_beta},
               {"top_k", c.top_k},
               {"top_p", c.top_p},
               {"max_rewrite_len", c.max_rewrite_len},
               {"max_epochs", c.max_epochs},
               {"max_iterations", c.max_iterations},
               {"eval_every", c.eval_every},
               {"eval_limit", c.eval_limit},
               {"patience", c.patience},
               {"max_grad_norm", c.max_grad_norm}};
}

PPOConfig ppo_config_from_json(const json& j, const std::string& prefix) {
  PPOConfig c;
  Fields f(j, prefix);
  f.get("lr", c.lr);
  f.get("batch_size", c.batch_size);
  f.get("minibatch_size", c.minibatch_size);
  f.get("ppo_epochs", c.ppo_epochs);
  f.get("gamma", c.gamma);
  f.get("lambda", c.lambda);
  f.get("cliprange", c.cliprange);
  f.get("vf_coef", c.vf_coef);
  f.get("ce_coef", c.ce_coef);
  f.get("aux_batch", c.aux_batch);
  f.get("kl_beta_init", c.kl_beta_init);
  f.get("kl_target", c.kl_target);
  f.get("kl_horizon", c.kl_horizon);
  f.get("k_beta", c.k_beta);
  f.get("top_k", c.top_k);
  f.get("top_p", c.top_p);
  f.get("max_rewrite_len", c.max_rewrite_len);
  f.get("max_epochs", c.max_epochs);
  f.get("max_iterations", c.max_iterations);
  f.get("eval_every", c.eval_every);
  f.get("eval_limit", c.eval_limit);
  f.get("patience", c.patience);
  f.get("max_grad_norm", c.max_grad_norm);
  f.finish();
  return c;
}

json augment_config_json(const AugmentConfig& c) {
  return ojson{{"n_candidates", c.n_candidates},
               {"top_k", c.top_k},
               {"top_p", c.top_p},
               {"max_rewrite_len", c.max_rewrite_len}};
}

AugmentConfig augment_config_from_json(const json& j, const std::string& prefix) {
  AugmentConfig c;
  Fields f(j, prefix);
  f.get("n_candidates", c.n_candidates);
  f.get("top_k", c.top_k);
  f.get("top_p", c.top_p);
  f.get("max_rewrite_len", c.max_rewrite_len);
  f.finish();
  return c;
}

json perturb_config_json(const PerturbConfig& c) {
  std::vector<std::string> kinds;
  for (PerturbKind k : c.kinds) kinds.push_back(perturb_kind_name(k));
  return ojson{{"kinds", kinds}, {"upc_prob", c.upc_prob}, {"lexicon", c.lexicon}};
}

PerturbConfig perturb_config_from_json(const json& j, const std::string& prefix) {
  PerturbConfig c;
  Fields f(j, prefix);
  std::vector<std::string> kinds;
  for (PerturbKind k : c.kinds) kinds.push_back(perturb_kind_name(k));
  f.get("kinds", kinds);
  c.kinds.clear();
  for (const auto& k : kinds) {
    try {
      c.kinds.push_back(parse_perturb_kind(k));
    } catch (const ValidationError& e) {
      throw ConfigError(f.path("kinds"), e.what());
    }
  }
  f.get("upc_prob", c.upc_prob);
  unit_interval(c.upc_prob, f.path("upc_prob"));
  f.get("lexicon", c.lexicon);
  f.finish();
  return c;
}

json saliency_config_json(const SaliencyConfig& c) {
  std::vector<std::string> heads;
  for (Head h : c.heads) heads.push_back(head_name(h));
  return ojson{{"steps", c.steps}, {"n_examples", c.n_examples}, {"heads", heads}, {"significance", c.significance}};
}

SaliencyConfig saliency_config_from_json(const json& j, const std::string& prefix) {
  SaliencyConfig c;
  Fields f(j, prefix);
  f.get("steps", c.steps);
  positive(c.steps, f.path("steps"));
  f.get("n_examples", c.n_examples);
  positive(c.n_examples, f.path("n_examples"));
  std::vector<std::string> heads;
  for (Head h : c.heads) heads.push_back(head_name(h));
  f.get("heads", heads);
  if (heads.empty()) throw ConfigError(f.path("heads"), "must not be empty");
  c.heads.clear();
  for (const auto& h : heads) {
    try {
      c.heads.push_back(parse_head(h));
    } catch (const ValidationError& e) {
      throw ConfigError(f.path("heads"), e.what());
    }
  }
  f.get("significance", c.significance);
  if (!(c.significance > 0.0 && c.significance <= 1.0)) throw ConfigError(f.path("significance"), "must be in (0, 1]");
  f.finish();
  return c;
}

void validate_run_config(const RunConfig& cfg) {
  validate_world(cfg.world);
  validate_qa(cfg.qa);
  validate_policy(cfg.policy);
  validate_ppo(cfg.ppo);
  validate_augment(cfg.augment);
  if (cfg.setting != "end-to-end" && cfg.setting != "pipeline" && cfg.setting != "rl") {
    throw ConfigError("setting", "expected \"end-to-end\", \"pipeline\" or \"rl\"");
  }
  if (cfg.eval_split != "validation" && cfg.eval_split != "test" && cfg.eval_split != "train") {
    throw ConfigError("eval_split", "expected \"train\", \"validation\" or \"test\"");
  }
  if (!(cfg.heq_reference >= 0.0 && cfg.heq_reference <= 1.0)) throw ConfigError("heq_reference", "must be in [0, 1]");
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  Fields f(j, "");
  f.get("seed", c.seed);
  f.get("setting", c.setting);
  f.get("eval_split", c.eval_split);
  f.get("heq_reference", c.heq_reference);
  if (const json* s = f.find("world")) c.world = world_config_from_json(*s);
  if (const json* s = f.find("qa")) c.qa = qa_config_from_json(*s);
  if (const json* s = f.find("policy")) c.policy = policy_config_from_json(*s);
  if (const json* s = f.find("ppo")) c.ppo = ppo_config_from_json(*s);
  if (const json* s = f.find("augment")) c.augment = augment_config_from_json(*s);
  if (const json* s = f.find("perturb")) c.perturb = perturb_config_from_json(*s);
  if (const json* s = f.find("saliency")) c.saliency = saliency_config_from_json(*s);
  if (const json* s = f.find("inputs")) {
    Fields in(*s, "inputs");
    in.get("data", c.inputs.data);
    in.get("qa", c.inputs.qa);
    in.get("policy", c.inputs.policy);
    in.get("runs", c.inputs.runs);
    in.finish();
  }
  f.finish();
  c.inputs.data = resolve(c.inputs.data, base_dir);
  c.inputs.qa = resolve(c.inputs.qa, base_dir);
  c.inputs.policy = resolve(c.inputs.policy, base_dir);
  for (auto& r : c.inputs.runs) r = resolve(r, base_dir);
  c.perturb.lexicon = resolve(c.perturb.lexicon, base_dir);
  validate_run_config(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

ojson run_config_json(const RunConfig& c) {
  ojson inputs{{"data", c.inputs.data}, {"qa", c.inputs.qa}, {"policy", c.inputs.policy}, {"runs", c.inputs.runs}};
  return ojson{{"seed", c.seed},
               {"setting", c.setting},
               {"eval_split", c.eval_split},
               {"heq_reference", c.heq_reference},
               {"world", world_config_json(c.world)},
               {"qa", qa_config_json(c.qa)},
               {"policy", policy_config_json(c.policy)},
               {"ppo", ppo_config_json(c.ppo)},
               {"augment", augment_config_json(c.augment)},
               {"perturb", perturb_config_json(c.perturb)},
               {"saliency", saliency_config_json(c.saliency)},
               {"inputs", inputs}};
}

}  // namespace rrl

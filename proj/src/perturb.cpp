#include "rrl/perturb.hpp"

#include "rrl/errors.hpp"
#include "rrl/metrics.hpp"
#include "rrl/rng.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace rrl {

const std::vector<PerturbKind>& all_perturb_kinds() {
  static const std::vector<PerturbKind> kinds = {PerturbKind::UPC, PerturbKind::WCE, PerturbKind::SLW,
                                                 PerturbKind::WIF, PerturbKind::SPP};
  return kinds;
}

const char* perturb_kind_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::UPC: return "UPC";
    case PerturbKind::WCE: return "WCE";
    case PerturbKind::SLW: return "SLW";
    case PerturbKind::WIF: return "WIF";
    case PerturbKind::SPP: return "SPP";
  }
  return "?";
}

std::string default_lexicon_path() { return RRL_DATA_DIR "/lexicon.json"; }

PerturbKind parse_perturb_kind(std::string_view name) {
  for (PerturbKind k : all_perturb_kinds()) {
    if (name == perturb_kind_name(k)) return k;
  }
  throw ValidationError("unknown perturbation kind '" + std::string(name) + "'");
}

namespace {

bool is_variable(const std::string& t) {
  if (t == "$@") return true;
  return t.size() == 2 && t[0] == '$' && t[1] >= '1' && t[1] <= '9';
}

void validate_map(const std::map<std::string, std::string>& m, const char* name) {
  for (const auto& [k, v] : m) {
    if (k.empty() || split_words(k).size() != 1) {
      throw ValidationError(std::string(name) + ": key '" + k + "' must be a single word");
    }
    if (v.empty()) throw ValidationError(std::string(name) + ": empty output for '" + k + "'");
    if (k == v) throw ValidationError(std::string(name) + ": '" + k + "' maps to itself");
    for (const auto& w : split_words(v)) {
      if (m.count(w) > 0) throw ValidationError(std::string(name) + ": output word '" + w + "' is also a key");
    }
  }
}

std::map<std::string, std::string> map_from_json(const nlohmann::json& j, const char* name) {
  if (!j.is_object()) throw ValidationError(std::string(name) + ": expected an object");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw ValidationError(std::string(name) + ": value of '" + k + "' must be a string");
    out.emplace(k, v.get<std::string>());
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

std::string replace_words(const std::string& text, const std::map<std::string, std::string>& m) {
  std::vector<std::string> words = split_words(text);
  for (auto& w : words) {
    auto it = m.find(w);
    if (it != m.end()) w = it->second;
  }
  return join(words);
}

std::vector<std::string> word_tokens(const std::string& s) { return split_words(s); }

}  // namespace

void PerturbationLexicon::validate() const {
  validate_map(slang_map, "slang_map");
  validate_map(inflection_map, "inflection_map");
  validate_map(contraction_map, "contraction_map");
  for (std::size_t r = 0; r < reorder_grammar.size(); ++r) {
    const ReorderRule& rule = reorder_grammar[r];
    const std::string where = "reorder_grammar[" + std::to_string(r) + "]";
    if (rule.pattern.empty()) throw ValidationError(where + ": empty pattern");
    std::set<std::string> bound;
    for (std::size_t i = 0; i < rule.pattern.size(); ++i) {
      const std::string& t = rule.pattern[i];
      if (t == "$@" && i + 1 != rule.pattern.size()) throw ValidationError(where + ": $@ must be last");
      if (is_variable(t) && !bound.insert(t).second) throw ValidationError(where + ": variable " + t + " repeated");
      if (!is_variable(t) && !t.empty() && t[0] == '$') throw ValidationError(where + ": bad variable " + t);
    }
    for (const auto& t : rule.output) {
      if (!t.empty() && t[0] == '$' && bound.count(t) == 0) throw ValidationError(where + ": unbound " + t);
    }
    if (rule.output == rule.pattern) throw ValidationError(where + ": rule is an identity");
  }
}

nlohmann::ordered_json PerturbationLexicon::to_json() const {
  nlohmann::ordered_json j;
  j["slang_map"] = slang_map;
  j["inflection_map"] = inflection_map;
  j["contraction_map"] = contraction_map;
  j["reorder_grammar"] = nlohmann::ordered_json::array();
  for (const auto& r : reorder_grammar) j["reorder_grammar"].push_back({{"pattern", r.pattern}, {"output", r.output}});
  return j;
}

PerturbationLexicon PerturbationLexicon::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("lexicon: expected an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (k != "slang_map" && k != "inflection_map" && k != "contraction_map" && k != "reorder_grammar") {
      throw ValidationError("lexicon: unexpected key '" + k + "'");
    }
  }
  PerturbationLexicon lex;
  if (j.contains("slang_map")) lex.slang_map = map_from_json(j["slang_map"], "slang_map");
  if (j.contains("inflection_map")) lex.inflection_map = map_from_json(j["inflection_map"], "inflection_map");
  if (j.contains("contraction_map")) lex.contraction_map = map_from_json(j["contraction_map"], "contraction_map");
  if (j.contains("reorder_grammar")) {
    const auto& g = j["reorder_grammar"];
    if (!g.is_array()) throw ValidationError("reorder_grammar: expected an array");
    for (const auto& r : g) {
      try {
        lex.reorder_grammar.push_back({r.at("pattern").get<std::vector<std::string>>(),
                                       r.at("output").get<std::vector<std::string>>()});
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("reorder_grammar: ") + e.what());
      }
    }
  }
  lex.validate();
  return lex;
}

PerturbationLexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("lexicon: ") + e.what());
  }
  return PerturbationLexicon::from_json(j);
}

std::vector<std::string> apply_reorder(const std::vector<std::string>& words, const std::vector<ReorderRule>& rules) {
  for (const ReorderRule& rule : rules) {
    std::map<std::string, std::vector<std::string>> bind;
    bool ok = true;
    std::size_t i = 0;
    for (const auto& t : rule.pattern) {
      if (t == "$@") {
        if (i >= words.size()) {
          ok = false;
          break;
        }
        bind[t].assign(words.begin() + static_cast<std::ptrdiff_t>(i), words.end());
        i = words.size();
      } else if (i >= words.size()) {
        ok = false;
        break;
      } else if (is_variable(t)) {
        bind[t] = {words[i++]};
      } else if (casefold(t) == casefold(words[i])) {
        ++i;
      } else {
        ok = false;
        break;
      }
    }
    if (!ok || i != words.size()) continue;
    std::vector<std::string> out;
    for (const auto& t : rule.output) {
      auto it = bind.find(t);
      if (it != bind.end()) {
        out.insert(out.end(), it->second.begin(), it->second.end());
      } else {
        out.push_back(t);
      }
    }
    return out;
  }
  return words;
}

std::string perturb(const std::string& text, PerturbKind kind, const PerturbationLexicon& lexicon, std::uint64_t seed,
                    double upc_prob) {
  switch (kind) {
    case PerturbKind::UPC: {
      Rng rng(derive_seed(seed, 0x55));
      std::string out = text;
      for (char& c : out) {
        const bool hit = rng.bernoulli(upc_prob);
        if (hit && std::isalpha(static_cast<unsigned char>(c))) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
      return out;
    }
    case PerturbKind::WCE: return replace_words(text, lexicon.contraction_map);
    case PerturbKind::SLW: return replace_words(text, lexicon.slang_map);
    case PerturbKind::WIF: return replace_words(text, lexicon.inflection_map);
    case PerturbKind::SPP: return join(apply_reorder(split_words(text), lexicon.reorder_grammar));
  }
  throw PreconditionError("perturb: unknown kind");
}

PerturbationStats perturbation_stats(const std::vector<std::string>& originals, const std::vector<std::string>& perturbed) {
  if (originals.size() != perturbed.size()) throw PreconditionError("perturbation_stats: length mismatch");
  if (originals.empty()) throw PreconditionError("perturbation_stats: empty input");
  PerturbationStats s;
  std::vector<std::vector<std::string>> cand, ref;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    s.ld_fraction += normalized_levenshtein(originals[i], perturbed[i]);
    cand.push_back(word_tokens(perturbed[i]));
    ref.push_back(word_tokens(originals[i]));
  }
  s.ld_fraction /= static_cast<double>(originals.size());
  s.bleu = bleu(cand, ref);
  return s;
}

std::vector<RobustnessRow> robustness_eval(const QAModel& qa, const Dataset& ds, const std::vector<PerturbKind>& kinds,
                                           const PerturbationLexicon& lexicon, std::uint64_t seed, double upc_prob) {
  if (ds.examples.empty()) throw PreconditionError("robustness_eval: empty dataset");
  auto score = [&](const std::vector<Tokens>* questions) {
    const QAEvaluation ev = evaluate_qa(qa, ds, questions);
    RobustnessRow row;
    row.f1 = ev.mean_f1;
    double correct = 0.0, span_sum = 0.0, n_span = 0.0;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
      const CQAExample& ex = ds.examples[i];
      correct += ev.labels[i] == ex.gold_label ? 1.0 : 0.0;
      if (ex.gold_label == Label::span) {
        span_sum += ev.f1[i];
        n_span += 1.0;
      }
    }
    row.label_acc = 100.0 * correct / static_cast<double>(ds.examples.size());
    row.span_f1 = n_span > 0.0 ? 100.0 * span_sum / n_span : 0.0;
    return row;
  };

  std::vector<RobustnessRow> rows;
  RobustnessRow base = score(nullptr);
  base.kind = "original";
  rows.push_back(base);
  std::vector<std::string> originals;
  for (const auto& ex : ds.examples) originals.push_back(ex.question.text);
  for (PerturbKind kind : kinds) {
    std::vector<std::string> texts;
    std::vector<Tokens> questions;
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
      texts.push_back(perturb(originals[i], kind, lexicon, derive_seed(seed, i), upc_prob));
      questions.push_back(tokenize(texts.back(), ds.vocab));
    }
    RobustnessRow row = score(&questions);
    row.kind = perturb_kind_name(kind);
    row.delta_f1 = row.f1 - base.f1;
    row.delta_label_acc = row.label_acc - base.label_acc;
    row.delta_span_f1 = row.span_f1 - base.span_f1;
    const PerturbationStats st = perturbation_stats(originals, texts);
    row.ld_fraction = st.ld_fraction;
    row.bleu = st.bleu;
    rows.push_back(row);
  }
  return rows;
}

std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
  std::ostringstream out;
  out << "kind,f1,delta_f1,label_acc,delta_label_acc,ld_fraction,bleu,span_f1,delta_span_f1\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.1f,%.1f,%.1f,%.1f,%.4f,%.1f,%.1f,%.1f\n", r.kind.c_str(), r.f1, r.delta_f1,
                  r.label_acc, r.delta_label_acc, r.ld_fraction, r.bleu, r.span_f1, r.delta_span_f1);
    out << buf;
  }
  return out.str();
}

}  // namespace rrl

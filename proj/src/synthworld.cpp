#include "rrl/synthworld.hpp"

#include "rrl/errors.hpp"
#include "rrl/rng.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace rrl {

namespace {

const std::vector<std::string> kEntities = {
    "ball", "box",  "cup",  "lamp", "book", "chair", "table", "door", "hat",  "coat",  "shoe", "bag",
    "car",  "bike", "boat", "kite", "drum", "bell",  "vase",  "clock", "key", "pen",   "ring", "rope",
    "sock", "fan",  "mug",  "jar",  "bowl", "plate", "fork",  "spoon", "sofa", "desk", "bed",  "rug",
    "tent", "sled", "cart", "crate", "tray", "pot",  "pan",   "jug",   "flag", "harp", "mask", "wand"};

const std::vector<std::string> kRelations = {"color", "size",  "shape", "owner", "place", "material",
                                             "pattern", "smell", "sound", "age",   "price", "brand"};

const std::vector<std::string> kValues = {
    "red",    "blue",   "green",  "yellow", "purple", "orange", "black",  "white",  "gray",  "pink",
    "brown",  "gold",   "silver", "round",  "square", "flat",   "tall",   "short",  "tiny",  "huge",
    "soft",   "hard",   "wooden", "metal",  "plastic", "glass", "striped", "dotted", "sweet", "sour",
    "loud",   "quiet",  "old",    "new",    "cheap",  "costly", "heavy",  "smooth", "rough", "shiny",
    "dull",   "warm",   "cold",   "fresh",  "stale",  "bright", "wet",    "dry"};

const std::vector<std::string> kModifiers = {"dark", "pale"};

const std::vector<std::string> kDomains = {"children", "literature", "mid-high", "news",
                                           "wikipedia", "science",   "reddit"};

const std::vector<std::string> kFunctionWords = {"what", "is", "it", ".", ",", "yes", "no", "unknown"};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0) out += ' ';
    out += words[i];
  }
  return out;
}

struct Fact {
  int entity;
  int relation;
  std::vector<std::string> value;
};

}  // namespace

void validate_world(const WorldConfig& cfg) {
  auto prob = [](double p, const char* field) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("world.") + field, "must be in [0, 1]");
  };
  auto at_least = [](int v, int lo, const char* field) {
    if (v < lo) throw ConfigError(std::string("world.") + field, "must be >= " + std::to_string(lo));
  };
  at_least(cfg.n_dialogues, 0, "n_dialogues");
  at_least(cfg.turns_min, 1, "turns_min");
  if (cfg.turns_max < cfg.turns_min) throw ConfigError("world.turns_max", "must be >= turns_min");
  at_least(cfg.n_entities, 1, "n_entities");
  at_least(cfg.n_relations, 1, "n_relations");
  at_least(cfg.n_values, 1, "n_values");
  at_least(cfg.entities_per_doc, 1, "entities_per_doc");
  at_least(cfg.facts_per_entity, 1, "facts_per_entity");
  at_least(cfg.n_domains, 1, "n_domains");
  prob(cfg.ellipsis_prob, "ellipsis_prob");
  prob(cfg.omission_prob, "omission_prob");
  prob(cfg.yesno_prob, "yesno_prob");
  prob(cfg.unknown_prob, "unknown_prob");
  prob(cfg.switch_prob, "switch_prob");
  prob(cfg.modifier_prob, "modifier_prob");
  prob(cfg.validation_fraction, "validation_fraction");
  prob(cfg.test_fraction, "test_fraction");
  if (cfg.yesno_prob + cfg.unknown_prob > 1.0) throw ConfigError("world.unknown_prob", "yesno_prob + unknown_prob exceeds 1");
  if (cfg.validation_fraction + cfg.test_fraction > 1.0) {
    throw ConfigError("world.test_fraction", "validation_fraction + test_fraction exceeds 1");
  }
  if (cfg.n_entities > static_cast<int>(kEntities.size())) {
    throw ConfigError("world.n_entities", "lexicon supports at most " + std::to_string(kEntities.size()));
  }
  if (cfg.n_relations > static_cast<int>(kRelations.size())) {
    throw ConfigError("world.n_relations", "lexicon supports at most " + std::to_string(kRelations.size()));
  }
  if (cfg.n_values > static_cast<int>(kValues.size())) {
    throw ConfigError("world.n_values", "lexicon supports at most " + std::to_string(kValues.size()));
  }
  if (cfg.n_domains > static_cast<int>(kDomains.size())) {
    throw ConfigError("world.n_domains", "at most " + std::to_string(kDomains.size()) + " domain tags");
  }
  if (cfg.entities_per_doc > cfg.n_entities) throw ConfigError("world.entities_per_doc", "exceeds n_entities");
  if (cfg.facts_per_entity > cfg.n_relations) throw ConfigError("world.facts_per_entity", "exceeds n_relations");
  if (cfg.unknown_prob > 0.0 && cfg.facts_per_entity >= cfg.n_relations) {
    throw ConfigError("world.facts_per_entity", "unknown questions need facts_per_entity < n_relations");
  }
  if (cfg.yesno_prob > 0.0 && cfg.n_values < cfg.facts_per_entity + 1) {
    throw ConfigError("world.n_values", "\"no\" questions need n_values > facts_per_entity");
  }
}

WorldLexicon world_lexicon(const WorldConfig& cfg) {
  validate_world(cfg);
  WorldLexicon lex;
  lex.entities.assign(kEntities.begin(), kEntities.begin() + cfg.n_entities);
  lex.relations.assign(kRelations.begin(), kRelations.begin() + cfg.n_relations);
  lex.values.assign(kValues.begin(), kValues.begin() + cfg.n_values);
  lex.modifiers = kModifiers;
  lex.domains.assign(kDomains.begin(), kDomains.begin() + cfg.n_domains);
  return lex;
}

Vocab world_vocab(const WorldConfig& cfg, const std::vector<std::string>& extra_words) {
  const WorldLexicon lex = world_lexicon(cfg);
  std::vector<std::string> words = kFunctionWords;
  words.insert(words.end(), lex.entities.begin(), lex.entities.end());
  if (cfg.capitalize_rewrites) {
    for (const auto& e : lex.entities) words.push_back(capitalize(e));
  }
  words.insert(words.end(), lex.relations.begin(), lex.relations.end());
  words.insert(words.end(), lex.values.begin(), lex.values.end());
  words.insert(words.end(), lex.modifiers.begin(), lex.modifiers.end());
  words.insert(words.end(), extra_words.begin(), extra_words.end());
  return Vocab::build(words, cfg.case_sensitive);
}

namespace {

// One dialogue; appends its turns to `out`.
void generate_dialogue(const WorldConfig& cfg, const WorldLexicon& lex, const Vocab& vocab, int index, Rng& rng,
                       std::vector<CQAExample>& out) {
  std::vector<int> pool(lex.entities.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(pool));
  std::vector<int> ents(pool.begin(), pool.begin() + cfg.entities_per_doc);

  std::vector<Fact> facts;
  for (int e : ents) {
    std::vector<int> rels(lex.relations.size());
    for (std::size_t i = 0; i < rels.size(); ++i) rels[i] = static_cast<int>(i);
    rng.shuffle(std::span<int>(rels));
    for (int k = 0; k < cfg.facts_per_entity; ++k) {
      Fact f{e, rels[static_cast<std::size_t>(k)], {}};
      if (rng.bernoulli(cfg.modifier_prob)) f.value.push_back(lex.modifiers[rng.below(lex.modifiers.size())]);
      f.value.push_back(lex.values[rng.below(lex.values.size())]);
      facts.push_back(std::move(f));
    }
  }
  rng.shuffle(std::span<Fact>(facts));

  std::vector<std::string> doc_words;
  std::vector<int> value_start(facts.size());
  for (std::size_t i = 0; i < facts.size(); ++i) {
    doc_words.push_back(lex.entities[static_cast<std::size_t>(facts[i].entity)]);
    doc_words.push_back(lex.relations[static_cast<std::size_t>(facts[i].relation)]);
    value_start[i] = static_cast<int>(doc_words.size());
    doc_words.insert(doc_words.end(), facts[i].value.begin(), facts[i].value.end());
    doc_words.push_back(".");
  }
  const Utterance document = make_utterance(join(doc_words), vocab);

  char id_buf[32];
  std::snprintf(id_buf, sizeof(id_buf), "d%05d", index);
  const std::string dialogue_id = id_buf;
  const std::string domain = lex.domains[static_cast<std::size_t>(index) % lex.domains.size()];

  const int n_turns = cfg.turns_min + static_cast<int>(rng.below(static_cast<std::size_t>(cfg.turns_max - cfg.turns_min + 1)));
  int topic = ents[rng.below(ents.size())];
  std::vector<QAPair> history;

  for (int t = 1; t <= n_turns; ++t) {
    bool elliptical = false;
    if (t > 1) {
      elliptical = rng.bernoulli(cfg.ellipsis_prob);
      if (!elliptical && ents.size() > 1 && rng.bernoulli(cfg.switch_prob)) {
        int next = topic;
        while (next == topic) next = ents[rng.below(ents.size())];
        topic = next;
      }
    }
    std::vector<std::size_t> own;
    for (std::size_t i = 0; i < facts.size(); ++i) {
      if (facts[i].entity == topic) own.push_back(i);
    }

    const double r = rng.uniform();
    Label label = Label::span;
    if (r < cfg.yesno_prob) {
      label = rng.bernoulli(0.5) ? Label::yes : Label::no;
    } else if (r < cfg.yesno_prob + cfg.unknown_prob) {
      label = Label::unknown;
    }

    const std::string& ent = lex.entities[static_cast<std::size_t>(topic)];
    const std::string restored = cfg.capitalize_rewrites ? capitalize(ent) : ent;
    std::vector<std::string> q, rw, answer;
    std::optional<Span> span;

    if (label == Label::yes || label == Label::no) {
      std::vector<std::string> value;
      if (label == Label::yes) {
        value = facts[own[rng.below(own.size())]].value;
      } else {
        while (true) {
          value.clear();
          if (rng.bernoulli(cfg.modifier_prob)) value.push_back(lex.modifiers[rng.below(lex.modifiers.size())]);
          value.push_back(lex.values[rng.below(lex.values.size())]);
          bool taken = false;
          for (std::size_t i : own) taken = taken || facts[i].value == value;
          if (!taken) break;
        }
      }
      q = {"is", elliptical ? "it" : ent};
      q.insert(q.end(), value.begin(), value.end());
      rw = {"is", elliptical ? restored : ent};
      rw.insert(rw.end(), value.begin(), value.end());
      answer = {label_name(label)};
    } else {
      int rel = 0;
      if (label == Label::span) {
        const std::size_t fi = own[rng.below(own.size())];
        rel = facts[fi].relation;
        const int s = value_start[fi];
        span = Span{s, s + static_cast<int>(facts[fi].value.size()) - 1};
        answer = facts[fi].value;
      } else {
        std::vector<int> missing;
        for (int k = 0; k < static_cast<int>(lex.relations.size()); ++k) {
          bool has = false;
          for (std::size_t i : own) has = has || facts[i].relation == k;
          if (!has) missing.push_back(k);
        }
        rel = missing[rng.below(missing.size())];
        answer = {"unknown"};
      }
      const std::string& rname = lex.relations[static_cast<std::size_t>(rel)];
      if (!elliptical) {
        q = {"what", rname, ent};
        rw = q;
      } else {
        q = rng.bernoulli(cfg.omission_prob) ? std::vector<std::string>{"what", rname}
                                             : std::vector<std::string>{"what", rname, "it"};
        rw = {"what", rname, restored};
      }
    }

    CQAExample ex;
    ex.dialogue_id = dialogue_id;
    ex.turn = t;
    ex.history = history;
    ex.question = make_utterance(join(q), vocab);
    ex.document = document;
    ex.gold_span = span;
    ex.gold_label = label;
    ex.gold_rewrite = make_utterance(join(rw), vocab);
    ex.domain = domain;
    history.push_back(QAPair{ex.question, make_utterance(join(answer), vocab)});
    out.push_back(std::move(ex));
  }
}

}  // namespace

Dataset generate_dataset(const WorldConfig& cfg, const std::vector<std::string>& extra_words) {
  const WorldLexicon lex = world_lexicon(cfg);
  Dataset ds;
  ds.vocab = world_vocab(cfg, extra_words);
  ds.split = Split::train;
  Rng rng(derive_seed(cfg.seed, 0x5157));
  for (int d = 0; d < cfg.n_dialogues; ++d) generate_dialogue(cfg, lex, ds.vocab, d, rng, ds.examples);
  return ds;
}

Splits generate_splits(const WorldConfig& cfg, const std::vector<std::string>& extra_words) {
  Dataset all = generate_dataset(cfg, extra_words);
  const int n = cfg.n_dialogues;
  const int n_test = static_cast<int>(n * cfg.test_fraction);
  const int n_valid = static_cast<int>(n * cfg.validation_fraction);
  const int n_train = n - n_valid - n_test;
  Splits s;
  s.train.vocab = s.validation.vocab = s.test.vocab = all.vocab;
  s.train.split = Split::train;
  s.validation.split = Split::validation;
  s.test.split = Split::test;
  int dialogue = -1;
  std::string last;
  for (auto& ex : all.examples) {
    if (ex.dialogue_id != last) {
      ++dialogue;
      last = ex.dialogue_id;
    }
    Dataset& target = dialogue < n_train ? s.train : (dialogue < n_train + n_valid ? s.validation : s.test);
    target.examples.push_back(std::move(ex));
  }
  return s;
}

OracleAnswer oracle_answer(const Utterance& question, const Utterance& document) {
  std::vector<std::string> q = split_words(casefold(question.text));
  std::vector<std::string> d = split_words(casefold(document.text));

  struct DocFact {
    std::string entity, relation;
    std::vector<std::string> value;
    int value_start;
  };
  std::vector<DocFact> facts;
  std::size_t i = 0;
  while (i < d.size()) {
    std::size_t j = i;
    while (j < d.size() && d[j] != ".") ++j;
    if (j - i >= 3) {
      facts.push_back(DocFact{d[i], d[i + 1], std::vector<std::string>(d.begin() + static_cast<std::ptrdiff_t>(i) + 2,
                                                                         d.begin() + static_cast<std::ptrdiff_t>(j)),
                              static_cast<int>(i) + 2});
    }
    i = j + 1;
  }

  OracleAnswer out;
  if (q.size() == 3 && q[0] == "what" && q[2] != "it") {
    for (const auto& f : facts) {
      if (f.entity == q[2] && f.relation == q[1]) {
        out.label = Label::span;
        out.span = Span{f.value_start, f.value_start + static_cast<int>(f.value.size()) - 1};
        return out;
      }
    }
    return out;
  }
  if (q.size() >= 3 && q[0] == "is" && q[1] != "it") {
    const std::vector<std::string> value(q.begin() + 2, q.end());
    bool known_entity = false;
    for (const auto& f : facts) {
      if (f.entity != q[1]) continue;
      known_entity = true;
      if (f.value == value) {
        out.label = Label::yes;
        return out;
      }
    }
    if (known_entity) out.label = Label::no;
    return out;
  }
  return out;
}

std::vector<RewritePair> gold_rewrite_pairs(const Dataset& ds, int h, int max_state_len) {
  std::vector<RewritePair> pairs;
  pairs.reserve(ds.examples.size());
  for (const auto& ex : ds.examples) {
    pairs.emplace_back(serialize_state(ex.history, ex.question.token_ids, h, max_state_len, ds.vocab),
                       ex.gold_rewrite.token_ids);
  }
  return pairs;
}

}  // namespace rrl

#include "rrl/core.hpp"

#include "rrl/errors.hpp"
#include "rrl/params.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace rrl {

using ojson = nlohmann::ordered_json;

std::string casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

Vocab::Vocab() : tokens_{kPadToken, kBosToken, kEosToken, kSepToken, kUnkToken} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<int>(i));
}

Vocab Vocab::build(const std::vector<std::string>& words, bool case_sensitive) {
  std::vector<std::string> tokens = {kPadToken, kBosToken, kEosToken, kSepToken, kUnkToken};
  std::unordered_map<std::string, int> seen;
  for (const auto& t : tokens) seen.emplace(t, 0);
  for (const auto& w : words) {
    std::string n = case_sensitive ? w : casefold(w);
    if (n.empty() || seen.count(n) != 0) continue;
    seen.emplace(n, 0);
    tokens.push_back(std::move(n));
  }
  return from_tokens(std::move(tokens), case_sensitive);
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens, bool case_sensitive) {
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  v.case_sensitive_ = case_sensitive;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t.empty()) throw ValidationError("vocab contains an empty token");
    if (!case_sensitive && t != casefold(t) && t.front() != '<') {
      throw ValidationError("case-insensitive vocab contains non-casefolded token: " + t);
    }
    if (!v.index_.emplace(t, static_cast<int>(i)).second) throw ValidationError("duplicate vocab token: " + t);
  }
  v.tokens_ = std::move(tokens);
  auto special = [&](const char* name) {
    auto it = v.index_.find(name);
    if (it == v.index_.end()) throw ValidationError(std::string("vocab lacks special token ") + name);
    return it->second;
  };
  v.pad_ = special(kPadToken);
  v.bos_ = special(kBosToken);
  v.eos_ = special(kEosToken);
  v.sep_ = special(kSepToken);
  v.unk_ = special(kUnkToken);
  return v;
}

std::string Vocab::normalize(std::string_view word) const {
  return case_sensitive_ ? std::string(word) : casefold(word);
}

int Vocab::lookup(std::string_view word) const {
  auto it = index_.find(normalize(word));
  return it == index_.end() ? unk_ : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.count(normalize(word)) != 0; }

std::string Vocab::fingerprint() const {
  std::string blob = case_sensitive_ ? "cs\n" : "ci\n";
  for (const auto& t : tokens_) {
    blob += t;
    blob += '\n';
  }
  return sha256_hex(blob);
}

Tokens tokenize(std::string_view text, const Vocab& vocab) {
  Tokens ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.lookup(w));
  return ids;
}

std::string detokenize(const Tokens& ids, const Vocab& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

Utterance make_utterance(std::string_view text, const Vocab& vocab) {
  return Utterance{std::string(text), tokenize(text, vocab)};
}

const char* label_name(Label label) {
  switch (label) {
    case Label::span: return "span";
    case Label::yes: return "yes";
    case Label::no: return "no";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Label parse_label(std::string_view name) {
  if (name == "span") return Label::span;
  if (name == "yes") return Label::yes;
  if (name == "no") return Label::no;
  if (name == "unknown") return Label::unknown;
  throw ValidationError("unknown label: " + std::string(name));
}

Tokens CQAExample::answer_ids(const Vocab& vocab) const {
  if (gold_label == Label::span && gold_span) {
    const auto& d = document.token_ids;
    return Tokens(d.begin() + gold_span->start, d.begin() + gold_span->end + 1);
  }
  return {vocab.lookup(label_name(gold_label))};
}

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  throw ValidationError("unknown split: " + std::string(name));
}

namespace {

void check_utterance(const Utterance& u, const Vocab& vocab, const char* what) {
  if (tokenize(u.text, vocab) != u.token_ids) {
    throw ValidationError(std::string(what) + " token ids do not match text under the vocab: \"" + u.text + "\"");
  }
}

}  // namespace

void validate_example(const CQAExample& ex, const Vocab& vocab) {
  if (ex.turn < 1) throw ValidationError("turn must be >= 1");
  if (ex.history.size() != static_cast<std::size_t>(ex.turn - 1)) {
    throw ValidationError("history length must equal turn - 1");
  }
  if ((ex.gold_label == Label::span) != ex.gold_span.has_value()) {
    throw ValidationError("gold_span must be present exactly when gold_label is span");
  }
  if (ex.gold_span) {
    const int n = static_cast<int>(ex.document.token_ids.size());
    if (ex.gold_span->start < 0 || ex.gold_span->start > ex.gold_span->end || ex.gold_span->end >= n) {
      throw ValidationError("gold_span out of document bounds");
    }
  }
  for (const auto& p : ex.history) {
    check_utterance(p.question, vocab, "history question");
    check_utterance(p.answer, vocab, "history answer");
  }
  check_utterance(ex.question, vocab, "question");
  check_utterance(ex.document, vocab, "document");
  check_utterance(ex.gold_rewrite, vocab, "gold_rewrite");
}

void validate_dataset(const Dataset& ds) {
  std::string prev_id;
  int prev_turn = 0;
  std::unordered_set<std::string> closed;
  for (const auto& ex : ds.examples) {
    validate_example(ex, ds.vocab);
    if (ex.dialogue_id == prev_id) {
      if (ex.turn <= prev_turn) throw ValidationError("turns of dialogue " + ex.dialogue_id + " not increasing");
    } else {
      if (closed.count(ex.dialogue_id) != 0) {
        throw ValidationError("dialogue " + ex.dialogue_id + " is not contiguous");
      }
      if (!prev_id.empty()) closed.insert(prev_id);
    }
    prev_id = ex.dialogue_id;
    prev_turn = ex.turn;
  }
}

Tokens serialize_state(const std::vector<QAPair>& history, const Tokens& question, int h, int max_len,
                       const Vocab& vocab) {
  std::vector<const Tokens*> utts;
  for (const auto& p : history) {
    utts.push_back(&p.question.token_ids);
    utts.push_back(&p.answer.token_ids);
  }
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(std::max(h, 0)), utts.size());
  Tokens out{vocab.bos()};
  for (std::size_t i = utts.size() - keep; i < utts.size(); ++i) {
    out.insert(out.end(), utts[i]->begin(), utts[i]->end());
    out.push_back(vocab.sep());
  }
  out.insert(out.end(), question.begin(), question.end());
  out.push_back(vocab.eos());
  if (max_len > 1 && static_cast<int>(out.size()) > max_len) {
    const std::size_t drop = out.size() - static_cast<std::size_t>(max_len);
    out.erase(out.begin() + 1, out.begin() + 1 + static_cast<std::ptrdiff_t>(drop));
  }
  return out;
}

namespace {

ojson utterance_json(const Utterance& u) { return ojson{{"text", u.text}, {"token_ids", u.token_ids}}; }

ojson example_json(const CQAExample& ex) {
  ojson history = ojson::array();
  for (const auto& p : ex.history) {
    history.push_back(ojson{{"question", utterance_json(p.question)}, {"answer", utterance_json(p.answer)}});
  }
  ojson j;
  j["dialogue_id"] = ex.dialogue_id;
  j["turn"] = ex.turn;
  j["history"] = std::move(history);
  j["question"] = utterance_json(ex.question);
  j["document"] = utterance_json(ex.document);
  j["gold_span"] = ex.gold_span ? ojson::array({ex.gold_span->start, ex.gold_span->end}) : ojson(nullptr);
  j["gold_label"] = label_name(ex.gold_label);
  j["gold_rewrite"] = utterance_json(ex.gold_rewrite);
  j["domain"] = ex.domain;
  return j;
}

Utterance utterance_from(const nlohmann::json& j, int vocab_size) {
  Utterance u{j.at("text").get<std::string>(), j.at("token_ids").get<Tokens>()};
  for (int id : u.token_ids) {
    if (id < 0 || id >= vocab_size) throw ValidationError("token id out of vocab range: " + std::to_string(id));
  }
  return u;
}

const std::vector<std::string> kExampleKeys = {"dialogue_id", "turn",       "history",      "question", "document",
                                               "gold_span",   "gold_label", "gold_rewrite", "domain"};

CQAExample example_from(const nlohmann::json& j, const Vocab& vocab) {
  if (!j.is_object()) throw nlohmann::json::type_error::create(302, "example must be an object", &j);
  for (const auto& [key, _] : j.items()) {
    if (std::find(kExampleKeys.begin(), kExampleKeys.end(), key) == kExampleKeys.end()) {
      throw nlohmann::json::other_error::create(501, "unexpected key " + key, &j);
    }
  }
  CQAExample ex;
  ex.dialogue_id = j.at("dialogue_id").get<std::string>();
  ex.turn = j.at("turn").get<int>();
  for (const auto& p : j.at("history")) {
    ex.history.push_back(QAPair{utterance_from(p.at("question"), vocab.size()),
                                utterance_from(p.at("answer"), vocab.size())});
  }
  ex.question = utterance_from(j.at("question"), vocab.size());
  ex.document = utterance_from(j.at("document"), vocab.size());
  const auto& span = j.at("gold_span");
  if (!span.is_null()) ex.gold_span = Span{span.at(0).get<int>(), span.at(1).get<int>()};
  ex.gold_label = parse_label(j.at("gold_label").get<std::string>());
  ex.gold_rewrite = utterance_from(j.at("gold_rewrite"), vocab.size());
  ex.domain = j.at("domain").get<std::string>();
  return ex;
}

}  // namespace

std::string dump_dataset(const Dataset& ds) {
  ojson header;
  header["format"] = "cqa-v1";
  header["vocab"] = ds.vocab.tokens();
  header["case_sensitive"] = ds.vocab.case_sensitive();
  header["split"] = split_name(ds.split);
  std::string out = header.dump();
  out += '\n';
  for (const auto& ex : ds.examples) {
    out += example_json(ex).dump();
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      if (!have_header) throw ParseError(lineno, "missing header");
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(lineno, std::string("malformed JSON: ") + e.what());
    }
    if (!have_header) {
      try {
        if (j.at("format").get<std::string>() != "cqa-v1") throw ParseError(lineno, "unsupported format");
        ds.vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>(), j.at("case_sensitive").get<bool>());
        ds.split = parse_split(j.at("split").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(lineno, std::string("bad header: ") + e.what());
      }
      have_header = true;
      continue;
    }
    CQAExample ex;
    try {
      ex = example_from(j, ds.vocab);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(lineno, std::string("bad example: ") + e.what());
    }
    try {
      validate_example(ex, ds.vocab);
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
    }
    ds.examples.push_back(std::move(ex));
  }
  if (!have_header) throw ParseError(lineno + 1, "missing header");
  validate_dataset(ds);
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset: " + path.string());
  out << dump_dataset(ds);
  if (!out) throw Error("failed writing dataset: " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read dataset: " + path.string());
  return parse_dataset(in);
}

}  // namespace rrl

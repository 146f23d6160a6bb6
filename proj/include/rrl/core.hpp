#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rrl {

using Tokens = std::vector<int>;

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kBosToken = "<bos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kSepToken = "<sep>";
inline constexpr const char* kUnkToken = "<unk>";

// Lowercases ASCII letters; the world is ASCII-only.
std::string casefold(std::string_view s);

// Splits on runs of ASCII whitespace.
std::vector<std::string> split_words(std::string_view text);

class Vocab {
 public:
  Vocab();

  // Specials first (PAD, BOS, EOS, SEP, UNK), then `words` in order with
  // duplicates dropped. Words are casefolded first when !case_sensitive.
  static Vocab build(const std::vector<std::string>& words, bool case_sensitive);
  // Exact token list; every special must appear exactly once.
  static Vocab from_tokens(std::vector<std::string> tokens, bool case_sensitive);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool case_sensitive() const { return case_sensitive_; }

  // Id of `word` after normalization, or UNK.
  int lookup(std::string_view word) const;
  bool contains(std::string_view word) const;
  std::string normalize(std::string_view word) const;

  int pad() const { return pad_; }
  int bos() const { return bos_; }
  int eos() const { return eos_; }
  int sep() const { return sep_; }
  int unk() const { return unk_; }
  bool is_special(int id) const { return id == pad_ || id == bos_ || id == eos_ || id == sep_ || id == unk_; }

  // SHA-256 over the token list and the case flag.
  std::string fingerprint() const;

  bool operator==(const Vocab& other) const {
    return tokens_ == other.tokens_ && case_sensitive_ == other.case_sensitive_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  bool case_sensitive_ = true;
  int pad_ = 0, bos_ = 1, eos_ = 2, sep_ = 3, unk_ = 4;
};

Tokens tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const Tokens& ids, const Vocab& vocab);

struct Utterance {
  std::string text;
  Tokens token_ids;
  bool operator==(const Utterance&) const = default;
};

Utterance make_utterance(std::string_view text, const Vocab& vocab);

struct QAPair {
  Utterance question;
  Utterance answer;
  bool operator==(const QAPair&) const = default;
};

enum class Label { span = 0, yes = 1, no = 2, unknown = 3 };
inline constexpr int kNumLabels = 4;

const char* label_name(Label label);
Label parse_label(std::string_view name);

struct Span {
  int start = 0;
  int end = 0;
  bool operator==(const Span&) const = default;
};

struct CQAExample {
  std::string dialogue_id;
  int turn = 1;
  std::vector<QAPair> history;
  Utterance question;
  Utterance document;
  std::optional<Span> gold_span;
  Label gold_label = Label::unknown;
  Utterance gold_rewrite;
  std::string domain;
  bool operator==(const CQAExample&) const = default;

  // Token ids of the gold answer: the span tokens, or the label word.
  Tokens answer_ids(const Vocab& vocab) const;
};

enum class Split { train, validation, test };
const char* split_name(Split split);
Split parse_split(std::string_view name);

struct Dataset {
  std::vector<CQAExample> examples;
  Vocab vocab;
  Split split = Split::train;
  bool operator==(const Dataset& other) const {
    return examples == other.examples && vocab == other.vocab && split == other.split;
  }
};

// Throws ValidationError describing the first violated invariant.
void validate_example(const CQAExample& ex, const Vocab& vocab);
void validate_dataset(const Dataset& ds);

// [BOS, last h utterances each followed by SEP, question, EOS]. If longer
// than max_len, tokens right after BOS are dropped so BOS and the tail stay.
Tokens serialize_state(const std::vector<QAPair>& history, const Tokens& question, int h, int max_len,
                       const Vocab& vocab);

// JSONL: header line then one example per line.
std::string dump_dataset(const Dataset& ds);
Dataset parse_dataset(std::istream& in);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace rrl

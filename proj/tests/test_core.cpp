#include "rrl/core.hpp"
#include "rrl/errors.hpp"
#include "rrl/synthworld.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace rrl;

TEST(Vocab, SpecialsFirstAndDuplicatesDropped) {
  const Vocab v = Vocab::build({"ball", "Ball", "ball"}, true);
  ASSERT_EQ(v.size(), 7);
  EXPECT_EQ(v.token(0), kPadToken);
  EXPECT_EQ(v.token(4), kUnkToken);
  EXPECT_NE(v.lookup("ball"), v.lookup("Ball"));
  EXPECT_EQ(v.lookup("kite"), v.unk());
}

TEST(Vocab, CaseFoldedLookup) {
  const Vocab v = Vocab::build({"ball", "Ball"}, false);
  EXPECT_EQ(v.size(), 6);
  EXPECT_EQ(v.lookup("BALL"), v.lookup("ball"));
  EXPECT_TRUE(v.contains("Ball"));
}

TEST(Vocab, FromTokensValidates) {
  EXPECT_THROW(Vocab::from_tokens({"<pad>", "<bos>", "<eos>", "<sep>"}, true), ValidationError);
  EXPECT_THROW(Vocab::from_tokens({"<pad>", "<bos>", "<eos>", "<sep>", "<unk>", "a", "a"}, true), ValidationError);
  EXPECT_THROW(Vocab::from_tokens({"<pad>", "<bos>", "<eos>", "<sep>", "<unk>", "A"}, false), ValidationError);
  const Vocab v = Vocab::from_tokens({"<unk>", "x", "<pad>", "<bos>", "<eos>", "<sep>"}, true);
  EXPECT_EQ(v.unk(), 0);
  EXPECT_EQ(v.pad(), 2);
}

TEST(Vocab, FingerprintTracksCaseFlag) {
  EXPECT_NE(Vocab::build({"a"}, true).fingerprint(), Vocab::build({"a"}, false).fingerprint());
  EXPECT_EQ(Vocab::build({"a"}, true).fingerprint(), Vocab::build({"a"}, true).fingerprint());
}

TEST(Tokenize, RoundTripsInVocabText) {
  const Vocab v = Vocab::build({"what", "color", "is", "ball"}, true);
  const Tokens t = tokenize("what  color is\tball", v);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(detokenize(t, v), "what color is ball");
  EXPECT_EQ(tokenize("what kite", v).back(), v.unk());
}

TEST(SerializeState, LayoutAndTruncation) {
  const Vocab v = Vocab::build({"a", "b", "c", "d", "q"}, true);
  std::vector<QAPair> h = {{make_utterance("a", v), make_utterance("b", v)}, {make_utterance("c", v), make_utterance("d", v)}};
  const Tokens q = tokenize("q", v);
  const Tokens s = serialize_state(h, q, 3, 100, v);
  const Tokens expect = {v.bos(), v.lookup("b"), v.sep(), v.lookup("c"), v.sep(), v.lookup("d"), v.sep(), v.lookup("q"), v.eos()};
  EXPECT_EQ(s, expect);
  const Tokens none = serialize_state(h, q, 0, 100, v);
  EXPECT_EQ(none, (Tokens{v.bos(), v.lookup("q"), v.eos()}));
  const Tokens cut = serialize_state(h, q, 4, 5, v);
  ASSERT_EQ(cut.size(), 5u);
  EXPECT_EQ(cut.front(), v.bos());
  EXPECT_EQ(cut[cut.size() - 2], v.lookup("q"));
  EXPECT_EQ(cut.back(), v.eos());
}

TEST(SerializeState, PropertyBosFirstEosLastWithinCap) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(5, 20));
  for (int cap : {3, 8, 20, 150}) {
    for (const auto& ex : ds.examples) {
      const Tokens s = serialize_state(ex.history, ex.question.token_ids, 4, cap, ds.vocab);
      EXPECT_LE(static_cast<int>(s.size()), cap);
      EXPECT_EQ(s.front(), ds.vocab.bos());
      EXPECT_EQ(s.back(), ds.vocab.eos());
    }
  }
}

TEST(Labels, NamesRoundTrip) {
  for (Label l : {Label::span, Label::yes, Label::no, Label::unknown}) EXPECT_EQ(parse_label(label_name(l)), l);
  EXPECT_THROW(parse_label("maybe"), ValidationError);
  for (Split s : {Split::train, Split::validation, Split::test}) EXPECT_EQ(parse_split(split_name(s)), s);
  EXPECT_THROW(parse_split("dev"), ValidationError);
}

TEST(Dataset, DumpParseRoundTrip) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(7, 15));
  std::istringstream in(dump_dataset(ds));
  const Dataset back = parse_dataset(in);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(dump_dataset(back), dump_dataset(ds));
}

TEST(Dataset, SaveLoadRoundTrip) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(8, 10));
  const auto dir = fixtures::scratch_dir("core_roundtrip");
  save_dataset(ds, dir / "d.jsonl");
  EXPECT_EQ(load_dataset(dir / "d.jsonl"), ds);
}

TEST(Dataset, ParseErrorsCarryLineNumbers) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(9, 3));
  std::string text = dump_dataset(ds);
  {
    std::istringstream in("");
    EXPECT_THROW(parse_dataset(in), ParseError);
  }
  {
    std::istringstream in(text + "{not json\n");
    try {
      parse_dataset(in);
      FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line(), ds.examples.size() + 2);
    }
  }
  {
    std::istringstream in("{\"format\":\"other\"}\n");
    EXPECT_THROW(parse_dataset(in), ParseError);
  }
}

TEST(Dataset, ValidationRejectsBrokenExamples) {
  Dataset ds = generate_dataset(fixtures::tiny_world(10, 3));
  EXPECT_NO_THROW(validate_dataset(ds));
  CQAExample ex = ds.examples.front();
  ex.question.token_ids.push_back(ds.vocab.unk());
  EXPECT_THROW(validate_example(ex, ds.vocab), ValidationError);
  ex = ds.examples.front();
  ex.turn = 0;
  EXPECT_THROW(validate_example(ex, ds.vocab), ValidationError);
  ex = ds.examples.front();
  ex.gold_label = Label::span;
  ex.gold_span = Span{0, 1000};
  EXPECT_THROW(validate_example(ex, ds.vocab), ValidationError);
}

TEST(Example, AnswerIds) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(11, 10));
  for (const auto& ex : ds.examples) {
    const Tokens a = ex.answer_ids(ds.vocab);
    if (ex.gold_label == Label::span) {
      ASSERT_TRUE(ex.gold_span.has_value());
      EXPECT_EQ(static_cast<int>(a.size()), ex.gold_span->end - ex.gold_span->start + 1);
    } else {
      EXPECT_EQ(a, (Tokens{ds.vocab.lookup(label_name(ex.gold_label))}));
    }
  }
}

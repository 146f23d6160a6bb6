#include "rrl/errors.hpp"
#include "rrl/metrics.hpp"
#include "rrl/perturb.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cctype>

using namespace rrl;

namespace {

const PerturbationLexicon& lexicon() {
  static const PerturbationLexicon lex = load_lexicon(default_lexicon_path());
  return lex;
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

PerturbationLexicon tiny_lexicon() {
  PerturbationLexicon lex;
  lex.slang_map = {{"what", "wut"}};
  lex.inflection_map = {{"ball", "balls"}};
  lex.contraction_map = {{"what's", "what is"}};
  lex.reorder_grammar = {{{"what", "$1", "$@"}, {"$1", "$@", ",", "what"}}};
  return lex;
}

}  // namespace

TEST(Perturb, UpcHooks) {
  const std::string q = "what color is the ball ?";
  EXPECT_EQ(perturb(q, PerturbKind::UPC, lexicon(), 3, 0.0), q);
  EXPECT_EQ(perturb(q, PerturbKind::UPC, lexicon(), 3, 1.0), upper(q));
}

TEST(Perturb, UpcOnlyUppercasesLetters) {
  const std::string q = "what color is the ball ?";
  const std::string p = perturb(q, PerturbKind::UPC, lexicon(), 9, 0.5);
  ASSERT_EQ(p.size(), q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_TRUE(p[i] == q[i] || p[i] == std::toupper(static_cast<unsigned char>(q[i])));
  }
  EXPECT_EQ(casefold(p), q);
}

TEST(Perturb, UpcRateNearProbability) {
  std::string q(20000, 'a');
  const std::string p = perturb(q, PerturbKind::UPC, lexicon(), 11, 0.1);
  double up = 0;
  for (char c : p) up += c == 'A' ? 1 : 0;
  EXPECT_NEAR(up / static_cast<double>(q.size()), 0.1, 0.01);
}

TEST(Perturb, LexicalKindsReplaceEveryOccurrence) {
  const auto lex = tiny_lexicon();
  EXPECT_EQ(perturb("what ball what", PerturbKind::SLW, lex, 0), "wut ball wut");
  EXPECT_EQ(perturb("what ball and ball", PerturbKind::WIF, lex, 0), "what balls and balls");
  EXPECT_EQ(perturb("what's the ball", PerturbKind::WCE, lex, 0), "what is the ball");
  EXPECT_EQ(perturb("where is it", PerturbKind::SLW, lex, 0), "where is it");
}

TEST(Perturb, SppSingleRuleApplication) {
  EXPECT_EQ(perturb("what color ball", PerturbKind::SPP, tiny_lexicon(), 0), "color ball , what");
}

TEST(Perturb, ReorderRules) {
  const std::vector<ReorderRule> rules = {{{"what", "$1"}, {"$1", ",", "what"}},
                                          {{"is", "$1", "$@"}, {"$1", "$@", ",", "is"}}};
  EXPECT_EQ(apply_reorder({"What", "color"}, rules), (std::vector<std::string>{"color", ",", "what"}));
  EXPECT_EQ(apply_reorder({"is", "the", "ball", "red"}, rules),
            (std::vector<std::string>{"the", "ball", "red", ",", "is"}));
  // No rule matches: length mismatch and a missing $@ tail.
  EXPECT_EQ(apply_reorder({"what", "a", "b"}, rules), (std::vector<std::string>{"what", "a", "b"}));
  EXPECT_EQ(apply_reorder({"is", "x"}, rules), (std::vector<std::string>{"is", "x"}));
}

TEST(Perturb, DeterministicGivenSeed) {
  const std::string q = "what is the price of the ball ?";
  for (PerturbKind k : all_perturb_kinds()) {
    EXPECT_EQ(perturb(q, k, lexicon(), 5), perturb(q, k, lexicon(), 5)) << perturb_kind_name(k);
  }
}

TEST(Perturb, LexicalKindsAreIdempotent) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(71, 30));
  for (PerturbKind k : {PerturbKind::WCE, PerturbKind::SLW, PerturbKind::WIF}) {
    for (const auto& ex : ds.examples) {
      const std::string once = perturb(ex.question.text, k, lexicon(), 1);
      EXPECT_EQ(perturb(once, k, lexicon(), 1), once) << perturb_kind_name(k);
    }
  }
}

TEST(Perturb, ApplicableRuleChangesText) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(72, 30));
  const auto& lex = lexicon();
  for (const auto& ex : ds.examples) {
    const auto words = split_words(ex.question.text);
    auto any_key = [&](const std::map<std::string, std::string>& m) {
      for (const auto& w : words)
        if (m.count(w)) return true;
      return false;
    };
    if (any_key(lex.slang_map)) EXPECT_GT(normalized_levenshtein(ex.question.text, perturb(ex.question.text, PerturbKind::SLW, lex, 0)), 0.0);
    if (any_key(lex.inflection_map)) EXPECT_GT(normalized_levenshtein(ex.question.text, perturb(ex.question.text, PerturbKind::WIF, lex, 0)), 0.0);
    if (apply_reorder(words, lex.reorder_grammar) != words) {
      EXPECT_NE(perturb(ex.question.text, PerturbKind::SPP, lex, 0), ex.question.text);
    }
  }
}

TEST(Perturb, KindNames) {
  for (PerturbKind k : all_perturb_kinds()) EXPECT_EQ(parse_perturb_kind(perturb_kind_name(k)), k);
  EXPECT_THROW(parse_perturb_kind("XYZ"), ValidationError);
}

TEST(Perturb, ShippedLexiconIsValid) {
  EXPECT_NO_THROW(lexicon().validate());
  EXPECT_FALSE(lexicon().reorder_grammar.empty());
  const auto back = PerturbationLexicon::from_json(nlohmann::json::parse(lexicon().to_json().dump()));
  EXPECT_EQ(back.to_json().dump(), lexicon().to_json().dump());
}

TEST(Perturb, LexiconValidationRejectsBadMaps) {
  auto lex = tiny_lexicon();
  lex.slang_map["ball"] = "ball";
  EXPECT_THROW(lex.validate(), ValidationError);
  lex = tiny_lexicon();
  lex.slang_map["wut"] = "whut";  // output "wut" is also a key
  EXPECT_THROW(lex.validate(), ValidationError);
  lex = tiny_lexicon();
  lex.inflection_map["two words"] = "x";
  EXPECT_THROW(lex.validate(), ValidationError);
  lex = tiny_lexicon();
  lex.reorder_grammar = {{{"$@", "what"}, {"what", "$@"}}};
  EXPECT_THROW(lex.validate(), ValidationError);
  lex.reorder_grammar = {{{"what", "$1"}, {"$2", "what"}}};
  EXPECT_THROW(lex.validate(), ValidationError);
  EXPECT_THROW(PerturbationLexicon::from_json(nlohmann::json{{"extra", 1}}), ValidationError);
}

TEST(Perturb, Stats) {
  const PerturbationStats same = perturbation_stats({"what is the ball ?", "where is it now ?"},
                                                    {"what is the ball ?", "where is it now ?"});
  EXPECT_DOUBLE_EQ(same.ld_fraction, 0.0);
  EXPECT_NEAR(same.bleu, 100.0, 1e-9);
  EXPECT_DOUBLE_EQ(perturbation_stats({"abcd"}, {"abce"}).ld_fraction, 0.25);
  EXPECT_THROW(perturbation_stats({}, {}), PreconditionError);
  EXPECT_THROW(perturbation_stats({"a"}, {}), PreconditionError);
}

TEST(Perturb, StatsMatchOracles) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(73, 20));
  std::vector<std::string> orig, pert;
  std::vector<std::vector<std::string>> c, r;
  double ld = 0.0;
  for (const auto& ex : ds.examples) {
    orig.push_back(ex.question.text);
    pert.push_back(perturb(ex.question.text, PerturbKind::SLW, lexicon(), 0));
    const double n = static_cast<double>(orig.back().size());
    ld += n > 0 ? static_cast<double>(oracle::levenshtein(orig.back(), pert.back())) / n : 0.0;
    c.push_back(split_words(pert.back()));
    r.push_back(split_words(orig.back()));
  }
  const PerturbationStats s = perturbation_stats(orig, pert);
  EXPECT_NEAR(s.ld_fraction, ld / static_cast<double>(orig.size()), 1e-12);
  EXPECT_NEAR(s.bleu, oracle::bleu(c, r), 1e-9);
}

TEST(Perturb, IdentityPerturbationHasZeroDelta) {
  const Dataset ds = generate_dataset(fixtures::tiny_world(74, 10));
  QAConfig cfg;
  cfg.d = 8;
  cfg.d_hidden = 8;
  const QAModel qa = init_qa(cfg, ds.vocab, 1);
  const auto rows = robustness_eval(qa, ds, {PerturbKind::UPC}, lexicon(), 3, 0.0);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].kind, "original");
  EXPECT_EQ(rows[1].kind, "UPC");
  EXPECT_DOUBLE_EQ(rows[1].delta_f1, 0.0);
  EXPECT_DOUBLE_EQ(rows[1].delta_label_acc, 0.0);
  EXPECT_DOUBLE_EQ(rows[1].ld_fraction, 0.0);
  const std::string csv = robustness_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "kind,f1,delta_f1,label_acc,delta_label_acc,ld_fraction,bleu,span_f1,delta_span_f1");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Perturb, ConfigJsonRoundTrip) {
  PerturbConfig c;
  c.kinds = {PerturbKind::SPP, PerturbKind::UPC};
  c.upc_prob = 0.25;
  EXPECT_EQ(perturb_config_json(perturb_config_from_json(perturb_config_json(c))).dump(), perturb_config_json(c).dump());
}

#include "rrl/metrics.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rrl;

namespace {

std::vector<std::string> random_words(std::mt19937_64& g, int max_len) {
  static const std::vector<std::string> pool = {"a", "b", "c", "A", "d", "B"};
  std::vector<std::string> out(g() % static_cast<unsigned>(max_len + 1));
  for (auto& w : out) w = pool[g() % pool.size()];
  return out;
}

std::string random_string(std::mt19937_64& g, int max_len) {
  std::string s(g() % static_cast<unsigned>(max_len + 1), 'a');
  for (auto& c : s) c = "abcA "[g() % 5];
  return s;
}

}  // namespace

TEST(TokenF1, Examples) {
  EXPECT_DOUBLE_EQ(token_f1(std::vector<int>{}, std::vector<int>{}), 1.0);
  EXPECT_DOUBLE_EQ(token_f1(std::vector<int>{1}, std::vector<int>{}), 0.0);
  EXPECT_DOUBLE_EQ(token_f1(std::vector<int>{1, 2}, std::vector<int>{2, 3}), 0.5);
  EXPECT_DOUBLE_EQ(token_f1(std::vector<int>{1, 1, 1}, std::vector<int>{1}), 0.5);
}

TEST(TokenF1, MatchesOracleOnRandomInputs) {
  std::mt19937_64 g(11);
  for (int i = 0; i < 500; ++i) {
    auto p = random_words(g, 6), q = random_words(g, 6);
    EXPECT_NEAR(token_f1(p, q, false), oracle::token_f1(p, q), 1e-12);
    std::vector<std::string> pf, qf;
    for (auto& w : p) pf.push_back(oracle::lower(w));
    for (auto& w : q) qf.push_back(oracle::lower(w));
    EXPECT_NEAR(token_f1(p, q, true), oracle::token_f1(pf, qf), 1e-12);
  }
}

TEST(TokenF1, SymmetricAndBounded) {
  std::mt19937_64 g(12);
  for (int i = 0; i < 300; ++i) {
    auto p = random_words(g, 5), q = random_words(g, 5);
    const double a = token_f1(p, q, false);
    EXPECT_DOUBLE_EQ(a, token_f1(q, p, false));
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    EXPECT_DOUBLE_EQ(token_f1(p, p, false), 1.0);
  }
}

TEST(ExactMatch, NormalizesCase) {
  EXPECT_EQ(exact_match({"Ball"}, {"ball"}), 1);
  EXPECT_EQ(exact_match({"Ball"}, {"ball"}, false), 0);
  EXPECT_EQ(exact_match({"a", "b"}, {"a"}), 0);
  std::mt19937_64 g(13);
  for (int i = 0; i < 300; ++i) {
    auto p = random_words(g, 3), q = random_words(g, 3);
    EXPECT_EQ(exact_match(p, q), oracle::exact_match(p, q));
  }
}

TEST(Levenshtein, Examples) {
  EXPECT_EQ(levenshtein("", ""), 0u);
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
  EXPECT_EQ(levenshtein("abc", ""), 3u);
  EXPECT_DOUBLE_EQ(normalized_levenshtein("abcd", "abce"), 0.25);
  EXPECT_THROW(normalized_levenshtein("", "a"), PreconditionError);
}

TEST(Levenshtein, MetricProperties) {
  std::mt19937_64 g(14);
  for (int i = 0; i < 300; ++i) {
    auto a = random_string(g, 8), b = random_string(g, 8), c = random_string(g, 8);
    EXPECT_EQ(levenshtein(a, b), oracle::levenshtein(a, b));
    EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
    EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
    EXPECT_EQ(levenshtein(a, a), 0u);
  }
}

TEST(Bleu, IdenticalCorpusScoresHundred) {
  std::vector<std::vector<int>> c = {{1, 2, 3, 4, 5}, {6, 7, 8, 9}};
  EXPECT_NEAR(bleu(c, c), 100.0, 1e-12);
}

TEST(Bleu, NoFourGramScoresZero) {
  std::vector<std::vector<int>> c = {{1, 2, 3}};
  EXPECT_DOUBLE_EQ(bleu(c, c), 0.0);
  EXPECT_THROW(bleu(std::vector<std::vector<int>>{}, std::vector<std::vector<int>>{}), PreconditionError);
}

TEST(Bleu, MatchesOracleOnRandomCorpora) {
  std::mt19937_64 g(15);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::vector<int>> c, r;
    const int n = 1 + static_cast<int>(g() % 4);
    for (int s = 0; s < n; ++s) {
      std::vector<int> a(4 + g() % 6), b(4 + g() % 6);
      for (auto& x : a) x = static_cast<int>(g() % 3);
      for (auto& x : b) x = static_cast<int>(g() % 3);
      c.push_back(a);
      r.push_back(b);
    }
    EXPECT_NEAR(bleu(c, r), oracle::bleu(c, r), 1e-9);
  }
}

TEST(Pearson, MatchesOracleAndRejectsConstant) {
  std::mt19937_64 g(16);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> x(3 + g() % 10), y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = nd(g);
      y[k] = 0.5 * x[k] + nd(g);
    }
    EXPECT_NEAR(pearson(x, y), oracle::pearson(x, y), 1e-9);
  }
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-12);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-12);
  EXPECT_ANY_THROW(pearson({1, 1, 1}, {1, 2, 3}));
}

TEST(CopyRate, CountsExactCopies) {
  std::vector<Tokens> r = {{1, 2}, {3}, {4, 5}}, o = {{1, 2}, {3, 3}, {4, 5}};
  EXPECT_NEAR(copy_rate(r, o), 2.0 / 3.0, 1e-12);
}

TEST(Heq, ThresholdsAgainstReference) {
  // Dialogue 1 fully at or above reference, dialogue 2 not.
  const HeqResult h = heq({{1.0, 0.5}, {0.2}}, {{0.9, 0.5}, {0.3}});
  EXPECT_NEAR(h.heq_q, 200.0 / 3.0, 1e-12);
  EXPECT_NEAR(h.heq_d, 50.0, 1e-12);
}

TEST(FormatPct, OneDecimal) {
  EXPECT_EQ(format_pct(84.54), "84.5");
  EXPECT_EQ(format_pct(0.0), "0.0");
}

TEST(MetricsReport, JsonRoundTrip) {
  MetricsReport m;
  m.setting = "rl";
  m.overall_f1 = 81.25;
  m.per_domain_f1 = {{"a", 1.0}, {"b", 2.0}};
  m.correlations = {{"copy_rate_f1", 0.9}};
  m.n_questions = 7;
  const MetricsReport back = MetricsReport::from_json(m.to_json());
  EXPECT_EQ(back.to_json().dump(), m.to_json().dump());
  const std::string csv = metrics_csv({m});
  EXPECT_NE(csv.find("rl"), std::string::npos);
}

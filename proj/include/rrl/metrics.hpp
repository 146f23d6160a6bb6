#pragma once

#include "rrl/core.hpp"
#include "rrl/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rrl {

// Unigram F1 over token bags. Both empty scores 1.
template <typename T>
double token_f1(const std::vector<T>& pred, const std::vector<T>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<T, int> counts;
  for (const auto& w : gold) ++counts[w];
  int overlap = 0;
  for (const auto& w : pred) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * p * r / (p + r);
}

// String form; casefolds both sides when `normalize` is set.
double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold, bool normalize);

int exact_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold, bool normalize = true);

struct HeqResult {
  double heq_q = 0.0;
  double heq_d = 0.0;
};
// Per-question scores grouped by dialogue; both arguments must have the
// same shape and at least one question.
HeqResult heq(const std::vector<std::vector<double>>& model_f1, const std::vector<std::vector<double>>& reference_f1);

// Corpus BLEU-4 (uniform weights, brevity penalty, no smoothing), 0..100.
template <typename T>
double bleu(const std::vector<std::vector<T>>& candidates, const std::vector<std::vector<T>>& references) {
  if (candidates.size() != references.size()) throw PreconditionError("bleu: candidate/reference count mismatch");
  if (candidates.empty()) throw PreconditionError("bleu: empty corpus");
  double match[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double cand_len = 0.0;
  double ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& c = candidates[s];
    const auto& r = references[s];
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      if (c.size() < n) continue;
      std::map<std::vector<T>, int> ref_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[std::vector<T>(r.begin() + i, r.begin() + i + n)];
      for (std::size_t i = 0; i + n <= c.size(); ++i) {
        auto it = ref_counts.find(std::vector<T>(c.begin() + i, c.begin() + i + n));
        if (it != ref_counts.end() && it->second > 0) {
          --it->second;
          match[n - 1] += 1.0;
        }
      }
      total[n - 1] += static_cast<double>(c.size() - n + 1);
    }
  }
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (match[n] == 0.0 || total[n] == 0.0) return 0.0;
    log_sum += std::log(match[n] / total[n]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

// Character edit distance with unit costs.
std::size_t levenshtein(const std::string& a, const std::string& b);
// levenshtein / |original|; original must be nonempty.
double normalized_levenshtein(const std::string& original, const std::string& other);

double copy_rate(const std::vector<Tokens>& rewrites, const std::vector<Tokens>& originals);

// Sample Pearson correlation; zero variance is an error.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct MetricsReport {
  std::string setting;
  double overall_f1 = 0.0;
  double em = 0.0;
  double heq_q = 0.0;
  double heq_d = 0.0;
  std::map<std::string, double> per_domain_f1;
  double copy_rate = 0.0;
  double mean_edit_distance = 0.0;
  std::map<std::string, double> correlations;
  std::size_t n_questions = 0;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

// Table 1 layout: setting, F1, domains..., EM, HEQ-Q, HEQ-D, copy rate, edit.
std::string metrics_csv(const std::vector<MetricsReport>& rows);

// One-decimal percentage formatting used in every table.
std::string format_pct(double v);

}  // namespace rrl

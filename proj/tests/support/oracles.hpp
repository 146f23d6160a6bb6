#pragma once

// Brute-force reference implementations used as test oracles. They are
// written independently of src/ and favour directness over speed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

namespace oracle {

// F1 through an explicit multiset intersection.
template <typename T>
double token_f1(std::vector<T> pred, std::vector<T> gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::multiset<T> a(pred.begin(), pred.end());
  std::multiset<T> b(gold.begin(), gold.end());
  std::size_t common = 0;
  for (const auto& v : std::set<T>(a.begin(), a.end())) common += std::min(a.count(v), b.count(v));
  if (common == 0) return 0.0;
  const double p = double(common) / double(pred.size());
  const double r = double(common) / double(gold.size());
  return 2 * p * r / (p + r);
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c;
  return s;
}

inline int exact_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  if (pred.size() != gold.size()) return 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (lower(pred[i]) != lower(gold[i])) return 0;
  return 1;
}

// Memoized recursion over suffixes.
inline std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<long(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> long {
    if (i == a.size()) return long(b.size() - j);
    if (j == b.size()) return long(a.size() - i);
    long& m = memo[i][j];
    if (m >= 0) return m;
    long best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return m = best;
  };
  return std::size_t(go(0, 0));
}

template <typename T>
std::vector<std::vector<T>> ngrams(const std::vector<T>& s, std::size_t n) {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) out.emplace_back(s.begin() + long(i), s.begin() + long(i + n));
  return out;
}

// Corpus BLEU-4 with clipped counts computed from n-gram lists.
template <typename T>
double bleu(const std::vector<std::vector<T>>& cands, const std::vector<std::vector<T>>& refs) {
  double clipped[4] = {}, totals[4] = {}, c_len = 0, r_len = 0;
  for (std::size_t s = 0; s < cands.size(); ++s) {
    c_len += double(cands[s].size());
    r_len += double(refs[s].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto cg = ngrams(cands[s], n);
      auto rg = ngrams(refs[s], n);
      totals[n - 1] += double(cg.size());
      std::vector<std::vector<T>> seen;
      for (const auto& g : cg) {
        if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
        seen.push_back(g);
        const auto cc = std::count(cg.begin(), cg.end(), g);
        const auto rc = std::count(rg.begin(), rg.end(), g);
        clipped[n - 1] += double(std::min(cc, rc));
      }
    }
  }
  double prod = 1.0;
  for (int n = 0; n < 4; ++n) {
    if (clipped[n] == 0 || totals[n] == 0) return 0.0;
    prod *= clipped[n] / totals[n];
  }
  const double bp = c_len >= r_len ? 1.0 : std::exp(1 - r_len / c_len);
  return 100.0 * bp * std::pow(prod, 0.25);
}

// Pearson through the covariance definition with explicit means.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// A_l = sum_{j>=l} (gamma*lambda)^(j-l) * delta_j, delta_j = r_j + gamma*V_{j+1} - V_j, V_L = 0.
inline std::vector<double> gae(const std::vector<double>& r, const std::vector<double>& v, double gamma, double lambda) {
  const std::size_t L = r.size();
  std::vector<double> delta(L);
  for (std::size_t j = 0; j < L; ++j) delta[j] = r[j] + gamma * (j + 1 < L ? v[j + 1] : 0.0) - v[j];
  std::vector<double> a(L, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = l; j < L; ++j) a[l] += std::pow(gamma * lambda, double(j - l)) * delta[j];
  return a;
}

}  // namespace oracle

#include "rrl/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <set>

namespace rrl {

namespace {

std::vector<std::string> folded(const std::vector<std::string>& words) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(casefold(w));
  return out;
}

}  // namespace

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold, bool normalize) {
  if (!normalize) return token_f1<std::string>(pred, gold);
  return token_f1<std::string>(folded(pred), folded(gold));
}

int exact_match(const std::vector<std::string>& pred, const std::vector<std::string>& gold, bool normalize) {
  if (!normalize) return pred == gold ? 1 : 0;
  return folded(pred) == folded(gold) ? 1 : 0;
}

HeqResult heq(const std::vector<std::vector<double>>& model_f1, const std::vector<std::vector<double>>& reference_f1) {
  if (model_f1.size() != reference_f1.size()) throw PreconditionError("heq: dialogue count mismatch");
  std::size_t questions = 0, good_q = 0, good_d = 0;
  for (std::size_t d = 0; d < model_f1.size(); ++d) {
    if (model_f1[d].size() != reference_f1[d].size()) throw PreconditionError("heq: question count mismatch");
    bool all = true;
    for (std::size_t i = 0; i < model_f1[d].size(); ++i) {
      const bool ok = model_f1[d][i] >= reference_f1[d][i];
      good_q += ok ? 1 : 0;
      all = all && ok;
    }
    questions += model_f1[d].size();
    good_d += all ? 1 : 0;
  }
  if (questions == 0) throw PreconditionError("heq: no questions");
  return HeqResult{100.0 * static_cast<double>(good_q) / static_cast<double>(questions),
                   100.0 * static_cast<double>(good_d) / static_cast<double>(model_f1.size())};
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double normalized_levenshtein(const std::string& original, const std::string& other) {
  if (original.empty()) throw PreconditionError("normalized_levenshtein: empty original");
  return static_cast<double>(levenshtein(original, other)) / static_cast<double>(original.size());
}

double copy_rate(const std::vector<Tokens>& rewrites, const std::vector<Tokens>& originals) {
  if (rewrites.size() != originals.size()) throw PreconditionError("copy_rate: length mismatch");
  if (rewrites.empty()) throw PreconditionError("copy_rate: empty input");
  std::size_t same = 0;
  for (std::size_t i = 0; i < rewrites.size(); ++i) same += rewrites[i] == originals[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(rewrites.size());
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw PreconditionError("pearson: length mismatch");
  if (xs.size() < 2) throw PreconditionError("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw PreconditionError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["setting"] = setting;
  j["overall_f1"] = overall_f1;
  j["em"] = em;
  j["heq_q"] = heq_q;
  j["heq_d"] = heq_d;
  j["per_domain_f1"] = per_domain_f1;
  j["copy_rate"] = copy_rate;
  j["mean_edit_distance"] = mean_edit_distance;
  j["correlations"] = correlations;
  j["n_questions"] = n_questions;
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.setting = j.at("setting").get<std::string>();
  r.overall_f1 = j.at("overall_f1").get<double>();
  r.em = j.at("em").get<double>();
  r.heq_q = j.at("heq_q").get<double>();
  r.heq_d = j.at("heq_d").get<double>();
  r.per_domain_f1 = j.at("per_domain_f1").get<std::map<std::string, double>>();
  r.copy_rate = j.at("copy_rate").get<double>();
  r.mean_edit_distance = j.at("mean_edit_distance").get<double>();
  r.correlations = j.value("correlations", std::map<std::string, double>{});
  r.n_questions = j.value("n_questions", std::size_t{0});
  return r;
}

std::string format_pct(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string metrics_csv(const std::vector<MetricsReport>& rows) {
  std::set<std::string> domains;
  for (const auto& r : rows) {
    for (const auto& [d, _] : r.per_domain_f1) domains.insert(d);
  }
  std::string out = "setting,f1";
  for (const auto& d : domains) out += "," + d;
  out += ",em,heq_q,heq_d,copy_rate,mean_edit_distance\n";
  for (const auto& r : rows) {
    out += r.setting + "," + format_pct(r.overall_f1);
    for (const auto& d : domains) {
      auto it = r.per_domain_f1.find(d);
      out += "," + (it == r.per_domain_f1.end() ? std::string() : format_pct(it->second));
    }
    out += "," + format_pct(r.em) + "," + format_pct(r.heq_q) + "," + format_pct(r.heq_d) + "," +
           format_pct(100.0 * r.copy_rate) + "," + format_pct(100.0 * r.mean_edit_distance) + "\n";
  }
  return out;
}

}  // namespace rrl

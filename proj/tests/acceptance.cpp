// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Usage: acceptance [--work DIR] [--fresh] [--only N,M,...]
// Stages whose run directory already holds a manifest are reused unless
// --fresh is given.
// Exit status is 0 only when every selected criterion passes.

#include "rrl/config.hpp"
#include "rrl/errors.hpp"
#include "rrl/experiment.hpp"
#include "rrl/metrics.hpp"
#include "rrl/ppo.hpp"

#include "support/gradcases.hpp"
#include "support/oracles.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rrl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::istringstream in(read_file(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

RunConfig preset(const std::string& name) {
  return load_run_config(fs::path(RRL_SOURCE_DIR) / "configs" / (name + ".json"));
}

// Runs a subcommand unless its manifest already exists.
void stage(const std::string& cmd, const RunConfig& cfg, const fs::path& out) {
  if (fs::exists(out / "manifest.json")) return;
  fs::remove_all(out);
  std::cerr << "[acceptance] " << cmd << " -> " << out.string() << std::endl;
  run_subcommand(cmd, cfg, out, "config");
}

// ---------------------------------------------------------------- 1-3

Outcome metric_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 g(20240601);
  const std::vector<std::string> pool = {"a", "b", "c", "A", "d", "B", "the", "The"};
  auto words = [&](int max_len) {
    std::vector<std::string> w(g() % static_cast<unsigned>(max_len + 1));
    for (auto& x : w) x = pool[g() % pool.size()];
    return w;
  };
  auto text = [&](int max_len) {
    std::string s(1 + g() % static_cast<unsigned>(max_len), 'a');
    for (auto& c : s) c = "abcAB "[g() % 6];
    return s;
  };
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto p = words(8), q = words(8);
    worst = std::max(worst, std::abs(token_f1(p, q, false) - oracle::token_f1(p, q)));
    mismatches += exact_match(p, q) != oracle::exact_match(p, q) ? 1 : 0;
    mismatches += exact_match(p, p) != oracle::exact_match(p, p) ? 1 : 0;

    const std::string a = text(12), b = text(12);
    worst = std::max(worst, std::abs(normalized_levenshtein(a, b) -
                                     static_cast<double>(oracle::levenshtein(a, b)) / static_cast<double>(a.size())));

    std::vector<std::vector<std::string>> c, r;
    const std::size_t n = 1 + g() % 4;
    for (std::size_t k = 0; k < n; ++k) {
      r.push_back(words(10));
      auto cand = r.back();
      if (!cand.empty() && g() % 2) cand[g() % cand.size()] = pool[g() % pool.size()];
      if (g() % 3 == 0) cand.push_back(pool[g() % pool.size()]);
      c.push_back(cand);
    }
    worst = std::max(worst, std::abs(bleu(c, r) - oracle::bleu(c, r)));

    std::vector<double> x(3 + g() % 20), y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      x[k] = u(g);
      y[k] = 0.5 * x[k] + u(g);
    }
    worst = std::max(worst, std::abs(pearson(x, y) - oracle::pearson(x, y)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && mismatches == 0 && secs < 10.0,
          "max abs diff " + fmt("%.2e", worst) + ", exact-match mismatches " + std::to_string(mismatches) + ", " +
              fmt("%.2f", secs) + " s"};
}

Outcome gradient_checks() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  int n = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    worst = std::max(worst, gradcases::qa_case(seed).max_rel_error);
    worst = std::max(worst, gradcases::policy_case(seed).max_rel_error);
    n += 2;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 60.0,
          std::to_string(n) + " configurations, max rel error " + fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome gae_equivalence() {
  std::mt19937_64 g(7);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> r(10), v(10);
    for (auto& x : r) x = nd(g);
    for (auto& x : v) x = nd(g);
    const double gamma = 0.8 + 0.2 * u(g), lambda = u(g);
    const Gae got = compute_gae(r, v, gamma, lambda);
    const auto want = oracle::gae(r, v, gamma, lambda);
    for (std::size_t k = 0; k < 10; ++k) worst = std::max(worst, std::abs(got.advantages[k] - want[k]));
  }
  return {worst <= 1e-9, "1000 sequences, max abs diff " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 4-10

struct Standard {
  fs::path root;
  fs::path data, e2e, qr, pipe, ppo, perturb, augment, saliency;
  fs::path robust_data, robust_qa, robust_perturb;
};

Standard run_standard(const fs::path& work) {
  Standard s;
  s.root = work / "standard";
  s.data = s.root / "data";
  s.e2e = s.root / "e2e";
  s.qr = s.root / "qr";
  s.pipe = s.root / "pipeline";
  s.ppo = s.root / "ppo";
  s.perturb = s.root / "perturb";
  s.augment = s.root / "augment";
  s.saliency = s.root / "saliency";
  s.robust_data = work / "robust" / "data";
  s.robust_qa = work / "robust" / "e2e";
  s.robust_perturb = work / "robust" / "perturb";

  RunConfig cfg = preset("standard");
  stage("gen-data", cfg, s.data);
  cfg.inputs.data = s.data.string();
  stage("train-qa", cfg, s.e2e);
  stage("train-qr", cfg, s.qr);
  RunConfig pipe = cfg;
  pipe.setting = "pipeline";
  pipe.inputs.policy = (s.qr / "policy.ckpt").string();
  stage("train-qa", pipe, s.pipe);
  RunConfig rl = cfg;
  rl.inputs.qa = (s.e2e / "qa.ckpt").string();
  rl.inputs.policy = (s.qr / "policy.ckpt").string();
  stage("train-ppo", rl, s.ppo);
  stage("augment", rl, s.augment);
  RunConfig eval = cfg;
  eval.inputs.qa = (s.e2e / "qa.ckpt").string();
  stage("perturb-eval", eval, s.perturb);
  eval.inputs.policy = (s.ppo / "policy.ckpt").string();
  stage("saliency", eval, s.saliency);

  RunConfig robust = preset("robust");
  stage("gen-data", robust, s.robust_data);
  robust.inputs.data = s.robust_data.string();
  stage("train-qa", robust, s.robust_qa);
  robust.inputs.qa = (s.robust_qa / "qa.ckpt").string();
  stage("perturb-eval", robust, s.robust_perturb);
  return s;
}

Outcome setting_ordering(const Standard& s) {
  const double e2e = read_json(s.e2e / "metrics.json").at("overall_f1");
  const double pipe = read_json(s.pipe / "metrics.json").at("overall_f1");
  const double rl = read_json(s.ppo / "metrics.json").at("overall_f1");
  const bool pass = rl >= pipe + 0.5 && std::abs(rl - e2e) <= 1.5;
  return {pass, "rl " + fmt("%.2f", rl) + ", pipeline " + fmt("%.2f", pipe) + ", end-to-end " + fmt("%.2f", e2e) +
                    " (need rl >= pipeline + 0.5 and |rl - end-to-end| <= 1.5)"};
}

Outcome copy_collapse(const Standard& s) {
  const json sum = read_json(s.ppo / "summary.json");
  const double init = sum.at("init_copy_rate"), fin = sum.at("final_copy_rate");
  return {init <= 0.5 && fin >= 0.8,
          "copy rate " + fmt("%.3f", init) + " at initialization, " + fmt("%.3f", fin) + " after PPO (need <= 0.5, >= 0.8)"};
}

Outcome correlations(const Standard& s) {
  std::vector<double> copy, edit, f1;
  for (const auto& row : read_jsonl(s.ppo / "checkpoints.jsonl")) {
    copy.push_back(row.at("copy_rate"));
    edit.push_back(row.at("mean_edit_distance"));
    f1.push_back(row.at("f1"));
  }
  if (copy.size() < 8) return {false, "only " + std::to_string(copy.size()) + " checkpoints"};
  const double c = oracle::pearson(copy, f1), e = oracle::pearson(edit, f1);
  return {c >= 0.7 && e <= -0.7, std::to_string(copy.size()) + " checkpoints, pearson(copy, F1) " + fmt("%.3f", c) +
                                     ", pearson(edit, F1) " + fmt("%.3f", e) + " (need >= 0.7, <= -0.7)"};
}

Outcome kl_control(const Standard& s) {
  std::vector<double> kl;
  for (const auto& row : read_jsonl(s.ppo / "iterations.jsonl")) kl.push_back(row.at("mean_kl"));
  const double target = read_json(s.ppo / "summary.json").at("kl_target");
  if (kl.empty()) return {false, "no iterations"};
  const std::size_t window = 20, start = kl.size() / 4;
  double lo = 1e300, hi = -1e300;
  for (std::size_t i = start; i < kl.size(); ++i) {
    const std::size_t b = i + 1 >= window ? i + 1 - window : 0;
    double m = 0.0;
    for (std::size_t k = b; k <= i; ++k) m += kl[k];
    m /= static_cast<double>(i + 1 - b);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  return {lo >= 0.5 * target && hi <= 2.0 * target,
          "running-mean KL (window 20) after " + std::to_string(start) + " of " + std::to_string(kl.size()) +
              " iterations in [" + fmt("%.2f", lo) + ", " + fmt("%.2f", hi) + "], band [" + fmt("%.2f", 0.5 * target) +
              ", " + fmt("%.2f", 2.0 * target) + "]"};
}

Outcome sensitivity(const Standard& s) {
  std::map<std::string, json> brittle, robust;
  for (const auto& r : read_json(s.perturb / "robustness.json")) brittle[r.at("kind")] = r;
  for (const auto& r : read_json(s.robust_perturb / "robustness.json")) robust[r.at("kind")] = r;
  bool all_nonpositive = true;
  std::string deltas;
  for (const auto& [kind, r] : brittle) {
    if (kind == "original") continue;
    const double d = r.at("delta_f1");
    all_nonpositive = all_nonpositive && d <= 0.0;
    deltas += kind + " " + fmt("%.2f", d) + " ";
  }
  const double upc_brittle = brittle.at("UPC").at("delta_f1");
  const double upc_robust = robust.at("UPC").at("delta_f1");
  const double label_drop = -static_cast<double>(brittle.at("SPP").at("delta_label_acc"));
  const double span_drop = -static_cast<double>(brittle.at("SPP").at("delta_span_f1"));
  const bool contrast = upc_brittle <= upc_robust - 3.0;
  const bool spp = label_drop <= span_drop;
  return {all_nonpositive && contrast && spp,
          "dF1 " + deltas + "| UPC dF1 case-sensitive " + fmt("%.2f", upc_brittle) + " vs case-folded " +
              fmt("%.2f", upc_robust) + " | SPP label drop " + fmt("%.2f", label_drop) + " vs span drop " +
              fmt("%.2f", span_drop)};
}

Outcome augmentation(const Standard& s) {
  std::size_t n = 0, violations = 0;
  for (const char* f : {"augmented_train.jsonl", "augmented_validation.jsonl"}) n += read_jsonl(s.augment / f).size();
  const json report = read_json(s.augment / "augment_report.json");
  violations = report.at("dominance_violations").get<std::size_t>();
  const std::string table = read_file(s.augment / "table5.csv");
  const bool table_ok = table.rfind("setting,", 0) == 0 && table.find("\nend-to-end,") != std::string::npos &&
                        table.find("\naugmented,") != std::string::npos;
  const double delta = report.at("delta_f1");
  return {violations == 0 && n > 0 && table_ok,
          std::to_string(n) + " records, " + std::to_string(violations) + " dominance violations, Table-5 csv " +
              (table_ok ? "written" : "missing") + ", augmented - end-to-end F1 " + fmt("%.2f", delta)};
}

Outcome ig_completeness(const Standard& s) {
  const json rep = read_json(s.saliency / "saliency.json");
  const json& c = rep.at("completeness");
  const std::size_t n = c.at("n_attributions"), bad = c.at("n_incomplete");
  const std::size_t examples = rep.at("n_examples");
  double worst_sum = 0.0;
  for (const char* input : {"original", "rewritten"}) {
    for (const char* table : {"sign", "significant"}) {
      for (const char* pol : {"positive", "negative"}) {
        double t = 0.0;
        for (double v : rep.at(input).at(table).at(pol)) t += v;
        if (t != 0.0) worst_sum = std::max(worst_sum, std::abs(t - 100.0));
      }
    }
  }
  return {examples >= 20 && bad == 0 && worst_sum <= 0.1,
          std::to_string(examples) + " examples, " + std::to_string(bad) + " of " + std::to_string(n) +
              " attributions outside 2% (max rel error " + fmt("%.4f", static_cast<double>(c.at("max_relative_error"))) +
              "), column sums within " + fmt("%.3f", worst_sum) + " of 100"};
}

// ---------------------------------------------------------------- 11

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

void smoke_pipeline(const fs::path& root) {
  RunConfig cfg = preset("smoke");
  const fs::path data = root / "data";
  run_subcommand("gen-data", cfg, data, "config");
  cfg.inputs.data = data.string();
  run_subcommand("train-qa", cfg, root / "e2e", "config");
  run_subcommand("train-qr", cfg, root / "qr", "config");
  cfg.inputs.qa = (root / "e2e" / "qa.ckpt").string();
  cfg.inputs.policy = (root / "qr" / "policy.ckpt").string();
  run_subcommand("train-ppo", cfg, root / "ppo", "config");
  run_subcommand("augment", cfg, root / "augment", "config");
  run_subcommand("perturb-eval", cfg, root / "perturb", "config");
  cfg.inputs.policy = (root / "ppo" / "policy.ckpt").string();
  run_subcommand("evaluate", cfg, root / "evaluate", "config");
  run_subcommand("saliency", cfg, root / "saliency", "config");
}

Outcome determinism(const fs::path& work) {
  const fs::path root = work / "determinism" / "run";
  fs::remove_all(root);
  smoke_pipeline(root);
  const auto first = snapshot(root);
  fs::remove_all(root);
  smoke_pipeline(root);
  const auto second = snapshot(root);
  std::vector<std::string> differ;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != bytes) differ.push_back(name);
  }
  for (const auto& [name, bytes] : second) {
    if (first.count(name) == 0) differ.push_back(name);
  }
  std::string detail = std::to_string(first.size()) + " files compared, " + std::to_string(differ.size()) + " differ";
  for (std::size_t i = 0; i < differ.size() && i < 3; ++i) detail += " " + differ[i];
  return {differ.empty() && !first.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "rrl_acceptance";
  std::set<int> only;
  bool fresh = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--fresh") {
      fresh = true;
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--work DIR] [--fresh] [--only N,M,...]\n";
      return 2;
    }
  }
  auto selected = [&](int n) { return only.empty() || only.count(n) > 0; };
  if (fresh) fs::remove_all(work);
  fs::create_directories(work);

  const char* names[] = {"",
                         "metric oracle equivalence",
                         "gradient correctness",
                         "GAE equivalence",
                         "setting ordering",
                         "copy collapse",
                         "copy/edit correlations",
                         "KL control",
                         "sensitivity contrast",
                         "augmentation invariant",
                         "IG completeness",
                         "determinism"};
  std::map<int, Outcome> results;
  auto record = [&](int n, const std::function<Outcome()>& fn) {
    if (!selected(n)) return;
    try {
      results[n] = fn();
    } catch (const std::exception& e) {
      results[n] = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %2d %s  %s: %s\n", n, results[n].pass ? "PASS" : "FAIL", names[n], results[n].detail.c_str());
    std::fflush(stdout);
  };

  record(1, metric_oracles);
  record(2, gradient_checks);
  record(3, gae_equivalence);
  bool need_standard = false;
  for (int n = 4; n <= 10; ++n) need_standard = need_standard || selected(n);
  if (need_standard) {
    Standard s;
    std::string error;
    try {
      s = run_standard(work);
    } catch (const std::exception& e) {
      error = e.what();
    }
    auto guarded = [&](std::function<Outcome(const Standard&)> fn) {
      return [&, fn] { return error.empty() ? fn(s) : Outcome{false, "standard preset run failed: " + error}; };
    };
    record(4, guarded(setting_ordering));
    record(5, guarded(copy_collapse));
    record(6, guarded(correlations));
    record(7, guarded(kl_control));
    record(8, guarded(sensitivity));
    record(9, guarded(augmentation));
    record(10, guarded(ig_completeness));
  }
  record(11, [&] { return determinism(work); });

  int failed = 0;
  for (const auto& [n, r] : results) failed += r.pass ? 0 : 1;
  std::printf("%zu criteria run, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}

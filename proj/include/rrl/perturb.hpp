#pragma once

// Rule-based question perturbations and perturbed evaluation of a QA model.

#include "rrl/qaenv.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rrl {

enum class PerturbKind { UPC, WCE, SLW, WIF, SPP };
const std::vector<PerturbKind>& all_perturb_kinds();
const char* perturb_kind_name(PerturbKind kind);
// Throws ValidationError on an unknown name.
PerturbKind parse_perturb_kind(std::string_view name);

// Pattern tokens: literals (matched case-insensitively), "$1".."$9" for one
// token, "$@" for one or more trailing tokens.
struct ReorderRule {
  std::vector<std::string> pattern;
  std::vector<std::string> output;
};

struct PerturbationLexicon {
  std::map<std::string, std::string> slang_map;
  std::map<std::string, std::string> inflection_map;
  std::map<std::string, std::string> contraction_map;  // contraction -> expansion
  std::vector<ReorderRule> reorder_grammar;

  // Keys are single words, no key maps to itself, no output word is a key,
  // rule variables are well formed.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static PerturbationLexicon from_json(const nlohmann::json& j);
};

PerturbationLexicon load_lexicon(const std::filesystem::path& path);

// Rewrites the first matching rule's pattern; unchanged words when none match.
std::vector<std::string> apply_reorder(const std::vector<std::string>& words, const std::vector<ReorderRule>& rules);

std::string perturb(const std::string& text, PerturbKind kind, const PerturbationLexicon& lexicon, std::uint64_t seed,
                    double upc_prob = 0.1);

struct PerturbationStats {
  double ld_fraction = 0.0;
  double bleu = 0.0;  // percentage
};
PerturbationStats perturbation_stats(const std::vector<std::string>& originals, const std::vector<std::string>& perturbed);

struct RobustnessRow {
  std::string kind;  // "original" for the unperturbed baseline
  double f1 = 0.0;
  double delta_f1 = 0.0;
  double label_acc = 0.0;
  double delta_label_acc = 0.0;
  double span_f1 = 0.0;
  double delta_span_f1 = 0.0;
  double ld_fraction = 0.0;
  double bleu = 100.0;
};

// Lexicon shipped with the sources (data/lexicon.json).
std::string default_lexicon_path();

struct PerturbConfig {
  std::vector<PerturbKind> kinds = all_perturb_kinds();
  double upc_prob = 0.1;
  std::string lexicon = default_lexicon_path();
};

// Baseline row first, then one row per kind. F1 and accuracies in percent.
std::vector<RobustnessRow> robustness_eval(const QAModel& qa, const Dataset& ds, const std::vector<PerturbKind>& kinds,
                                           const PerturbationLexicon& lexicon, std::uint64_t seed,
                                           double upc_prob = 0.1);

std::string robustness_csv(const std::vector<RobustnessRow>& rows);

nlohmann::json perturb_config_json(const PerturbConfig& cfg);
PerturbConfig perturb_config_from_json(const nlohmann::json& j, const std::string& prefix = "perturb");

}  // namespace rrl

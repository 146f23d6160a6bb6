#pragma once

// Integrated-gradients attribution over QA input embeddings and
// per-segment attribution distributions.

#include "rrl/ad.hpp"
#include "rrl/qaenv.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace rrl {

enum class Head { start, end, label };
const char* head_name(Head h);
Head parse_head(std::string_view name);

// Scalar function of a matrix input; writes dF/dx into *grad.
using ScalarFn = std::function<double(const ad::Mat& x, ad::Mat* grad)>;

// Right Riemann sum with m steps along the straight path from `baseline`
// to `x`; one attribution per row (dot product over columns).
std::vector<double> integrated_gradients(const ScalarFn& f, const ad::Mat& x, const ad::Mat& baseline, int m);

struct IGResult {
  std::vector<double> attributions;  // question, history, document tokens in order
  std::size_t n_question = 0;
  std::size_t n_history = 0;
  std::size_t n_document = 0;
  int target = 0;  // predicted index or label class
  double f_input = 0.0;
  double f_baseline = 0.0;
};

// Target logit is the model's prediction for `head` on the actual input;
// the baseline replaces every token embedding by the PAD embedding.
IGResult integrated_gradients(const QAModel& qa, const QAInput& input, Head head, int m);

struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
};
using Segments = std::array<Segment, 3>;  // question, history, document

struct Distribution {
  std::array<double, 3> positive{};  // percentages over segments
  std::array<double, 3> negative{};
};

// threshold 0: counts attr > 0 and attr < 0. threshold t > 0: attributions
// are divided by their maximum magnitude first, then attr > t and attr <= -t
// are counted. Counts are divided by segment length, then normalized to 100.
Distribution segment_distribution(const std::vector<double>& attributions, const Segments& segments, double threshold);

struct SaliencyConfig {
  int steps = 50;
  int n_examples = 20;
  std::vector<Head> heads = {Head::start, Head::end, Head::label};
  double significance = 0.5;
};

struct SaliencyReport {
  // [0] original questions, [1] rewrites.
  std::array<Distribution, 2> sign;
  std::array<Distribution, 2> significant;
  std::size_t n_examples = 0;
  // Completeness of every attribution computed: |sum - (F(x) - F(x'))|
  // relative to |F(x) - F(x')|, and how many exceed 2% (+1e-6 absolute).
  std::size_t n_attributions = 0;
  std::size_t n_incomplete = 0;
  double max_completeness_error = 0.0;
  nlohmann::ordered_json to_json() const;
};

// Whether `r` satisfies |sum - (F(x) - F(x'))| <= rel * |F(x) - F(x')| + 1e-6.
double completeness_gap(const IGResult& r);
bool is_complete(const IGResult& r, double rel = 0.02);

// Averages distributions over a seeded sample of examples and over heads.
// `rewrites` (aligned with ds, may be null) replace the questions for the
// rewritten tables; null means rewrites equal the originals.
SaliencyReport saliency_report(const QAModel& qa, const Dataset& ds, const std::vector<Tokens>* rewrites,
                               const SaliencyConfig& cfg, std::uint64_t seed);

// Rows: table, input, polarity; columns question, history, document.
std::string saliency_csv(const SaliencyReport& report);

nlohmann::json saliency_config_json(const SaliencyConfig& cfg);
SaliencyConfig saliency_config_from_json(const nlohmann::json& j, const std::string& prefix = "saliency");

}  // namespace rrl

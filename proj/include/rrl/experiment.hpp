#pragma once

// Experiment runner shared by the command-line tool and the acceptance
// suite: run directories, the three training settings and the reports.

#include "rrl/config.hpp"
#include "rrl/metrics.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rrl {

// Output directory owned by one process through a `.lock` file. Files
// written through it are hashed into manifest.json by finish().
class RunDir {
 public:
  explicit RunDir(std::filesystem::path dir);
  ~RunDir();
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }
  void write(const std::string& name, const std::string& content);
  // Records a file written by other means (e.g. a checkpoint).
  void add_output(const std::string& name);
  void add_input(const std::string& name, const std::string& sha256);
  void finish(const std::string& command, const RunConfig& cfg, const std::string& seed_source);

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

// RRL_SEED, then an explicit override, replace cfg.seed. Returns where the
// seed came from ("config", "env", "cli").
std::string apply_seed_overrides(RunConfig& cfg, std::optional<std::uint64_t> cli_seed);

const Dataset& split_of(const Splits& s, const std::string& name);
Splits load_splits(const std::filesystem::path& dir);

// Rewriter training pairs: gold rewrites, each replaced by the original
// question with probability cfg.init_copy_fraction.
std::vector<StatePair> init_pairs(const Dataset& ds, const PolicyConfig& cfg, std::uint64_t seed);

// Rewrites of every question (beam search when cfg.beam_width > 1).
std::vector<Tokens> rewrite_dataset(const PolicyModel& policy, const Dataset& ds);

// Copy of `ds` whose questions are replaced by `questions`.
Dataset with_questions(const Dataset& ds, const std::vector<Tokens>& questions);

RewardFn qa_reward(const QAModel& qa, const Vocab& vocab);

// QA metrics on `ds`; `rewrites` (optional) replace the questions and feed
// copy rate and edit distance.
MetricsReport compute_metrics(const std::string& setting, const QAModel& qa, const Dataset& ds,
                              const std::vector<Tokens>* rewrites, double heq_reference = 1.0);

struct Correlations {
  double copy_f1 = 0.0;
  double edit_f1 = 0.0;
  std::size_t n_checkpoints = 0;
};
Correlations correlation_analysis(const std::vector<CheckpointRow>& rows);
Correlations correlation_analysis(const std::filesystem::path& run_dir);

// Trailing-window mean of per-iteration KL.
std::vector<double> running_mean(const std::vector<double>& xs, std::size_t window);

// Subcommands; each writes its artifacts and manifest into `out`.
void run_gen_data(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_train_qa(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_train_qr(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_train_ppo(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_augment(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_evaluate(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_perturb_eval(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_saliency(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);
void run_report(const RunConfig& cfg, const std::filesystem::path& out, const std::string& seed_source);

const std::vector<std::string>& subcommands();
void run_subcommand(const std::string& name, const RunConfig& cfg, const std::filesystem::path& out,
                    const std::string& seed_source);

}  // namespace rrl

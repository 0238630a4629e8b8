#pragma once
// Dual-objective prompt search: evaluate the incumbent under paraphrase
// variants, turn its worst examples into feedback, score candidate rewrites,
// and hill-climb on J = lambda_perf * accuracy + lambda_stab * (1 - flip
// rate). Runs persist per-iteration state and can resume after a crash.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptstab/backend.hpp"
#include "promptstab/domain.hpp"
#include "promptstab/paraphrase.hpp"

namespace promptstab::optimizer {

struct OptimizerConfig {
  ObjectiveConfig objective;
  int k_variants = 3;
  int n_candidates = 4;
  int max_iterations = 10;
  int patience = 3;          // stop after this many consecutive rejections
  int n_failure_examples = 5;
  int ece_bins = 10;
  uint64_t seed = 1;
  int concurrency = 1;

  bool operator==(const OptimizerConfig&) const = default;
};

void validate_optimizer_config(const OptimizerConfig& config);

void to_json(nlohmann::json& j, const OptimizerConfig& v);
void from_json(const nlohmann::json& j, OptimizerConfig& v);

// J(P) for an evaluated prompt. Stability enters as 1 - mean flip rate so
// both terms reward upward.
double objective(const EvalSummary& summary, const ObjectiveConfig& cfg);

struct EvalOptions {
  int k = 3;  // paraphrase variants per prompt
  uint64_t seed = 1;
  int concurrency = 1;
  int ece_bins = 10;
};

// Full evaluation of one prompt: K variants seeded per (prompt text, seed),
// base + variant predictions for every example, per-example records and
// aggregate metrics. Examples whose base or variant call failed are excluded
// and counted in n_excluded. Costs exactly (1 + K) * n backend predictions.
EvalSummary evaluate_prompt(backend::ModelBackend& backend, paraphrase::Paraphraser& paraphraser,
                            const Task& task, const Prompt& prompt, const Dataset& dataset,
                            const EvalOptions& options);

struct FailureExample {
  std::string example_id;
  std::string input_excerpt;  // rendered inputs, truncated
  std::string gold_label;
  std::string base_label;
  std::vector<std::string> variant_labels;
  double flip_rate = 0.0;
};

struct FailureReport {
  std::vector<FailureExample> high_flip;      // flip_rate desc, then id
  std::vector<FailureExample> misclassified;  // record order
};

// Picks at most n examples per category from the summary's records.
FailureReport identify_failures(const EvalSummary& summary, const Dataset& dataset, int n);

class CandidateGenerator {
 public:
  virtual ~CandidateGenerator() = default;

  // n distinct candidate prompts, none equal to current.text, every
  // placeholder preserved. Throws std::runtime_error mentioning
  // candidate-generation-failed when it cannot.
  virtual std::vector<Prompt> generate(const Prompt& current, const EvalSummary& summary,
                                       const FailureReport& failures, int n, int iteration,
                                       uint64_t seed) = 0;
};

// Appends one edit per candidate from a fixed menu: scenario vocabulary
// injections and generic clarifying / format instructions. Edits already
// present in the prompt are skipped.
class RuleBasedCandidateGenerator final : public CandidateGenerator {
 public:
  RuleBasedCandidateGenerator(std::vector<std::string> emphasis_tokens,
                              std::vector<std::string> steadiness_tokens);

  std::vector<Prompt> generate(const Prompt& current, const EvalSummary& summary,
                               const FailureReport& failures, int n, int iteration,
                               uint64_t seed) override;

 private:
  std::vector<std::string> edits_;
};

// Asks a generation-capable backend for rewrites, feeding it the measured
// accuracy, flip rate and failure excerpts.
class LlmCandidateGenerator final : public CandidateGenerator {
 public:
  explicit LlmCandidateGenerator(backend::ModelBackend& backend, int max_attempts = 3)
      : backend_(backend), max_attempts_(max_attempts) {}

  std::vector<Prompt> generate(const Prompt& current, const EvalSummary& summary,
                               const FailureReport& failures, int n, int iteration,
                               uint64_t seed) override;

 private:
  backend::ModelBackend& backend_;
  int max_attempts_;
};

struct CandidateScore {
  std::string prompt_id;
  double j = 0.0;
  double accuracy = 0.0;
  double flip_rate = 0.0;

  bool operator==(const CandidateScore&) const = default;
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  std::string incumbent_prompt_id;
  double incumbent_j = 0.0;
  double incumbent_accuracy = 0.0;
  double incumbent_flip_rate = 0.0;
  std::vector<CandidateScore> candidates;
  bool accepted = false;
  std::string accepted_prompt_id;  // empty when accepted == false

  bool operator==(const IterationRecord&) const = default;
};

void to_json(nlohmann::json& j, const CandidateScore& v);
void from_json(const nlohmann::json& j, CandidateScore& v);
void to_json(nlohmann::json& j, const IterationRecord& v);
void from_json(const nlohmann::json& j, IterationRecord& v);

struct RunOptions {
  // Empty disables persistence. Otherwise the directory receives run.json,
  // trajectory.jsonl (appended and flushed per iteration), prompts/<id>.json
  // and summaries/<id>.json.
  std::string out_dir;
  // Continue from an existing trajectory in out_dir instead of starting over.
  bool resume = false;
  // Extra fields merged into run.json (provenance such as dataset hash).
  nlohmann::json meta = nlohmann::json::object();
  std::function<void(const IterationRecord&)> on_iteration;
};

struct RunResult {
  Prompt final_prompt;
  EvalSummary final_summary;
  double final_j = 0.0;
  double start_accuracy = 0.0;
  double start_flip_rate = 0.0;
  // Final prompt re-evaluated under a paraphrase set the search never saw.
  double flip_end_fresh = 0.0;
  double accuracy_end_fresh = 0.0;
  std::vector<IterationRecord> trajectory;
  int iterations_run = 0;
  int accepted_count = 0;
};

RunResult run(const OptimizerConfig& config, backend::ModelBackend& backend,
              paraphrase::Paraphraser& paraphraser, CandidateGenerator& generator,
              const Task& task, const Prompt& initial, const Dataset& dataset,
              const RunOptions& options = {});

}  // namespace promptstab::optimizer

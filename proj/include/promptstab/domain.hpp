#pragma once
// Core value types shared by every module: tasks, examples, prompts,
// predictions and evaluation records. All types are immutable-by-convention
// value objects; construction validates the invariants and anything that can
// fail throws std::invalid_argument.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace promptstab {

struct Task {
  std::string id;
  std::vector<std::string> label_set;     // ordered, distinct, size >= 2
  std::vector<std::string> input_fields;  // named text slots filled per example

  bool operator==(const Task&) const = default;
};

// Throws if the label set has fewer than 2 entries or duplicates (labels are
// compared after trimming), or if input fields repeat.
void validate_task(const Task& task);

// Index of `label` in task.label_set, or -1. Matching trims surrounding
// whitespace and is case-sensitive.
int label_index(const Task& task, std::string_view label);

struct Example {
  std::string id;
  std::map<std::string, std::string> inputs;  // field name -> text
  std::string gold_label;
  std::map<std::string, std::string> metadata;

  bool operator==(const Example&) const = default;
};

struct Dataset {
  std::vector<Example> examples;

  bool operator==(const Dataset&) const = default;
};

struct Violation {
  std::string example_id;
  std::string rule;  // "duplicate-id" | "label-out-of-set"
  std::string detail;

  bool operator==(const Violation&) const = default;
};

// Returns one violation per failing record; empty means the dataset is clean.
// Violations are data, not failures.
std::vector<Violation> validate_dataset(const Dataset& dataset, const Task& task);

enum class ProvenanceKind { Manual, ParaphraseOf, OptimizerCandidate };

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Manual;
  std::string parent_id;  // paraphrase-of / optimizer-candidate
  int iteration = 0;      // optimizer-candidate only

  static Provenance manual() { return {}; }
  static Provenance paraphrase_of(std::string parent) {
    return {ProvenanceKind::ParaphraseOf, std::move(parent), 0};
  }
  static Provenance optimizer_candidate(int iteration, std::string parent) {
    return {ProvenanceKind::OptimizerCandidate, std::move(parent), iteration};
  }

  bool operator==(const Provenance&) const = default;
};

struct Prompt {
  std::string id;
  std::string text;  // template with {field} placeholders
  Provenance provenance;

  bool operator==(const Prompt&) const = default;
};

// Placeholder names appearing in a template, in {name} syntax where name is
// [A-Za-z_][A-Za-z0-9_-]*. Unrecognized brace content is left alone.
std::set<std::string> placeholders(std::string_view text);

// Throws unless every placeholder is a task input field and every task input
// field appears at least once.
void validate_prompt(const Prompt& prompt, const Task& task);

// Substitutes {field} occurrences with the example's inputs.
std::string render_prompt(const Prompt& prompt, const Example& example);

struct PromptVariantSet {
  Prompt base;
  std::vector<Prompt> variants;  // K >= 1, each sharing base's placeholders

  size_t k() const { return variants.size(); }

  bool operator==(const PromptVariantSet&) const = default;
};

// Throws if K < 1, any variant's placeholder set differs from the base's, or
// any two members of {base} + variants share identical text.
void validate_variant_set(const PromptVariantSet& set);

struct Prediction {
  std::string label;
  std::optional<std::map<std::string, double>> probs;
  std::string raw_output;

  // Builds a label-only prediction; the label must be in the task's label set
  // (after trimming).
  static Prediction from_label(const Task& task, std::string_view label, std::string raw_output);

  // Builds a probability-backed prediction. Requires an entry per label, all
  // entries >= 0 and summing to 1 within 1e-6; the stored label is the argmax
  // with ties broken toward the earlier label in label_set.
  static Prediction from_probs(const Task& task, std::map<std::string, double> probs,
                               std::string raw_output);

  bool operator==(const Prediction&) const = default;
};

// Deterministic argmax used by from_probs: earlier label_set entry wins ties.
std::string argmax_label(const Task& task, const std::map<std::string, double>& probs);

struct EvalRecord {
  std::string example_id;
  Prediction base_prediction;
  std::vector<Prediction> variant_predictions;  // K entries
  bool flip = false;                            // flip == (flip_rate > 0)
  double flip_rate = 0.0;                       // in {0, 1/K, ..., 1}
  std::optional<double> margin;                 // present iff base probs present
  bool correct = false;
  std::optional<std::vector<std::string>> conformal_set;
  std::optional<bool> covered;

  bool operator==(const EvalRecord&) const = default;
};

struct EvalSummary {
  std::string prompt_id;
  size_t n_examples = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_flip_rate = 0.0;
  std::optional<double> log_loss;
  std::optional<double> brier;
  std::optional<double> ece;
  std::optional<double> mce;
  std::optional<double> mean_jsd;
  size_t n_excluded = 0;  // examples dropped for unusable model output
  std::vector<EvalRecord> records;

  bool operator==(const EvalSummary&) const = default;
};

struct ObjectiveConfig {
  double lambda_perf = 1.0;
  double lambda_stab = 0.0;

  bool operator==(const ObjectiveConfig&) const = default;
};

// Throws unless both weights are >= 0 and their sum is positive.
void validate_objective(const ObjectiveConfig& cfg);

// JSON bindings (nlohmann ADL). Optional fields serialize as null.
void to_json(nlohmann::json& j, const Task& v);
void from_json(const nlohmann::json& j, Task& v);
void to_json(nlohmann::json& j, const Example& v);
void from_json(const nlohmann::json& j, Example& v);
void to_json(nlohmann::json& j, const Violation& v);
void to_json(nlohmann::json& j, const Provenance& v);
void from_json(const nlohmann::json& j, Provenance& v);
void to_json(nlohmann::json& j, const Prompt& v);
void from_json(const nlohmann::json& j, Prompt& v);
void to_json(nlohmann::json& j, const PromptVariantSet& v);
void from_json(const nlohmann::json& j, PromptVariantSet& v);
void to_json(nlohmann::json& j, const Prediction& v);
void from_json(const nlohmann::json& j, Prediction& v);
void to_json(nlohmann::json& j, const EvalRecord& v);
void from_json(const nlohmann::json& j, EvalRecord& v);
void to_json(nlohmann::json& j, const EvalSummary& v);
void from_json(const nlohmann::json& j, EvalSummary& v);
void to_json(nlohmann::json& j, const ObjectiveConfig& v);
void from_json(const nlohmann::json& j, ObjectiveConfig& v);

// File formats. Task: single JSON object. Dataset: JSON-lines, one example
// per line. Prompt files: .json holds a Prompt object, anything else is the
// raw template text (id = file stem, provenance manual).
Task load_task(const std::string& path);
Dataset load_dataset(const std::string& path);
std::string dataset_to_jsonl(const Dataset& dataset);
Dataset dataset_from_jsonl(const std::string& text);
Prompt load_prompt_file(const std::string& path);
PromptVariantSet load_variant_file(const std::string& path);

}  // namespace promptstab

#include "promptstab/domain.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "promptstab/util.hpp"

namespace promptstab {

using nlohmann::json;

namespace {

constexpr double kProbSumTolerance = 1e-6;

void set_opt(json& j, const char* key, const std::optional<double>& v) {
  j[key] = v.has_value() ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

bool placeholder_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

}  // namespace

void validate_task(const Task& task) {
  if (task.id.empty()) throw std::invalid_argument("task id must be non-empty");
  if (task.label_set.size() < 2)
    throw std::invalid_argument("task '" + task.id + "': label_set needs at least 2 labels");
  std::unordered_set<std::string> seen;
  for (const auto& label : task.label_set) {
    const std::string canon = util::trim_copy(label);
    if (canon.empty())
      throw std::invalid_argument("task '" + task.id + "': empty label in label_set");
    if (!seen.insert(canon).second)
      throw std::invalid_argument("task '" + task.id + "': duplicate label '" + canon + "'");
  }
  std::unordered_set<std::string> fields;
  for (const auto& f : task.input_fields) {
    if (!fields.insert(f).second)
      throw std::invalid_argument("task '" + task.id + "': duplicate input field '" + f + "'");
  }
}

int label_index(const Task& task, std::string_view label) {
  const std::string_view canon = util::trim(label);
  for (size_t i = 0; i < task.label_set.size(); ++i) {
    if (util::trim(task.label_set[i]) == canon) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Violation> validate_dataset(const Dataset& dataset, const Task& task) {
  std::vector<Violation> violations;
  std::unordered_set<std::string> ids;
  for (const auto& ex : dataset.examples) {
    if (!ids.insert(ex.id).second)
      violations.push_back({ex.id, "duplicate-id", "example id occurs more than once"});
    if (label_index(task, ex.gold_label) < 0)
      violations.push_back({ex.id, "label-out-of-set",
                            "gold label '" + ex.gold_label + "' not in task label set"});
  }
  return violations;
}

std::set<std::string> placeholders(std::string_view text) {
  std::set<std::string> names;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    size_t j = i + 1;
    if (j >= text.size()) break;
    const char first = text[j];
    if (!std::isalpha(static_cast<unsigned char>(first)) && first != '_') continue;
    while (j < text.size() && placeholder_char(text[j])) ++j;
    if (j < text.size() && text[j] == '}') {
      names.emplace(text.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return names;
}

void validate_prompt(const Prompt& prompt, const Task& task) {
  const auto names = placeholders(prompt.text);
  for (const auto& name : names) {
    if (std::find(task.input_fields.begin(), task.input_fields.end(), name) ==
        task.input_fields.end())
      throw std::invalid_argument("prompt '" + prompt.id + "': placeholder {" + name +
                                  "} is not a task input field");
  }
  for (const auto& field : task.input_fields) {
    if (names.count(field) == 0)
      throw std::invalid_argument("prompt '" + prompt.id + "': task input field {" + field +
                                  "} never appears");
  }
}

std::string render_prompt(const Prompt& prompt, const Example& example) {
  std::string out;
  out.reserve(prompt.text.size());
  const std::string_view text = prompt.text;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '{') {
      size_t j = i + 1;
      while (j < text.size() && placeholder_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        const std::string name(text.substr(i + 1, j - i - 1));
        auto it = example.inputs.find(name);
        if (it != example.inputs.end()) {
          out += it->second;
          i = j;
          continue;
        }
      }
    }
    out += text[i];
  }
  return out;
}

void validate_variant_set(const PromptVariantSet& set) {
  if (set.variants.empty()) throw std::invalid_argument("variant set needs K >= 1 variants");
  const auto base_names = placeholders(set.base.text);
  std::unordered_set<std::string> texts{set.base.text};
  for (size_t i = 0; i < set.variants.size(); ++i) {
    if (placeholders(set.variants[i].text) != base_names)
      throw std::invalid_argument("variant " + std::to_string(i) +
                                  " does not preserve the base placeholder set");
    if (!texts.insert(set.variants[i].text).second)
      throw std::invalid_argument("variant " + std::to_string(i) +
                                  " duplicates another prompt's text");
  }
}

std::string argmax_label(const Task& task, const std::map<std::string, double>& probs) {
  std::string best;
  double best_p = -1.0;
  for (const auto& label : task.label_set) {
    auto it = probs.find(label);
    if (it == probs.end()) continue;
    if (it->second > best_p) {
      best_p = it->second;
      best = label;
    }
  }
  if (best.empty()) throw std::invalid_argument("argmax over empty probability map");
  return best;
}

Prediction Prediction::from_label(const Task& task, std::string_view label,
                                  std::string raw_output) {
  const int idx = label_index(task, label);
  if (idx < 0)
    throw std::invalid_argument("prediction label '" + std::string(label) +
                                "' not in task label set");
  return Prediction{task.label_set[static_cast<size_t>(idx)], std::nullopt,
                    std::move(raw_output)};
}

Prediction Prediction::from_probs(const Task& task, std::map<std::string, double> probs,
                                  std::string raw_output) {
  if (probs.size() != task.label_set.size())
    throw std::invalid_argument("probability map must cover exactly the task label set");
  double sum = 0.0;
  for (const auto& label : task.label_set) {
    auto it = probs.find(label);
    if (it == probs.end())
      throw std::invalid_argument("probability map missing label '" + label + "'");
    if (it->second < 0.0)
      throw std::invalid_argument("negative probability for label '" + label + "'");
    sum += it->second;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance)
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum) +
                                ", outside 1 +/- 1e-6");
  std::string label = argmax_label(task, probs);
  return Prediction{std::move(label), std::move(probs), std::move(raw_output)};
}

void validate_objective(const ObjectiveConfig& cfg) {
  if (cfg.lambda_perf < 0.0 || cfg.lambda_stab < 0.0)
    throw std::invalid_argument("objective weights must be non-negative");
  if (cfg.lambda_perf + cfg.lambda_stab <= 0.0)
    throw std::invalid_argument("objective weights must not both be zero");
}

// ---------------------------------------------------------------------------
// JSON bindings

void to_json(json& j, const Task& v) {
  j = json{{"id", v.id}, {"label_set", v.label_set}, {"input_fields", v.input_fields}};
}

void from_json(const json& j, Task& v) {
  j.at("id").get_to(v.id);
  j.at("label_set").get_to(v.label_set);
  j.at("input_fields").get_to(v.input_fields);
}

void to_json(json& j, const Example& v) {
  j = json{{"id", v.id},
           {"inputs", v.inputs},
           {"gold_label", v.gold_label},
           {"metadata", v.metadata}};
}

void from_json(const json& j, Example& v) {
  j.at("id").get_to(v.id);
  j.at("inputs").get_to(v.inputs);
  j.at("gold_label").get_to(v.gold_label);
  v.metadata.clear();
  if (auto it = j.find("metadata"); it != j.end() && !it->is_null())
    it->get_to(v.metadata);
}

void to_json(json& j, const Violation& v) {
  j = json{{"example_id", v.example_id}, {"rule", v.rule}, {"detail", v.detail}};
}

void to_json(json& j, const Provenance& v) {
  switch (v.kind) {
    case ProvenanceKind::Manual:
      j = json{{"kind", "manual"}};
      break;
    case ProvenanceKind::ParaphraseOf:
      j = json{{"kind", "paraphrase-of"}, {"parent", v.parent_id}};
      break;
    case ProvenanceKind::OptimizerCandidate:
      j = json{{"kind", "optimizer-candidate"}, {"parent", v.parent_id}, {"iteration", v.iteration}};
      break;
  }
}

void from_json(const json& j, Provenance& v) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "manual") {
    v = Provenance::manual();
  } else if (kind == "paraphrase-of") {
    v = Provenance::paraphrase_of(j.at("parent").get<std::string>());
  } else if (kind == "optimizer-candidate") {
    v = Provenance::optimizer_candidate(j.at("iteration").get<int>(),
                                        j.at("parent").get<std::string>());
  } else {
    throw std::invalid_argument("unknown provenance kind '" + kind + "'");
  }
}

void to_json(json& j, const Prompt& v) {
  j = json{{"id", v.id}, {"text", v.text}, {"provenance", v.provenance}};
}

void from_json(const json& j, Prompt& v) {
  j.at("id").get_to(v.id);
  j.at("text").get_to(v.text);
  if (auto it = j.find("provenance"); it != j.end() && !it->is_null())
    it->get_to(v.provenance);
  else
    v.provenance = Provenance::manual();
}

void to_json(json& j, const PromptVariantSet& v) {
  j = json{{"base", v.base}, {"variants", v.variants}, {"k", v.variants.size()}};
}

void from_json(const json& j, PromptVariantSet& v) {
  j.at("base").get_to(v.base);
  j.at("variants").get_to(v.variants);
}

void to_json(json& j, const Prediction& v) {
  j = json{{"label", v.label}, {"raw_output", v.raw_output}};
  j["probs"] = v.probs.has_value() ? json(*v.probs) : json(nullptr);
}

void from_json(const json& j, Prediction& v) {
  j.at("label").get_to(v.label);
  j.at("raw_output").get_to(v.raw_output);
  v.probs = get_opt<std::map<std::string, double>>(j, "probs");
}

void to_json(json& j, const EvalRecord& v) {
  j = json{{"example_id", v.example_id},
           {"base_prediction", v.base_prediction},
           {"variant_predictions", v.variant_predictions},
           {"flip", v.flip},
           {"flip_rate", v.flip_rate},
           {"correct", v.correct}};
  set_opt(j, "margin", v.margin);
  j["conformal_set"] =
      v.conformal_set.has_value() ? json(*v.conformal_set) : json(nullptr);
  j["covered"] = v.covered.has_value() ? json(*v.covered) : json(nullptr);
}

void from_json(const json& j, EvalRecord& v) {
  j.at("example_id").get_to(v.example_id);
  j.at("base_prediction").get_to(v.base_prediction);
  j.at("variant_predictions").get_to(v.variant_predictions);
  j.at("flip").get_to(v.flip);
  j.at("flip_rate").get_to(v.flip_rate);
  j.at("correct").get_to(v.correct);
  v.margin = get_opt<double>(j, "margin");
  v.conformal_set = get_opt<std::vector<std::string>>(j, "conformal_set");
  v.covered = get_opt<bool>(j, "covered");
}

void to_json(json& j, const EvalSummary& v) {
  j = json{{"prompt_id", v.prompt_id},
           {"n_examples", v.n_examples},
           {"accuracy", v.accuracy},
           {"macro_f1", v.macro_f1},
           {"mean_flip_rate", v.mean_flip_rate},
           {"n_excluded", v.n_excluded},
           {"records", v.records}};
  set_opt(j, "log_loss", v.log_loss);
  set_opt(j, "brier", v.brier);
  set_opt(j, "ece", v.ece);
  set_opt(j, "mce", v.mce);
  set_opt(j, "mean_jsd", v.mean_jsd);
}

void from_json(const json& j, EvalSummary& v) {
  j.at("prompt_id").get_to(v.prompt_id);
  j.at("n_examples").get_to(v.n_examples);
  j.at("accuracy").get_to(v.accuracy);
  j.at("macro_f1").get_to(v.macro_f1);
  j.at("mean_flip_rate").get_to(v.mean_flip_rate);
  j.at("records").get_to(v.records);
  v.n_excluded = j.value("n_excluded", size_t{0});
  v.log_loss = get_opt<double>(j, "log_loss");
  v.brier = get_opt<double>(j, "brier");
  v.ece = get_opt<double>(j, "ece");
  v.mce = get_opt<double>(j, "mce");
  v.mean_jsd = get_opt<double>(j, "mean_jsd");
}

void to_json(json& j, const ObjectiveConfig& v) {
  j = json{{"lambda_perf", v.lambda_perf}, {"lambda_stab", v.lambda_stab}};
}

void from_json(const json& j, ObjectiveConfig& v) {
  j.at("lambda_perf").get_to(v.lambda_perf);
  j.at("lambda_stab").get_to(v.lambda_stab);
}

// ---------------------------------------------------------------------------
// File formats

Task load_task(const std::string& path) {
  Task task = json::parse(util::read_file(path)).get<Task>();
  validate_task(task);
  return task;
}

Dataset dataset_from_jsonl(const std::string& text) {
  Dataset dataset;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    try {
      dataset.examples.push_back(json::parse(line).get<Example>());
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dataset;
}

Dataset load_dataset(const std::string& path) { return dataset_from_jsonl(util::read_file(path)); }

std::string dataset_to_jsonl(const Dataset& dataset) {
  std::string out;
  for (const auto& ex : dataset.examples) {
    out += json(ex).dump();
    out += '\n';
  }
  return out;
}

Prompt load_prompt_file(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.extension() == ".json")
    return json::parse(util::read_file(p)).get<Prompt>();
  Prompt prompt;
  prompt.id = p.stem().string();
  prompt.text = util::read_file(p);
  while (!prompt.text.empty() && (prompt.text.back() == '\n' || prompt.text.back() == '\r'))
    prompt.text.pop_back();
  prompt.provenance = Provenance::manual();
  return prompt;
}

PromptVariantSet load_variant_file(const std::string& path) {
  PromptVariantSet set = json::parse(util::read_file(path)).get<PromptVariantSet>();
  validate_variant_set(set);
  return set;
}

}  // namespace promptstab

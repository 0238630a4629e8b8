#include "promptstab/optimizer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "promptstab/metrics.hpp"
#include "promptstab/resources.hpp"
#include "promptstab/util.hpp"

namespace promptstab::optimizer {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_optimizer_config(const OptimizerConfig& config) {
  validate_objective(config.objective);
  if (config.k_variants < 1) {
    throw std::invalid_argument("optimizer config: k_variants must be at least 1");
  }
  if (config.n_candidates < 1) {
    throw std::invalid_argument("optimizer config: n_candidates must be at least 1");
  }
  if (config.max_iterations < 1) {
    throw std::invalid_argument("optimizer config: max_iterations must be at least 1");
  }
  if (config.patience < 1) {
    throw std::invalid_argument("optimizer config: patience must be at least 1");
  }
  if (config.n_failure_examples < 0) {
    throw std::invalid_argument("optimizer config: n_failure_examples must be non-negative");
  }
  if (config.ece_bins < 1) {
    throw std::invalid_argument("optimizer config: ece_bins must be at least 1");
  }
  if (config.concurrency < 1) {
    throw std::invalid_argument("optimizer config: concurrency must be at least 1");
  }
}

void to_json(json& j, const OptimizerConfig& v) {
  j = json{{"objective", v.objective},
           {"k_variants", v.k_variants},
           {"n_candidates", v.n_candidates},
           {"max_iterations", v.max_iterations},
           {"patience", v.patience},
           {"n_failure_examples", v.n_failure_examples},
           {"ece_bins", v.ece_bins},
           {"seed", v.seed},
           {"concurrency", v.concurrency}};
}

void from_json(const json& j, OptimizerConfig& v) {
  OptimizerConfig defaults;
  v.objective = j.value("objective", defaults.objective);
  v.k_variants = j.value("k_variants", defaults.k_variants);
  v.n_candidates = j.value("n_candidates", defaults.n_candidates);
  v.max_iterations = j.value("max_iterations", defaults.max_iterations);
  v.patience = j.value("patience", defaults.patience);
  v.n_failure_examples = j.value("n_failure_examples", defaults.n_failure_examples);
  v.ece_bins = j.value("ece_bins", defaults.ece_bins);
  v.seed = j.value("seed", defaults.seed);
  v.concurrency = j.value("concurrency", defaults.concurrency);
}

double objective(const EvalSummary& summary, const ObjectiveConfig& cfg) {
  return cfg.lambda_perf * summary.accuracy + cfg.lambda_stab * (1.0 - summary.mean_flip_rate);
}

EvalSummary evaluate_prompt(backend::ModelBackend& backend, paraphrase::Paraphraser& paraphraser,
                            const Task& task, const Prompt& prompt, const Dataset& dataset,
                            const EvalOptions& options) {
  if (options.k < 1) {
    throw std::invalid_argument("evaluate_prompt: k must be at least 1");
  }
  if (dataset.examples.empty()) {
    throw std::invalid_argument("evaluate_prompt: dataset has no examples");
  }
  validate_prompt(prompt, task);

  // Variant sets are seeded per (prompt text, run seed): re-evaluating the
  // same prompt reuses the same paraphrases, distinct prompts get their own.
  uint64_t variant_seed = util::fnv1a64_u64(options.seed);
  variant_seed = util::fnv1a64("variants", variant_seed);
  variant_seed = util::fnv1a64(prompt.text, variant_seed);
  const PromptVariantSet variants = paraphraser.generate(prompt, options.k, variant_seed);

  const auto base_items =
      backend::predict_batch(backend, task, prompt, dataset.examples, options.concurrency);
  std::vector<std::vector<backend::BatchItem>> variant_items;
  variant_items.reserve(variants.variants.size());
  for (const auto& variant : variants.variants) {
    variant_items.push_back(
        backend::predict_batch(backend, task, variant, dataset.examples, options.concurrency));
  }

  EvalSummary summary;
  summary.prompt_id = prompt.id;

  std::vector<std::string> golds;
  std::vector<std::string> predicted;
  std::vector<Prediction> base_predictions;
  double flip_sum = 0.0;
  bool all_probs = true;
  double jsd_sum = 0.0;

  const std::size_t k = variants.variants.size();
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    bool usable = base_items[i].ok();
    for (std::size_t v = 0; usable && v < k; ++v) usable = variant_items[v][i].ok();
    if (!usable) {
      ++summary.n_excluded;
      continue;
    }
    const Example& example = dataset.examples[i];

    EvalRecord record;
    record.example_id = example.id;
    record.base_prediction = *base_items[i].prediction;
    record.variant_predictions.reserve(k);
    std::size_t flips = 0;
    for (std::size_t v = 0; v < k; ++v) {
      const Prediction& vp = *variant_items[v][i].prediction;
      if (util::trim(vp.label) != util::trim(record.base_prediction.label)) ++flips;
      record.variant_predictions.push_back(vp);
    }
    record.flip_rate = static_cast<double>(flips) / static_cast<double>(k);
    record.flip = flips > 0;
    record.correct = util::trim(record.base_prediction.label) == util::trim(example.gold_label);
    if (record.base_prediction.probs) {
      record.margin = metrics::margin(record.base_prediction);
    } else {
      all_probs = false;
    }
    double record_jsd = 0.0;
    bool record_jsd_ok = record.base_prediction.probs.has_value();
    for (const auto& vp : record.variant_predictions) {
      if (!vp.probs) {
        all_probs = false;
        record_jsd_ok = false;
        break;
      }
      record_jsd += metrics::jsd(*record.base_prediction.probs, *vp.probs);
    }
    if (record_jsd_ok) jsd_sum += record_jsd / static_cast<double>(k);

    flip_sum += record.flip_rate;
    golds.push_back(example.gold_label);
    predicted.push_back(record.base_prediction.label);
    base_predictions.push_back(record.base_prediction);
    summary.records.push_back(std::move(record));
  }

  if (summary.records.empty()) {
    throw backend::BackendError("backend-unavailable: every example failed while evaluating "
                                "prompt '" + prompt.id + "'");
  }

  summary.n_examples = summary.records.size();
  summary.accuracy = metrics::accuracy(summary.records);
  summary.macro_f1 = metrics::macro_f1(golds, predicted, task.label_set);
  summary.mean_flip_rate = flip_sum / static_cast<double>(summary.n_examples);
  if (all_probs) {
    summary.log_loss = metrics::log_loss(base_predictions, golds);
    summary.brier = metrics::brier(base_predictions, golds);
    const auto ece = metrics::ece_mce(summary.records, options.ece_bins);
    summary.ece = ece.ece;
    summary.mce = ece.mce;
    summary.mean_jsd = jsd_sum / static_cast<double>(summary.n_examples);
  }
  return summary;
}

FailureReport identify_failures(const EvalSummary& summary, const Dataset& dataset, int n) {
  if (n < 0) {
    throw std::invalid_argument("identify_failures: n must be non-negative");
  }
  std::map<std::string, const Example*> by_id;
  for (const auto& example : dataset.examples) by_id[example.id] = &example;

  constexpr std::size_t kExcerptLimit = 500;
  auto to_failure = [&](const EvalRecord& record) {
    FailureExample failure;
    failure.example_id = record.example_id;
    if (auto it = by_id.find(record.example_id); it != by_id.end()) {
      std::string joined;
      for (const auto& [field, value] : it->second->inputs) {
        if (!joined.empty()) joined += "; ";
        joined += field + ": " + value;
      }
      if (joined.size() > kExcerptLimit) {
        joined.resize(kExcerptLimit);
        joined += "...";
      }
      failure.input_excerpt = std::move(joined);
      failure.gold_label = it->second->gold_label;
    }
    failure.base_label = record.base_prediction.label;
    for (const auto& vp : record.variant_predictions) failure.variant_labels.push_back(vp.label);
    failure.flip_rate = record.flip_rate;
    return failure;
  };

  FailureReport report;

  std::vector<const EvalRecord*> flipping;
  for (const auto& record : summary.records) {
    if (record.flip_rate > 0.0) flipping.push_back(&record);
  }
  std::stable_sort(flipping.begin(), flipping.end(), [](const EvalRecord* a, const EvalRecord* b) {
    if (a->flip_rate != b->flip_rate) return a->flip_rate > b->flip_rate;
    return a->example_id < b->example_id;
  });
  for (const auto* record : flipping) {
    if (static_cast<int>(report.high_flip.size()) >= n) break;
    report.high_flip.push_back(to_failure(*record));
  }

  for (const auto& record : summary.records) {
    if (record.correct) continue;
    if (static_cast<int>(report.misclassified.size()) >= n) break;
    report.misclassified.push_back(to_failure(record));
  }
  return report;
}

RuleBasedCandidateGenerator::RuleBasedCandidateGenerator(
    std::vector<std::string> emphasis_tokens, std::vector<std::string> steadiness_tokens) {
  // Token edits lead the menu, alternating between the two vocabularies so a
  // window always offers both directions while any remain.
  const std::size_t longest = std::max(emphasis_tokens.size(), steadiness_tokens.size());
  for (std::size_t i = 0; i < longest; ++i) {
    if (i < emphasis_tokens.size()) {
      edits_.push_back("Be " + emphasis_tokens[i] + " when you decide.");
    }
    if (i < steadiness_tokens.size()) {
      edits_.push_back("Keep your answer " + steadiness_tokens[i] + " across rewordings.");
    }
  }
  edits_.insert(edits_.end(), {
                                  "Read the input carefully before answering.",
                                  "Respond with exactly one label and nothing else.",
                                  "If the input is ambiguous, choose the closest label.",
                                  "Base the decision only on the given input.",
                                  "Consider each label before settling on one.",
                                  "Ignore formatting differences in the input.",
                                  "State the label without hedging.",
                                  "Re-read the instruction before finalizing.",
                                  "Answer the same way for equivalent inputs.",
                                  "Do not add explanations.",
                              });
}

std::vector<Prompt> RuleBasedCandidateGenerator::generate(const Prompt& current,
                                                          const EvalSummary& /*summary*/,
                                                          const FailureReport& /*failures*/, int n,
                                                          int iteration, uint64_t /*seed*/) {
  if (n < 1) {
    throw std::invalid_argument("candidate generation: n must be at least 1");
  }
  std::vector<std::string> available;
  for (const auto& edit : edits_) {
    if (current.text.find(edit) == std::string::npos) available.push_back(edit);
  }
  if (static_cast<int>(available.size()) < n) {
    throw std::runtime_error("candidate-generation-failed: only " +
                             std::to_string(available.size()) + " unused edits remain, " +
                             std::to_string(n) + " candidates requested");
  }

  // The first two slots take the highest-priority unused edits; the rest
  // rotate with the iteration so rejected iterations explore new fillers
  // instead of re-proposing an identical window.
  std::vector<std::size_t> picks;
  const std::size_t lead = std::min<std::size_t>({2, available.size(), static_cast<std::size_t>(n)});
  for (std::size_t i = 0; i < lead; ++i) picks.push_back(i);
  if (available.size() > lead) {
    const std::size_t span = available.size() - lead;
    std::size_t offset = (static_cast<std::size_t>(iteration - 1) * 2) % span;
    while (picks.size() < static_cast<std::size_t>(n)) {
      picks.push_back(lead + offset);
      offset = (offset + 1) % span;
    }
  }

  std::vector<Prompt> candidates;
  candidates.reserve(picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    Prompt candidate;
    candidate.id = "cand-i" + std::to_string(iteration) + "-" + std::to_string(i + 1);
    candidate.text = util::trim_copy(current.text) + " " + available[picks[i]];
    candidate.provenance = Provenance::optimizer_candidate(iteration, current.id);
    candidates.push_back(std::move(candidate));
  }
  return candidates;
}

std::vector<Prompt> LlmCandidateGenerator::generate(const Prompt& current,
                                                    const EvalSummary& summary,
                                                    const FailureReport& failures, int n,
                                                    int iteration, uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("candidate generation: n must be at least 1");
  }
  const auto current_placeholders = placeholders(current.text);

  std::string request = "Current instruction:\n" + current.text + "\n\n";
  request += "Measured accuracy: " + util::fmt_double(summary.accuracy) + "\n";
  request += "Paraphrase flip rate: " + util::fmt_double(summary.mean_flip_rate) + "\n";
  auto describe = [&request](const char* title, const std::vector<FailureExample>& failures_list) {
    if (failures_list.empty()) return;
    request += "\n";
    request += title;
    request += "\n";
    for (const auto& f : failures_list) {
      request += "- input: " + f.input_excerpt + " | gold: " + f.gold_label +
                 " | predicted: " + f.base_label +
                 " | flip rate: " + util::fmt_double(f.flip_rate) + "\n";
    }
  };
  describe("Examples whose answer changes under paraphrase:", failures.high_flip);
  describe("Misclassified examples:", failures.misclassified);
  request += "\nWrite " + std::to_string(n) + " revised instructions.";

  std::vector<Prompt> candidates;
  std::vector<std::string> used{current.text};
  std::string last_error = "no response";
  bool any_response = false;
  for (int attempt = 0; attempt < max_attempts_; ++attempt) {
    std::string response;
    try {
      response = backend_.complete(std::string(resources::kCandidateMetaPromptV1), request,
                                   seed + static_cast<uint64_t>(attempt));
      any_response = true;
    } catch (const backend::BackendError& e) {
      last_error = e.what();
      continue;
    }
    for (const auto& line : paraphrase::parse_numbered_lines(response)) {
      if (static_cast<int>(candidates.size()) >= n) break;
      if (std::find(used.begin(), used.end(), line) != used.end()) continue;
      if (placeholders(line) != current_placeholders) continue;
      used.push_back(line);
      Prompt candidate;
      candidate.id =
          "cand-i" + std::to_string(iteration) + "-" + std::to_string(candidates.size() + 1);
      candidate.text = line;
      candidate.provenance = Provenance::optimizer_candidate(iteration, current.id);
      candidates.push_back(std::move(candidate));
    }
    if (static_cast<int>(candidates.size()) >= n) return candidates;
    last_error = "collected " + std::to_string(candidates.size()) + " valid candidate(s)";
  }
  // Distinguish a dead backend from unusable rewrites: only the latter is a
  // candidate-generation problem.
  if (!any_response) {
    throw backend::BackendError(last_error);
  }
  throw std::runtime_error("candidate-generation-failed: " + std::to_string(max_attempts_) +
                           " attempt(s) produced fewer than " + std::to_string(n) +
                           " candidates (" + last_error + ")");
}

void to_json(json& j, const CandidateScore& v) {
  j = json{{"prompt_id", v.prompt_id},
           {"j", v.j},
           {"accuracy", v.accuracy},
           {"flip_rate", v.flip_rate}};
}

void from_json(const json& j, CandidateScore& v) {
  j.at("prompt_id").get_to(v.prompt_id);
  j.at("j").get_to(v.j);
  j.at("accuracy").get_to(v.accuracy);
  j.at("flip_rate").get_to(v.flip_rate);
}

void to_json(json& j, const IterationRecord& v) {
  j = json{{"iteration", v.iteration},
           {"incumbent_prompt_id", v.incumbent_prompt_id},
           {"incumbent_j", v.incumbent_j},
           {"incumbent_accuracy", v.incumbent_accuracy},
           {"incumbent_flip_rate", v.incumbent_flip_rate},
           {"candidates", v.candidates},
           {"accepted", v.accepted},
           {"accepted_prompt_id", v.accepted_prompt_id}};
}

void from_json(const json& j, IterationRecord& v) {
  j.at("iteration").get_to(v.iteration);
  j.at("incumbent_prompt_id").get_to(v.incumbent_prompt_id);
  j.at("incumbent_j").get_to(v.incumbent_j);
  j.at("incumbent_accuracy").get_to(v.incumbent_accuracy);
  j.at("incumbent_flip_rate").get_to(v.incumbent_flip_rate);
  j.at("candidates").get_to(v.candidates);
  j.at("accepted").get_to(v.accepted);
  v.accepted_prompt_id = j.value("accepted_prompt_id", std::string{});
}

namespace {

std::string sanitize_id(const std::string& id) {
  std::string out = id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return out;
}

void persist_prompt(const fs::path& dir, const Prompt& prompt) {
  util::atomic_write_file(dir / "prompts" / (sanitize_id(prompt.id) + ".json"),
                          json(prompt).dump(2) + "\n");
}

void persist_summary(const fs::path& dir, const EvalSummary& summary) {
  util::atomic_write_file(dir / "summaries" / (sanitize_id(summary.prompt_id) + ".json"),
                          json(summary).dump(2) + "\n");
}

json run_header(const OptimizerConfig& config, const Task& task, const Prompt& initial,
                const json& meta) {
  json j{{"config", config}, {"task_id", task.id}, {"initial_prompt", initial}};
  if (meta.is_object()) {
    for (const auto& [key, value] : meta.items()) j[key] = value;
  }
  return j;
}

uint64_t derived_seed(uint64_t seed, std::string_view salt, uint64_t n = 0) {
  uint64_t h = util::fnv1a64_u64(seed);
  h = util::fnv1a64(salt, h);
  h = util::fnv1a64_u64(n, h);
  return h;
}

}  // namespace

RunResult run(const OptimizerConfig& config, backend::ModelBackend& backend,
              paraphrase::Paraphraser& paraphraser, CandidateGenerator& generator,
              const Task& task, const Prompt& initial, const Dataset& dataset,
              const RunOptions& options) {
  validate_optimizer_config(config);
  validate_task(task);
  validate_prompt(initial, task);
  if (dataset.examples.empty()) {
    throw std::invalid_argument("optimizer: dataset has no examples");
  }

  const bool persist = !options.out_dir.empty();
  const fs::path dir(options.out_dir);
  const EvalOptions eval_options{config.k_variants, config.seed, config.concurrency,
                                 config.ece_bins};

  Prompt incumbent = initial;
  EvalSummary incumbent_summary;
  double incumbent_j = 0.0;
  std::vector<IterationRecord> trajectory;
  int next_iteration = 1;
  int consecutive_rejects = 0;

  bool resumed = false;
  if (persist && options.resume && fs::exists(dir / "trajectory.jsonl")) {
    // A resumed run continues the stored trajectory; the caller must pass the
    // same configuration, otherwise the combined run would be incoherent.
    if (fs::exists(dir / "run.json")) {
      const json header = json::parse(util::read_file(dir / "run.json"));
      if (header.contains("config") && header["config"].get<OptimizerConfig>() != config) {
        throw std::invalid_argument("optimizer resume: stored run.json was produced with a "
                                    "different configuration");
      }
    }
    const std::string content = util::read_file(dir / "trajectory.jsonl");
    std::size_t start = 0;
    while (start < content.size()) {
      const std::size_t end = content.find('\n', start);
      const std::string line =
          content.substr(start, end == std::string::npos ? std::string::npos : end - start);
      start = end == std::string::npos ? content.size() : end + 1;
      if (util::trim(line).empty()) continue;
      trajectory.push_back(json::parse(line).get<IterationRecord>());
    }
    if (!trajectory.empty()) {
      std::string incumbent_id = initial.id;
      for (const auto& record : trajectory) {
        if (record.accepted) incumbent_id = record.accepted_prompt_id;
      }
      const fs::path prompt_file = dir / "prompts" / (sanitize_id(incumbent_id) + ".json");
      const fs::path summary_file = dir / "summaries" / (sanitize_id(incumbent_id) + ".json");
      if (!fs::exists(prompt_file) || !fs::exists(summary_file)) {
        throw std::runtime_error("optimizer resume: missing persisted state for prompt '" +
                                 incumbent_id + "'");
      }
      incumbent = json::parse(util::read_file(prompt_file)).get<Prompt>();
      incumbent_summary = json::parse(util::read_file(summary_file)).get<EvalSummary>();
      incumbent_j = objective(incumbent_summary, config.objective);
      next_iteration = trajectory.back().iteration + 1;
      for (auto it = trajectory.rbegin(); it != trajectory.rend() && !it->accepted; ++it) {
        ++consecutive_rejects;
      }
      resumed = true;
    }
  }

  if (!resumed) {
    incumbent_summary = evaluate_prompt(backend, paraphraser, task, incumbent, dataset,
                                        eval_options);
    incumbent_j = objective(incumbent_summary, config.objective);
    if (persist) {
      fs::create_directories(dir);
      util::atomic_write_file(dir / "run.json",
                              run_header(config, task, initial, options.meta).dump(2) + "\n");
      persist_prompt(dir, incumbent);
      persist_summary(dir, incumbent_summary);
      util::atomic_write_file(dir / "trajectory.jsonl", "");
    }
  }

  std::ofstream trajectory_out;
  if (persist) {
    trajectory_out.open(dir / "trajectory.jsonl", std::ios::app);
    if (!trajectory_out) {
      throw std::runtime_error("optimizer: cannot open trajectory.jsonl for append");
    }
  }

  for (int iteration = next_iteration;
       iteration <= config.max_iterations && consecutive_rejects < config.patience; ++iteration) {
    const FailureReport failures =
        identify_failures(incumbent_summary, dataset, config.n_failure_examples);
    const uint64_t candidate_seed =
        derived_seed(config.seed, "candidates", static_cast<uint64_t>(iteration));
    std::vector<Prompt> candidates = generator.generate(
        incumbent, incumbent_summary, failures, config.n_candidates, iteration, candidate_seed);

    IterationRecord record;
    record.iteration = iteration;
    record.incumbent_prompt_id = incumbent.id;
    record.incumbent_j = incumbent_j;
    record.incumbent_accuracy = incumbent_summary.accuracy;
    record.incumbent_flip_rate = incumbent_summary.mean_flip_rate;

    int best_index = -1;
    double best_j = -std::numeric_limits<double>::infinity();
    EvalSummary best_summary;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      validate_prompt(candidates[i], task);
      EvalSummary candidate_summary =
          evaluate_prompt(backend, paraphraser, task, candidates[i], dataset, eval_options);
      const double candidate_j = objective(candidate_summary, config.objective);
      record.candidates.push_back({candidates[i].id, candidate_j, candidate_summary.accuracy,
                                   candidate_summary.mean_flip_rate});
      if (persist) {
        persist_prompt(dir, candidates[i]);
        persist_summary(dir, candidate_summary);
      }
      if (candidate_j > best_j) {
        best_j = candidate_j;
        best_index = static_cast<int>(i);
        best_summary = std::move(candidate_summary);
      }
    }

    // Strict improvement only; ties keep the incumbent.
    record.accepted = best_index >= 0 && best_j > incumbent_j;
    if (record.accepted) {
      record.accepted_prompt_id = candidates[static_cast<std::size_t>(best_index)].id;
      incumbent = std::move(candidates[static_cast<std::size_t>(best_index)]);
      incumbent_summary = std::move(best_summary);
      incumbent_j = best_j;
      consecutive_rejects = 0;
    } else {
      ++consecutive_rejects;
    }

    trajectory.push_back(record);
    if (persist) {
      trajectory_out << json(record).dump() << '\n';
      trajectory_out.flush();
    }
    if (options.on_iteration) options.on_iteration(record);
  }

  // Fresh-paraphrase check: the same final prompt under variants the search
  // never optimized against, to keep reported stability honest.
  EvalOptions fresh_options = eval_options;
  fresh_options.seed = derived_seed(config.seed, "fresh-variants");
  const EvalSummary fresh_summary =
      evaluate_prompt(backend, paraphraser, task, incumbent, dataset, fresh_options);

  RunResult result;
  result.final_prompt = incumbent;
  result.final_summary = incumbent_summary;
  result.final_j = incumbent_j;
  result.start_accuracy =
      trajectory.empty() ? incumbent_summary.accuracy : trajectory.front().incumbent_accuracy;
  result.start_flip_rate =
      trajectory.empty() ? incumbent_summary.mean_flip_rate : trajectory.front().incumbent_flip_rate;
  result.flip_end_fresh = fresh_summary.mean_flip_rate;
  result.accuracy_end_fresh = fresh_summary.accuracy;
  result.trajectory = std::move(trajectory);
  result.iterations_run = static_cast<int>(result.trajectory.size());
  for (const auto& record : result.trajectory) {
    if (record.accepted) ++result.accepted_count;
  }

  if (persist) {
    json header = run_header(config, task, initial, options.meta);
    header["final"] = json{{"prompt_id", result.final_prompt.id},
                           {"j", result.final_j},
                           {"accuracy", result.final_summary.accuracy},
                           {"flip_end_insample", result.final_summary.mean_flip_rate},
                           {"flip_end_fresh", result.flip_end_fresh},
                           {"accuracy_end_fresh", result.accuracy_end_fresh},
                           {"iterations_run", result.iterations_run},
                           {"accepted_count", result.accepted_count},
                           {"stop_reason", result.iterations_run >= config.max_iterations &&
                                                   consecutive_rejects < config.patience
                                               ? "max-iterations"
                                               : "patience"}};
    util::atomic_write_file(dir / "run.json", header.dump(2) + "\n");
  }
  return result;
}

}  // namespace promptstab::optimizer

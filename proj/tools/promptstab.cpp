// Command-line entry point. Subcommands mirror the workflow: paraphrase a
// prompt, evaluate it under variants, calibrate conformal sets, analyze the
// records, optimize the prompt, sweep seeds/settings, and merge a run
// directory into a report. All outputs are deterministic for a fixed seed:
// no timestamps, sorted JSON keys, shortest round-trip numbers.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptstab/analysis.hpp"
#include "promptstab/backend.hpp"
#include "promptstab/conformal.hpp"
#include "promptstab/domain.hpp"
#include "promptstab/metrics.hpp"
#include "promptstab/mock_backend.hpp"
#include "promptstab/optimizer.hpp"
#include "promptstab/paraphrase.hpp"
#include "promptstab/util.hpp"
#include "promptstab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace promptstab;

namespace {

struct BackendCli {
  std::string kind = "mock";
  std::string model = "mock-classifier";
  std::string endpoint;
  bool probs = true;
  double temperature = 0.0;
  int max_retries = 3;
  int timeout_ms = 30000;
  uint64_t seed = 1;
  std::string mock_config;
  std::string cache_dir;
  int concurrency = 1;
  std::string token_env = "PROMPTSTAB_API_TOKEN";
};

void add_backend_flags(CLI::App* cmd, BackendCli& b) {
  cmd->add_option("--backend", b.kind, "Backend kind")
      ->check(CLI::IsMember({"mock", "http"}))
      ->capture_default_str();
  cmd->add_option("--model", b.model, "Model name sent to the backend")->capture_default_str();
  cmd->add_option("--endpoint", b.endpoint, "Chat-completions endpoint URL (http backend)");
  cmd->add_flag("--probs,!--no-probs", b.probs,
                "Request per-label probabilities (logprobs on http)");
  cmd->add_option("--temperature", b.temperature, "Sampling temperature")->capture_default_str();
  cmd->add_option("--max-retries", b.max_retries, "Retries for transient http failures")
      ->capture_default_str();
  cmd->add_option("--timeout-ms", b.timeout_ms, "Per-request timeout in milliseconds")
      ->capture_default_str();
  cmd->add_option("--seed", b.seed, "Seed for variant generation, splits and the mock backend")
      ->capture_default_str();
  cmd->add_option("--mock-config", b.mock_config, "Scenario JSON for the mock backend")
      ->check(CLI::ExistingFile);
  cmd->add_option("--cache-dir", b.cache_dir, "Prediction cache directory (http backend)");
  cmd->add_option("--concurrency", b.concurrency, "Parallel backend requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--token-env", b.token_env, "Environment variable holding the API token")
      ->capture_default_str();
}

backend::BackendConfig make_backend_config(const BackendCli& b) {
  backend::BackendConfig config;
  config.kind = b.kind == "http" ? backend::BackendKind::Http : backend::BackendKind::Mock;
  if (!b.endpoint.empty()) config.endpoint_url = b.endpoint;
  config.model_name = b.model;
  config.wants_probs = b.probs;
  config.temperature = b.temperature;
  config.max_retries = b.max_retries;
  config.timeout = std::chrono::milliseconds(b.timeout_ms);
  config.seed = b.seed;
  if (!b.mock_config.empty()) {
    config.mock_params = json::parse(util::read_file(b.mock_config)).get<backend::MockParams>();
  }
  config.cache_dir = b.cache_dir;
  config.concurrency = b.concurrency;
  config.api_token_env = b.token_env;
  return config;
}

// Provenance block embedded in output files; local paths and performance
// knobs are deliberately excluded so outputs stay byte-stable across hosts.
json backend_meta(const backend::BackendConfig& config) {
  json j{{"kind", config.kind == backend::BackendKind::Http ? "http" : "mock"},
         {"model", config.model_name},
         {"wants_probs", config.wants_probs},
         {"temperature", config.temperature}};
  if (config.kind == backend::BackendKind::Mock) {
    j["seed"] = *config.seed;
    j["mock_params"] = config.mock_params.value_or(backend::MockParams{});
  } else {
    j["endpoint"] = *config.endpoint_url;
  }
  return j;
}

std::string file_digest(const std::string& path) {
  const uint64_t h = util::fnv1a64(util::read_file(path));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Dataset load_validated_dataset(const std::string& path, const Task& task) {
  Dataset dataset = load_dataset(path);
  const auto violations = validate_dataset(dataset, task);
  if (!violations.empty()) {
    for (const auto& v : violations) {
      std::cerr << "validation: " << v.example_id << ": " << v.rule << ": " << v.detail << "\n";
    }
    throw std::runtime_error("dataset '" + path + "' failed validation with " +
                             std::to_string(violations.size()) + " violation(s)");
  }
  return dataset;
}

std::unique_ptr<paraphrase::Paraphraser> make_paraphraser(const backend::BackendConfig& config,
                                                          backend::ModelBackend& backend_ref) {
  if (config.kind == backend::BackendKind::Http) {
    return std::make_unique<paraphrase::LlmParaphraser>(backend_ref);
  }
  return std::make_unique<paraphrase::RuleBasedParaphraser>();
}

std::unique_ptr<optimizer::CandidateGenerator> make_generator(
    const backend::BackendConfig& config, backend::ModelBackend& backend_ref) {
  if (config.kind == backend::BackendKind::Http) {
    return std::make_unique<optimizer::LlmCandidateGenerator>(backend_ref);
  }
  const backend::MockParams params = config.mock_params.value_or(backend::MockParams{});
  return std::make_unique<optimizer::RuleBasedCandidateGenerator>(params.good_tokens,
                                                                  params.stable_tokens);
}

void write_json_file(const fs::path& path, const json& j) {
  util::atomic_write_file(path, j.dump(2) + "\n");
  std::cout << "wrote " << path.string() << "\n";
}

void write_text_file(const fs::path& path, const std::string& content) {
  util::atomic_write_file(path, content);
  std::cout << "wrote " << path.string() << "\n";
}

// ---------------------------------------------------------------- paraphrase

struct ParaphraseArgs {
  BackendCli backend;
  std::string prompt_path;
  int k = 3;
  std::string out_path;
};

void run_paraphrase(const ParaphraseArgs& args) {
  const Prompt base = load_prompt_file(args.prompt_path);
  const auto config = make_backend_config(args.backend);
  auto model = backend::make_backend(config);
  auto paraphraser = make_paraphraser(config, *model);
  const PromptVariantSet set = paraphraser->generate(base, args.k, args.backend.seed);
  write_json_file(args.out_path, json(set));
  for (const auto& variant : set.variants) {
    std::cout << "  " << variant.id << ": " << variant.text << "\n";
  }
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  BackendCli backend;
  std::string task_path;
  std::string data_path;
  std::string prompt_path;
  int k = 3;
  int ece_bins = 10;
  std::string out_dir;
};

json eval_to_document(const EvalArgs& args, const Task& task, const EvalSummary& summary,
                      const backend::BackendConfig& config) {
  return json{{"version", kVersion},
              {"kind", "eval-summary"},
              {"task", task},
              {"dataset_digest", file_digest(args.data_path)},
              {"k", args.k},
              {"seed", args.backend.seed},
              {"ece_bins", args.ece_bins},
              {"backend", backend_meta(config)},
              {"summary", summary}};
}

void run_eval(const EvalArgs& args) {
  const Task task = load_task(args.task_path);
  validate_task(task);
  const Dataset dataset = load_validated_dataset(args.data_path, task);
  const Prompt prompt = load_prompt_file(args.prompt_path);
  validate_prompt(prompt, task);

  const auto config = make_backend_config(args.backend);
  auto model = backend::make_backend(config);
  auto paraphraser = make_paraphraser(config, *model);

  const optimizer::EvalOptions options{args.k, args.backend.seed, args.backend.concurrency,
                                       args.ece_bins};
  const EvalSummary summary =
      optimizer::evaluate_prompt(*model, *paraphraser, task, prompt, dataset, options);

  write_json_file(fs::path(args.out_dir) / "summary.json",
                  eval_to_document(args, task, summary, config));
  std::cout << "accuracy " << util::fmt_double(summary.accuracy) << ", flip rate "
            << util::fmt_double(summary.mean_flip_rate) << ", excluded " << summary.n_excluded
            << "\n";
}

// ----------------------------------------------------------------- conformal

struct ConformalArgs {
  std::string summary_path;
  std::string data_path;
  double alpha = 0.1;
  uint64_t seed = 1;
  std::string out_dir;
};

void run_conformal(const ConformalArgs& args) {
  const json doc = json::parse(util::read_file(args.summary_path));
  if (!doc.contains("task") || !doc.contains("summary")) {
    throw std::runtime_error("'" + args.summary_path + "' is not an eval summary file");
  }
  const Task task = doc["task"].get<Task>();
  const EvalSummary summary = doc["summary"].get<EvalSummary>();
  const Dataset dataset = load_validated_dataset(args.data_path, task);

  std::map<std::string, std::string> gold_by_id;
  for (const auto& example : dataset.examples) gold_by_id[example.id] = example.gold_label;

  std::vector<conformal::LabeledPrediction> labeled;
  labeled.reserve(summary.records.size());
  for (const auto& record : summary.records) {
    if (!record.base_prediction.probs) {
      throw std::runtime_error(
          "conformal calibration requires probability-backed predictions; this summary came "
          "from a label-only backend");
    }
    auto it = gold_by_id.find(record.example_id);
    if (it == gold_by_id.end()) {
      throw std::runtime_error("dataset does not contain example '" + record.example_id +
                               "' referenced by the summary");
    }
    labeled.push_back({record.example_id, record.base_prediction, it->second});
  }

  const auto split = conformal::split_calibration_indices(labeled.size(), args.seed);
  std::vector<conformal::LabeledPrediction> calibration;
  for (const auto idx : split.calibration) calibration.push_back(labeled[idx]);
  const conformal::ConformalModel model = conformal::fit(calibration, args.alpha);

  std::vector<EvalRecord> eval_records;
  eval_records.reserve(split.evaluation.size());
  double covered_sum = 0.0;
  double size_sum = 0.0;
  for (const auto idx : split.evaluation) {
    EvalRecord record = summary.records[idx];
    auto set = conformal::predict_set(model, task, record.base_prediction);
    const std::string gold = util::trim_copy(gold_by_id[record.example_id]);
    const bool covered =
        std::any_of(set.begin(), set.end(),
                    [&gold](const std::string& label) { return util::trim_copy(label) == gold; });
    covered_sum += covered ? 1.0 : 0.0;
    size_sum += static_cast<double>(set.size());
    record.conformal_set = std::move(set);
    record.covered = covered;
    eval_records.push_back(std::move(record));
  }

  conformal::ConformalReport report;
  report.alpha = args.alpha;
  report.threshold = model.threshold;
  report.n_calibration = model.n_calibration;
  report.coverage = eval_records.empty() ? 0.0 : covered_sum / eval_records.size();
  report.mean_set_size = eval_records.empty() ? 0.0 : size_sum / eval_records.size();
  report.confidence_curve = conformal::coverage_accuracy_curve(
      eval_records, conformal::SelectivePolicy::ConfidenceThreshold);
  report.set_size_curve = conformal::coverage_accuracy_curve(
      eval_records, conformal::SelectivePolicy::AbstainIfSetLargerThanOne);
  report.eval_records = std::move(eval_records);

  json out{{"version", kVersion},
           {"kind", "conformal-report"},
           {"task", task},
           {"dataset_digest", file_digest(args.data_path)},
           {"seed", args.seed},
           {"report", report}};
  write_json_file(fs::path(args.out_dir) / "conformal.json", out);
  std::cout << "coverage " << util::fmt_double(report.coverage) << " at alpha "
            << util::fmt_double(args.alpha) << ", mean set size "
            << util::fmt_double(report.mean_set_size) << "\n";
}

// ------------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::vector<std::string> summary_paths;
  std::string conformal_path;
  std::string out_dir;
};

void run_analyze(const AnalyzeArgs& args) {
  std::vector<EvalSummary> summaries;
  for (const auto& path : args.summary_paths) {
    const json doc = json::parse(util::read_file(path));
    if (!doc.contains("summary")) {
      throw std::runtime_error("'" + path + "' is not an eval summary file");
    }
    summaries.push_back(doc["summary"].get<EvalSummary>());
  }

  std::vector<EvalRecord> records = summaries.front().records;
  if (!args.conformal_path.empty()) {
    const json doc = json::parse(util::read_file(args.conformal_path));
    if (!doc.contains("report")) {
      throw std::runtime_error("'" + args.conformal_path + "' is not a conformal report file");
    }
    const conformal::ConformalReport report = doc["report"].get<conformal::ConformalReport>();
    std::map<std::string, const EvalRecord*> by_id;
    for (const auto& record : report.eval_records) by_id[record.example_id] = &record;
    for (auto& record : records) {
      if (auto it = by_id.find(record.example_id); it != by_id.end()) {
        record.conformal_set = it->second->conformal_set;
        record.covered = it->second->covered;
      }
    }
  }

  const analysis::StratifiedReport report = analysis::stratify(records);
  json out{{"version", kVersion},
           {"kind", "analysis"},
           {"prompt_id", summaries.front().prompt_id},
           {"report", report}};
  write_json_file(fs::path(args.out_dir) / "analysis.json", out);
  write_text_file(fs::path(args.out_dir) / "margin_by_flip.csv",
                  analysis::margin_flip_csv(report.margin_by_flip_rate));
  write_text_file(fs::path(args.out_dir) / "prompt_scatter.csv",
                  analysis::prompt_scatter_csv(analysis::prompt_scatter(summaries)));
}

// ------------------------------------------------------------------ optimize

struct OptimizeArgs {
  BackendCli backend;
  std::string task_path;
  std::string data_path;
  std::string prompt_path;
  optimizer::OptimizerConfig config;
  std::string out_dir;
  bool resume = false;
};

optimizer::RunResult run_optimize_once(const OptimizeArgs& args, bool quiet = false) {
  const Task task = load_task(args.task_path);
  validate_task(task);
  const Dataset dataset = load_validated_dataset(args.data_path, task);
  const Prompt initial = load_prompt_file(args.prompt_path);
  validate_prompt(initial, task);

  const auto config = make_backend_config(args.backend);
  auto model = backend::make_backend(config);
  auto paraphraser = make_paraphraser(config, *model);
  auto generator = make_generator(config, *model);

  optimizer::RunOptions options;
  options.out_dir = args.out_dir;
  options.resume = args.resume;
  options.meta = json{{"version", kVersion},
                      {"dataset_digest", file_digest(args.data_path)},
                      {"backend", backend_meta(config)}};
  if (!quiet) {
    options.on_iteration = [](const optimizer::IterationRecord& record) {
      std::cout << "iteration " << record.iteration << ": J "
                << util::fmt_double(record.incumbent_j) << ", accuracy "
                << util::fmt_double(record.incumbent_accuracy) << ", flip rate "
                << util::fmt_double(record.incumbent_flip_rate) << ", "
                << (record.accepted ? "accepted " + record.accepted_prompt_id : "no improvement")
                << "\n";
    };
  }
  return optimizer::run(args.config, *model, *paraphraser, *generator, task, initial, dataset,
                        options);
}

void run_optimize(const OptimizeArgs& args) {
  const optimizer::RunResult result = run_optimize_once(args);
  std::cout << "final prompt " << result.final_prompt.id << ": J "
            << util::fmt_double(result.final_j) << ", accuracy "
            << util::fmt_double(result.final_summary.accuracy) << ", flip rate "
            << util::fmt_double(result.final_summary.mean_flip_rate) << " (fresh "
            << util::fmt_double(result.flip_end_fresh) << ")\n";
}

// --------------------------------------------------------------------- sweep

struct SweepArgs {
  BackendCli backend;
  std::string task_path;
  std::string data_path;
  std::string prompt_path;
  std::vector<uint64_t> seeds{1, 2, 3};
  std::vector<std::string> settings{"acc", "joint"};
  double lambda_perf = 0.5;  // joint setting
  double lambda_stab = 0.5;
  optimizer::OptimizerConfig base_config;
  std::string out_dir;
};

std::string fmt_mean_std(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean);
  var /= n;  // population variance: the seeds are the whole population here
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f ± %.3f", mean, std::sqrt(var));
  return buf;
}

void run_sweep(const SweepArgs& args) {
  std::string rows = "task,model,setting,seed,acc_start,acc_end,flip_start,flip_end,"
                     "flip_end_fresh,status\n";
  const Task task = load_task(args.task_path);  // id for the csv; full load in each run

  struct Cell {
    std::vector<double> acc_end;
    std::vector<double> flip_end;
    std::vector<double> flip_end_fresh;
  };
  std::map<std::string, Cell> cells;
  std::size_t failed = 0;
  std::size_t total = 0;

  for (const auto& setting : args.settings) {
    for (const auto seed : args.seeds) {
      ++total;
      OptimizeArgs one;
      one.backend = args.backend;
      one.backend.seed = seed;
      one.task_path = args.task_path;
      one.data_path = args.data_path;
      one.prompt_path = args.prompt_path;
      one.config = args.base_config;
      one.config.seed = seed;
      one.config.objective = setting == "acc" ? ObjectiveConfig{1.0, 0.0}
                                              : ObjectiveConfig{args.lambda_perf, args.lambda_stab};
      one.out_dir =
          (fs::path(args.out_dir) / (setting + "-seed" + std::to_string(seed))).string();

      const std::string prefix = util::csv_escape(task.id) + ',' +
                                 util::csv_escape(args.backend.model) + ',' + setting + ',' +
                                 std::to_string(seed);
      try {
        const optimizer::RunResult result = run_optimize_once(one, /*quiet=*/true);
        rows += prefix + ',' + util::fmt_double(result.start_accuracy) + ',' +
                util::fmt_double(result.final_summary.accuracy) + ',' +
                util::fmt_double(result.start_flip_rate) + ',' +
                util::fmt_double(result.final_summary.mean_flip_rate) + ',' +
                util::fmt_double(result.flip_end_fresh) + ",ok\n";
        auto& cell = cells[setting];
        cell.acc_end.push_back(result.final_summary.accuracy);
        cell.flip_end.push_back(result.final_summary.mean_flip_rate);
        cell.flip_end_fresh.push_back(result.flip_end_fresh);
        std::cout << setting << " seed " << seed << ": accuracy "
                  << util::fmt_double(result.final_summary.accuracy) << ", flip rate "
                  << util::fmt_double(result.final_summary.mean_flip_rate) << "\n";
      } catch (const std::exception& e) {
        ++failed;
        rows += prefix + ",,,,," + util::csv_escape(std::string("error: ") + e.what()) + "\n";
        std::cerr << setting << " seed " << seed << " failed: " << e.what() << "\n";
      }
    }
  }

  write_text_file(fs::path(args.out_dir) / "sweep.csv", rows);

  std::string aggregate = "setting,n_seeds,acc_end,flip_end,flip_end_fresh\n";
  for (const auto& [setting, cell] : cells) {
    aggregate += setting + ',' + std::to_string(cell.acc_end.size()) + ',' +
                 util::csv_escape(fmt_mean_std(cell.acc_end)) + ',' +
                 util::csv_escape(fmt_mean_std(cell.flip_end)) + ',' +
                 util::csv_escape(fmt_mean_std(cell.flip_end_fresh)) + '\n';
  }
  write_text_file(fs::path(args.out_dir) / "sweep_aggregate.csv", aggregate);

  if (failed == total) {
    throw backend::BackendError("backend-unavailable: every sweep run failed");
  }
}

// -------------------------------------------------------------------- report

struct ReportArgs {
  std::string run_dir;
  std::string out_dir;
};

void run_report(const ReportArgs& args) {
  const fs::path run_dir(args.run_dir);
  if (!fs::exists(run_dir / "run.json")) {
    throw std::runtime_error("'" + args.run_dir + "' is not a run directory (no run.json)");
  }
  const json header = json::parse(util::read_file(run_dir / "run.json"));

  std::vector<optimizer::IterationRecord> trajectory;
  if (fs::exists(run_dir / "trajectory.jsonl")) {
    const std::string content = util::read_file(run_dir / "trajectory.jsonl");
    std::size_t start = 0;
    while (start < content.size()) {
      const std::size_t end = content.find('\n', start);
      const std::string line =
          content.substr(start, end == std::string::npos ? std::string::npos : end - start);
      start = end == std::string::npos ? content.size() : end + 1;
      if (util::trim(line).empty()) continue;
      trajectory.push_back(json::parse(line).get<optimizer::IterationRecord>());
    }
  }

  json report{{"version", kVersion},
              {"kind", "run-report"},
              {"run", header},
              {"trajectory", trajectory}};
  for (const char* extra : {"analysis.json", "conformal.json"}) {
    if (fs::exists(run_dir / extra)) {
      report[fs::path(extra).stem().string()] = json::parse(util::read_file(run_dir / extra));
    }
  }
  write_json_file(fs::path(args.out_dir) / "report.json", report);

  std::string incumbents = "iteration,prompt_id,j,accuracy,flip_rate\n";
  for (const auto& record : trajectory) {
    incumbents += std::to_string(record.iteration) + ',' +
                  util::csv_escape(record.incumbent_prompt_id) + ',' +
                  util::fmt_double(record.incumbent_j) + ',' +
                  util::fmt_double(record.incumbent_accuracy) + ',' +
                  util::fmt_double(record.incumbent_flip_rate) + '\n';
  }
  if (header.contains("final")) {
    const json& final_block = header["final"];
    incumbents += std::to_string(trajectory.empty() ? 1 : trajectory.back().iteration + 1) + ',' +
                  util::csv_escape(final_block["prompt_id"].get<std::string>()) + ',' +
                  util::fmt_double(final_block["j"].get<double>()) + ',' +
                  util::fmt_double(final_block["accuracy"].get<double>()) + ',' +
                  util::fmt_double(final_block["flip_end_insample"].get<double>()) + '\n';
  }
  write_text_file(fs::path(args.out_dir) / "incumbents.csv", incumbents);

  std::string candidates = "iteration,prompt_id,j,accuracy,flip_rate,accepted\n";
  for (const auto& record : trajectory) {
    for (const auto& candidate : record.candidates) {
      const bool accepted = record.accepted && candidate.prompt_id == record.accepted_prompt_id;
      candidates += std::to_string(record.iteration) + ',' +
                    util::csv_escape(candidate.prompt_id) + ',' + util::fmt_double(candidate.j) +
                    ',' + util::fmt_double(candidate.accuracy) + ',' +
                    util::fmt_double(candidate.flip_rate) + ',' + (accepted ? "1" : "0") + '\n';
    }
  }
  write_text_file(fs::path(args.out_dir) / "candidates.csv", candidates);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt stability toolkit: paraphrase-aware evaluation, conformal prediction "
               "and dual-objective prompt optimization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.set_config("--config", "", "Read defaults from an INI/TOML file (flags take precedence)");

  ParaphraseArgs paraphrase_args;
  auto* paraphrase_cmd =
      app.add_subcommand("paraphrase", "Generate paraphrase variants of a prompt");
  paraphrase_cmd->add_option("--prompt", paraphrase_args.prompt_path, "Prompt file (.json or raw text)")
      ->required()
      ->check(CLI::ExistingFile);
  paraphrase_cmd->add_option("--k", paraphrase_args.k, "Number of variants")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  paraphrase_cmd->add_option("--out", paraphrase_args.out_path, "Output variant-set JSON file")
      ->required();
  add_backend_flags(paraphrase_cmd, paraphrase_args.backend);
  paraphrase_cmd->callback([&] { run_paraphrase(paraphrase_args); });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a prompt under paraphrase variants");
  eval_cmd->add_option("--task", eval_args.task_path, "Task JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data_path, "Dataset JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--prompt", eval_args.prompt_path, "Prompt file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--k", eval_args.k, "Paraphrase variants per prompt")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--ece-bins", eval_args.ece_bins, "Reliability bins for ECE/MCE")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out_dir, "Output directory")->required();
  add_backend_flags(eval_cmd, eval_args.backend);
  eval_cmd->callback([&] { run_eval(eval_args); });

  ConformalArgs conformal_args;
  auto* conformal_cmd =
      app.add_subcommand("conformal", "Calibrate split-conformal prediction sets");
  conformal_cmd->add_option("--summary", conformal_args.summary_path, "summary.json from eval")
      ->required()
      ->check(CLI::ExistingFile);
  conformal_cmd->add_option("--data", conformal_args.data_path, "Dataset JSONL with gold labels")
      ->required()
      ->check(CLI::ExistingFile);
  conformal_cmd->add_option("--alpha", conformal_args.alpha, "Miscoverage level")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  conformal_cmd->add_option("--seed", conformal_args.seed, "Calibration split seed")
      ->capture_default_str();
  conformal_cmd->add_option("--out", conformal_args.out_dir, "Output directory")->required();
  conformal_cmd->callback([&] { run_conformal(conformal_args); });

  AnalyzeArgs analyze_args;
  auto* analyze_cmd = app.add_subcommand("analyze", "Stratified stability analysis");
  analyze_cmd
      ->add_option("--summary", analyze_args.summary_paths,
                   "summary.json files (first drives the stratified report)")
      ->required()
      ->check(CLI::ExistingFile);
  analyze_cmd
      ->add_option("--conformal", analyze_args.conformal_path,
                   "conformal.json whose prediction sets join the analysis")
      ->check(CLI::ExistingFile);
  analyze_cmd->add_option("--out", analyze_args.out_dir, "Output directory")->required();
  analyze_cmd->callback([&] { run_analyze(analyze_args); });

  OptimizeArgs optimize_args;
  auto* optimize_cmd = app.add_subcommand("optimize", "Dual-objective prompt search");
  optimize_cmd->add_option("--task", optimize_args.task_path, "Task JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  optimize_cmd->add_option("--data", optimize_args.data_path, "Dataset JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  optimize_cmd->add_option("--prompt", optimize_args.prompt_path, "Initial prompt file")
      ->required()
      ->check(CLI::ExistingFile);
  optimize_cmd
      ->add_option("--lambda-perf", optimize_args.config.objective.lambda_perf,
                   "Weight on accuracy")
      ->capture_default_str();
  optimize_cmd
      ->add_option("--lambda-stab", optimize_args.config.objective.lambda_stab,
                   "Weight on stability (1 - flip rate)")
      ->capture_default_str();
  optimize_cmd->add_option("--k", optimize_args.config.k_variants, "Paraphrase variants per prompt")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  optimize_cmd
      ->add_option("--candidates", optimize_args.config.n_candidates, "Candidates per iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  optimize_cmd->add_option("--iters", optimize_args.config.max_iterations, "Maximum iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  optimize_cmd
      ->add_option("--patience", optimize_args.config.patience,
                   "Stop after this many non-improving iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  optimize_cmd
      ->add_option("--failure-examples", optimize_args.config.n_failure_examples,
                   "Failure examples fed to the candidate generator")
      ->capture_default_str();
  optimize_cmd->add_option("--ece-bins", optimize_args.config.ece_bins, "Reliability bins")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  optimize_cmd->add_option("--out", optimize_args.out_dir, "Run directory")->required();
  optimize_cmd->add_flag("--resume", optimize_args.resume,
                         "Continue an interrupted run from its trajectory");
  add_backend_flags(optimize_cmd, optimize_args.backend);
  optimize_cmd->callback([&] {
    optimize_args.config.seed = optimize_args.backend.seed;
    optimize_args.config.concurrency = optimize_args.backend.concurrency;
    run_optimize(optimize_args);
  });

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Optimizer runs across seeds and settings");
  sweep_cmd->add_option("--task", sweep_args.task_path, "Task JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--data", sweep_args.data_path, "Dataset JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--prompt", sweep_args.prompt_path, "Initial prompt file")
      ->required()
      ->check(CLI::ExistingFile);
  sweep_cmd->add_option("--seeds", sweep_args.seeds, "Seeds to run")->delimiter(',');
  sweep_cmd->add_option("--settings", sweep_args.settings, "Objective settings (acc, joint)")
      ->delimiter(',')
      ->check(CLI::IsMember({"acc", "joint"}));
  sweep_cmd->add_option("--lambda-perf", sweep_args.lambda_perf, "Joint-setting accuracy weight")
      ->capture_default_str();
  sweep_cmd->add_option("--lambda-stab", sweep_args.lambda_stab, "Joint-setting stability weight")
      ->capture_default_str();
  sweep_cmd->add_option("--k", sweep_args.base_config.k_variants, "Paraphrase variants per prompt")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--candidates", sweep_args.base_config.n_candidates,
                        "Candidates per iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--iters", sweep_args.base_config.max_iterations, "Maximum iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--patience", sweep_args.base_config.patience, "Patience")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep_args.out_dir, "Sweep output directory")->required();
  add_backend_flags(sweep_cmd, sweep_args.backend);
  sweep_cmd->callback([&] { run_sweep(sweep_args); });

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Merge a run directory into a report");
  report_cmd->add_option("--run", report_args.run_dir, "Run directory from optimize")
      ->required()
      ->check(CLI::ExistingDirectory);
  report_cmd->add_option("--out", report_args.out_dir, "Output directory")->required();
  report_cmd->callback([&] { run_report(report_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const backend::BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

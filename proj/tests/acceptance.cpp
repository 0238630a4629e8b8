// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the exit code is the number of failures. Thresholds and runtime budgets
// are pinned here as constants next to the check that uses them.

#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"
#include "promptstab/analysis.hpp"
#include "promptstab/backend.hpp"
#include "promptstab/conformal.hpp"
#include "promptstab/domain.hpp"
#include "promptstab/metrics.hpp"
#include "promptstab/mock_backend.hpp"
#include "promptstab/optimizer.hpp"
#include "promptstab/paraphrase.hpp"
#include "promptstab/util.hpp"

using namespace promptstab;
using nlohmann::json;
using testutil::TempDir;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Dataset synth_dataset(const Task& task, int n, const std::string& id_prefix) {
  Dataset dataset;
  for (int i = 0; i < n; ++i) {
    char id[64];
    std::snprintf(id, sizeof(id), "%s-%03d", id_prefix.c_str(), i);
    dataset.examples.push_back(testutil::make_example(
        id, "input record " + std::to_string(i) + " with payload " + std::to_string(i * 37 % 101),
        task.label_set[static_cast<size_t>(i) % task.label_set.size()]));
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// 1. flip statistics match brute-force disagreement counting on every small
//    dataset shape (exhaustive where the assignment space is small, seeded
//    sampling above that), in under 10 seconds.

Outcome criterion_flip_oracle() {
  const auto start = std::chrono::steady_clock::now();
  constexpr long kExhaustiveCap = 20000;
  constexpr int kSampledAssignments = 400;
  constexpr double kBudgetSeconds = 10.0;

  long checked = 0;
  std::mt19937_64 rng(2024);
  for (int n = 1; n <= 6; ++n) {
    for (int k = 1; k <= 3; ++k) {
      for (int n_labels = 2; n_labels <= 3; ++n_labels) {
        std::vector<std::string> labels;
        for (int l = 0; l < n_labels; ++l) labels.push_back("l" + std::to_string(l));

        const int slots = (1 + k) * n;
        long total = 1;
        bool exhaustive = true;
        for (int s = 0; s < slots; ++s) {
          total *= n_labels;
          if (total > kExhaustiveCap) {
            exhaustive = false;
            break;
          }
        }

        auto run_assignment = [&](const std::vector<int>& digits) -> Outcome {
          std::vector<std::string> base(static_cast<size_t>(n));
          std::vector<std::vector<std::string>> variants(
              static_cast<size_t>(k), std::vector<std::string>(static_cast<size_t>(n)));
          for (int i = 0; i < n; ++i) base[static_cast<size_t>(i)] = labels[static_cast<size_t>(digits[static_cast<size_t>(i)])];
          for (int v = 0; v < k; ++v)
            for (int i = 0; i < n; ++i)
              variants[static_cast<size_t>(v)][static_cast<size_t>(i)] =
                  labels[static_cast<size_t>(digits[static_cast<size_t>(n + v * n + i)])];

          const auto got = metrics::flip_stats(base, variants);
          for (int i = 0; i < n; ++i) {
            int disagreements = 0;
            for (int v = 0; v < k; ++v)
              if (variants[static_cast<size_t>(v)][static_cast<size_t>(i)] != base[static_cast<size_t>(i)]) ++disagreements;
            const double want_rate = static_cast<double>(disagreements) / static_cast<double>(k);
            const auto& stat = got[static_cast<size_t>(i)];
            if (stat.flip != (disagreements > 0) || stat.flip_rate != want_rate) {
              return {false, "mismatch at n=" + std::to_string(n) + " k=" + std::to_string(k) +
                                 " labels=" + std::to_string(n_labels)};
            }
          }
          ++checked;
          return {true, ""};
        };

        std::vector<int> digits(static_cast<size_t>(slots), 0);
        if (exhaustive) {
          while (true) {
            if (Outcome o = run_assignment(digits); !o.ok) return o;
            int pos = 0;
            while (pos < slots && ++digits[static_cast<size_t>(pos)] == n_labels) {
              digits[static_cast<size_t>(pos)] = 0;
              ++pos;
            }
            if (pos == slots) break;
          }
        } else {
          for (int rep = 0; rep < kSampledAssignments; ++rep) {
            for (auto& d : digits) d = static_cast<int>(rng() % static_cast<uint64_t>(n_labels));
            if (Outcome o = run_assignment(digits); !o.ok) return o;
          }
        }
      }
    }
  }

  const double secs = elapsed_seconds(start);
  if (secs >= kBudgetSeconds)
    return {false, "took " + std::to_string(secs) + "s, budget " + std::to_string(kBudgetSeconds)};
  return {true, std::to_string(checked) + " datasets checked"};
}

// ---------------------------------------------------------------------------
// 2. split conformal coverage on a calibrated binary generator stays inside
//    [0.88, 0.94] for at least 18 of 20 seeds at alpha = 0.1, n = 2000.

Outcome criterion_conformal_coverage() {
  const auto start = std::chrono::steady_clock::now();
  constexpr double kAlpha = 0.1;
  constexpr double kLow = 0.88, kHigh = 0.94;
  constexpr int kSeeds = 20, kMinPassing = 18;
  constexpr int kN = 2000;
  constexpr double kBudgetSeconds = 30.0;

  const Task task = testutil::binary_task();
  int passing = 0;
  std::string coverages;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    std::mt19937_64 rng(0x9E3779B97F4A7C15ULL * static_cast<uint64_t>(seed));
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::vector<conformal::LabeledPrediction> records;
    records.reserve(kN);
    for (int i = 0; i < kN; ++i) {
      const double p = unif(rng);
      const std::string gold = coin(rng) < p ? "yes" : "no";
      records.push_back({"ex-" + std::to_string(i),
                         Prediction::from_probs(task, {{"yes", p}, {"no", 1.0 - p}}, ""), gold});
    }
    const auto [cal, eval] = conformal::split_calibration(records, static_cast<uint64_t>(seed));
    const auto model = conformal::fit(cal, kAlpha);
    const double coverage = conformal::coverage_stats(model, task, eval).empirical_coverage;
    if (coverage >= kLow && coverage <= kHigh) ++passing;
    coverages += (coverages.empty() ? "" : " ") + util::fmt_double(coverage);
  }

  const double secs = elapsed_seconds(start);
  if (secs >= kBudgetSeconds)
    return {false, "took " + std::to_string(secs) + "s, budget " + std::to_string(kBudgetSeconds)};
  if (passing < kMinPassing)
    return {false, std::to_string(passing) + "/20 seeds in range; coverages: " + coverages};
  return {true, std::to_string(passing) + "/20 seeds in [0.88, 0.94]"};
}

// ---------------------------------------------------------------------------
// 3. prediction sets are nested across alpha (0.05 contains 0.1 contains 0.2)
//    and empirical coverage is non-increasing in alpha, on 100 random
//    instances.

Outcome criterion_conformal_nestedness() {
  constexpr int kInstances = 100;
  const std::vector<double> alphas = {0.05, 0.1, 0.2};

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.01, 0.99);
  for (int instance = 0; instance < kInstances; ++instance) {
    Task task;
    task.id = "inst-" + std::to_string(instance);
    const int n_labels = 2 + instance % 3;
    for (int l = 0; l < n_labels; ++l) task.label_set.push_back("l" + std::to_string(l));
    task.input_fields = {"text"};

    auto sample = [&](int i) {
      const std::string gold = task.label_set[rng() % task.label_set.size()];
      const double gold_p = unif(rng);
      std::map<std::string, double> probs;
      for (const auto& label : task.label_set)
        probs[label] = label == gold ? gold_p : (1.0 - gold_p) / (n_labels - 1);
      return conformal::LabeledPrediction{"ex-" + std::to_string(i),
                                          Prediction::from_probs(task, std::move(probs), ""), gold};
    };

    const size_t n_cal = 5 + rng() % 46;
    std::vector<conformal::LabeledPrediction> cal;
    for (size_t i = 0; i < n_cal; ++i) cal.push_back(sample(static_cast<int>(i)));
    std::vector<conformal::LabeledPrediction> eval;
    for (int i = 0; i < 20; ++i) eval.push_back(sample(1000 + i));

    std::vector<conformal::ConformalModel> models;
    for (double alpha : alphas) models.push_back(conformal::fit(cal, alpha));

    std::vector<double> coverage(alphas.size(), 0.0);
    for (const auto& point : eval) {
      std::vector<std::set<std::string>> sets;
      for (size_t a = 0; a < alphas.size(); ++a) {
        const auto labels = conformal::predict_set(models[a], task, point.prediction);
        sets.emplace_back(labels.begin(), labels.end());
        if (sets.back().count(point.gold_label) > 0) coverage[a] += 1.0;
      }
      for (size_t a = 0; a + 1 < alphas.size(); ++a) {
        if (!std::includes(sets[a].begin(), sets[a].end(), sets[a + 1].begin(), sets[a + 1].end()))
          return {false, "set at alpha=" + util::fmt_double(alphas[a]) +
                             " does not contain set at alpha=" + util::fmt_double(alphas[a + 1]) +
                             " (instance " + std::to_string(instance) + ")"};
      }
    }
    for (size_t a = 0; a + 1 < alphas.size(); ++a) {
      if (coverage[a] < coverage[a + 1])
        return {false, "coverage increased from alpha=" + util::fmt_double(alphas[a]) + " to " +
                           util::fmt_double(alphas[a + 1]) + " (instance " +
                           std::to_string(instance) + ")"};
    }
  }
  return {true, "100 instances, 3 alpha levels"};
}

// ---------------------------------------------------------------------------
// 4. ECE is near zero for a calibrated simulated predictor and near 0.2 for a
//    predictor whose confidence overshoots its accuracy by 0.2.

Outcome criterion_calibration_sanity() {
  constexpr int kN = 10000;
  constexpr int kBins = 10;
  constexpr double kCalibratedMax = 0.02;
  constexpr double kOverLow = 0.17, kOverHigh = 0.23;

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<double> conf_cal, conf_over;
  std::vector<bool> hit_cal, hit_over;
  std::uniform_real_distribution<double> conf_range_cal(0.5, 1.0);
  std::uniform_real_distribution<double> conf_range_over(0.7, 0.95);
  for (int i = 0; i < kN; ++i) {
    const double c1 = conf_range_cal(rng);
    conf_cal.push_back(c1);
    hit_cal.push_back(coin(rng) < c1);
    const double c2 = conf_range_over(rng);
    conf_over.push_back(c2);
    hit_over.push_back(coin(rng) < c2 - 0.2);
  }

  const double ece_cal = metrics::ece_mce(conf_cal, hit_cal, kBins).ece;
  const double ece_over = metrics::ece_mce(conf_over, hit_over, kBins).ece;
  if (ece_cal >= kCalibratedMax)
    return {false, "calibrated predictor ECE " + util::fmt_double(ece_cal)};
  if (ece_over < kOverLow || ece_over > kOverHigh)
    return {false, "overconfident predictor ECE " + util::fmt_double(ece_over)};
  return {true, "calibrated ECE " + util::fmt_double(ece_cal) + ", overconfident ECE " +
                    util::fmt_double(ece_over)};
}

// ---------------------------------------------------------------------------
// 5. with lambda_stab = 0 the objective ranks candidates exactly as accuracy
//    does, and writing stability as (1 - flip) or (-flip) yields the same
//    ranking. Values live on a dyadic grid so float comparisons are exact.

Outcome criterion_objective_equivalence() {
  constexpr int kPools = 50;
  std::mt19937_64 rng(17);

  auto ranking = [](const std::vector<double>& values) {
    std::vector<size_t> order(values.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return values[a] > values[b]; });
    return order;
  };

  for (int pool = 0; pool < kPools; ++pool) {
    const size_t m = 3 + rng() % 6;
    std::vector<double> acc(m), flip(m);
    for (size_t i = 0; i < m; ++i) {
      acc[i] = static_cast<double>(rng() % 65) / 64.0;
      flip[i] = static_cast<double>(rng() % 65) / 64.0;
    }

    auto j_values = [&](const ObjectiveConfig& cfg) {
      std::vector<double> js(m);
      for (size_t i = 0; i < m; ++i) {
        EvalSummary summary;
        summary.accuracy = acc[i];
        summary.mean_flip_rate = flip[i];
        js[i] = optimizer::objective(summary, cfg);
      }
      return js;
    };

    // Accuracy-only mode: selection and full ranking must match raw accuracy.
    const auto js_acc_only = j_values(ObjectiveConfig{1.0, 0.0});
    if (ranking(js_acc_only) != ranking(acc))
      return {false, "accuracy-only ranking diverged in pool " + std::to_string(pool)};
    const auto argmax = [&](const std::vector<double>& v) {
      return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    };
    if (argmax(js_acc_only) != argmax(acc))
      return {false, "accuracy-only selection diverged in pool " + std::to_string(pool)};

    // Stability written as (1 - flip) vs (-flip): same order, offset by a
    // constant lambda_stab.
    const auto js_joint = j_values(ObjectiveConfig{0.5, 0.5});
    std::vector<double> js_negflip(m);
    for (size_t i = 0; i < m; ++i) js_negflip[i] = 0.5 * acc[i] - 0.5 * flip[i];
    if (ranking(js_joint) != ranking(js_negflip))
      return {false, "stability forms ranked differently in pool " + std::to_string(pool)};
  }
  return {true, "50 candidate pools"};
}

// ---------------------------------------------------------------------------
// 6. on the planted scenario, optimizing the joint objective ends with a
//    lower fresh-paraphrase flip rate than optimizing accuracy alone, for at
//    least 2 of 3 seeds and by at least 0.05 on average, within 5 minutes.

Outcome criterion_joint_vs_accuracy() {
  const auto start = std::chrono::steady_clock::now();
  constexpr double kMinMeanGap = 0.05;
  constexpr int kMinSeedWins = 2;
  constexpr double kBudgetSeconds = 300.0;

  const backend::MockParams params;  // a=4, b=2, c=0.8, disjoint token lists
  Task task;
  task.id = "planted";
  task.label_set = {"low", "medium", "high"};
  task.input_fields = {"text"};
  const Dataset dataset = synth_dataset(task, 50, "ex");
  const Prompt initial{"seed-prompt",
                       "Decide which label fits this input: {text} Reply with one label.",
                       Provenance::manual()};

  auto run_setting = [&](uint64_t seed, const ObjectiveConfig& objective) {
    backend::MockBackend mock(params, seed, true);
    paraphrase::RuleBasedParaphraser paraphraser;
    optimizer::RuleBasedCandidateGenerator generator(params.good_tokens, params.stable_tokens);
    optimizer::OptimizerConfig config;
    config.objective = objective;
    config.k_variants = 3;
    config.n_candidates = 4;
    config.max_iterations = 10;
    config.patience = 10;
    config.seed = seed;
    return optimizer::run(config, mock, paraphraser, generator, task, initial, dataset);
  };

  int joint_wins = 0;
  double acc_sum = 0.0, joint_sum = 0.0;
  std::string per_seed;
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    const auto acc_only = run_setting(seed, ObjectiveConfig{1.0, 0.0});
    const auto joint = run_setting(seed, ObjectiveConfig{0.5, 0.5});
    if (joint.flip_end_fresh < acc_only.flip_end_fresh) ++joint_wins;
    acc_sum += acc_only.flip_end_fresh;
    joint_sum += joint.flip_end_fresh;
    per_seed += " seed" + std::to_string(seed) + ": " + util::fmt_double(acc_only.flip_end_fresh) +
                " vs " + util::fmt_double(joint.flip_end_fresh);
  }
  const double gap = (acc_sum - joint_sum) / 3.0;

  const double secs = elapsed_seconds(start);
  if (secs >= kBudgetSeconds)
    return {false, "took " + std::to_string(secs) + "s, budget " + std::to_string(kBudgetSeconds)};
  if (joint_wins < kMinSeedWins)
    return {false, "joint lower in only " + std::to_string(joint_wins) + "/3 seeds;" + per_seed};
  if (gap < kMinMeanGap)
    return {false, "mean flip-rate gap " + util::fmt_double(gap) + " below 0.05;" + per_seed};
  return {true, "joint lower in " + std::to_string(joint_wins) + "/3 seeds, mean gap " +
                    util::fmt_double(gap)};
}

// ---------------------------------------------------------------------------
// 7. per-example margins shrink as flip rates grow: median margin is
//    non-increasing across flip-rate groups and Spearman(margin, flip rate)
//    is negative on a 500-example planted run.

Outcome criterion_margin_direction() {
  const backend::MockParams params;
  const Task task = testutil::binary_task();
  const Dataset dataset = synth_dataset(task, 500, "case");
  backend::MockBackend mock(params, 21, true);
  paraphrase::RuleBasedParaphraser paraphraser;

  optimizer::EvalOptions options;
  options.k = 3;
  options.seed = 21;
  const Prompt prompt{"margin-probe", "Judge this note and answer yes or no: {text}",
                      Provenance::manual()};
  const EvalSummary summary =
      optimizer::evaluate_prompt(mock, paraphraser, task, prompt, dataset, options);

  const auto table = analysis::margin_flip_table(summary.records);
  if (table.size() < 2) return {false, "only " + std::to_string(table.size()) + " flip-rate groups"};
  for (size_t i = 0; i + 1 < table.size(); ++i) {
    if (table[i + 1].median > table[i].median)
      return {false, "median margin rose from flip rate " + util::fmt_double(table[i].flip_rate) +
                         " to " + util::fmt_double(table[i + 1].flip_rate)};
  }

  std::vector<double> margins, rates;
  for (const auto& record : summary.records) {
    margins.push_back(record.margin.value());
    rates.push_back(record.flip_rate);
  }
  const auto corr = metrics::spearman(margins, rates);
  if (corr.degenerate || !(corr.rho < 0.0))
    return {false, "Spearman(margin, flip rate) = " + util::fmt_double(corr.rho)};
  return {true, std::to_string(table.size()) + " groups, rho = " + util::fmt_double(corr.rho)};
}

// ---------------------------------------------------------------------------
// 8. the stratified report recovers a planted flip-rate/set-size association:
//    set size = 1 + round(2 * flip rate) plus noise gives rho > 0.5 at n=200.

Outcome criterion_stratified_correlation() {
  constexpr int kN = 200;
  constexpr double kMinRho = 0.5;
  const std::vector<std::string> labels = {"a", "b", "c"};

  std::mt19937_64 rng(31);
  std::vector<EvalRecord> records;
  for (int i = 0; i < kN; ++i) {
    EvalRecord record;
    record.example_id = "ex-" + std::to_string(i);
    record.flip_rate = static_cast<double>(rng() % 4) / 3.0;
    record.flip = record.flip_rate > 0.0;
    int size = 1 + static_cast<int>(std::lround(2.0 * record.flip_rate));
    const uint64_t noise = rng() % 5;
    if (noise == 0) --size;
    if (noise == 1) ++size;
    size = std::clamp(size, 1, 3);
    record.conformal_set =
        std::vector<std::string>(labels.begin(), labels.begin() + size);
    record.covered = true;
    records.push_back(std::move(record));
  }

  const auto report = analysis::stratify(records);
  if (!report.spearman_flip_setsize)
    return {false, "flip/set-size correlation missing from report"};
  const double rho = report.spearman_flip_setsize->rho;
  if (!(rho > kMinRho)) return {false, "rho = " + util::fmt_double(rho)};
  return {true, "rho = " + util::fmt_double(rho)};
}

// ---------------------------------------------------------------------------
// 9. the anchor-based flip rate tracks the symmetric pairwise sensitivity
//    score: Spearman > 0.8 per-example over a 5-prompt mock run.

Outcome criterion_pss_correlation() {
  constexpr double kMinRho = 0.8;
  const backend::MockParams params;
  Task task;
  task.id = "pss";
  task.label_set = {"alpha", "beta", "gamma"};
  task.input_fields = {"text"};
  const Dataset dataset = synth_dataset(task, 300, "pss");

  backend::MockBackend mock(params, 41, true);
  paraphrase::RuleBasedParaphraser paraphraser;
  const Prompt base{"pss-base", "Assign the single best label to this input: {text}",
                    Provenance::manual()};
  const PromptVariantSet variants = paraphraser.generate(base, 4, 41);

  const size_t n = dataset.examples.size();
  std::vector<std::vector<std::string>> labels_per_prompt;
  auto predict_all = [&](const Prompt& prompt) {
    std::vector<std::string> labels(n);
    for (size_t i = 0; i < n; ++i)
      labels[i] = mock.predict(task, prompt, dataset.examples[i]).label;
    return labels;
  };
  labels_per_prompt.push_back(predict_all(base));  // base first so variants anchor to it
  for (const auto& variant : variants.variants) labels_per_prompt.push_back(predict_all(variant));

  const std::vector<std::vector<std::string>> variant_rows(labels_per_prompt.begin() + 1,
                                                           labels_per_prompt.end());
  const auto flips = metrics::flip_stats(labels_per_prompt.front(), variant_rows);
  const auto pss = metrics::pss(labels_per_prompt);

  std::vector<double> flip_rates(n);
  for (size_t i = 0; i < n; ++i) flip_rates[i] = flips[i].flip_rate;
  const auto corr = metrics::spearman(flip_rates, pss);
  if (corr.degenerate || !(corr.rho > kMinRho))
    return {false, "Spearman(flip rate, PSS) = " + util::fmt_double(corr.rho)};
  return {true, "rho = " + util::fmt_double(corr.rho)};
}

// ---------------------------------------------------------------------------
// 10. every CLI subcommand run twice with identical arguments and seed
//     produces byte-identical primary output files.

struct CliWorkspace {
  TempDir dir;
  std::string task_path, data_path, prompt_path;

  CliWorkspace() {
    task_path = dir.file("task.json");
    data_path = dir.file("data.jsonl");
    prompt_path = dir.file("prompt.txt");
    {
      std::ofstream out(task_path);
      out << R"({"id":"determinism","label_set":["red","green","blue"],"input_fields":["text"]})";
    }
    {
      std::ofstream out(data_path);
      const std::vector<std::string> labels = {"red", "green", "blue"};
      for (int i = 0; i < 12; ++i) {
        json row{{"id", "ex-" + std::to_string(i)},
                 {"inputs", {{"text", "payload " + std::to_string(i)}}},
                 {"gold_label", labels[static_cast<size_t>(i) % 3]}};
        out << row.dump() << "\n";
      }
    }
    {
      std::ofstream out(prompt_path);
      out << "Pick the best color for this input: {text}\n";
    }
  }
};

int run_cli(const CliWorkspace& ws, const std::string& args) {
  static int counter = 0;
  const std::string log = ws.dir.file("log-" + std::to_string(counter++) + ".txt");
  const int status =
      std::system((std::string(PROMPTSTAB_BIN) + " " + args + " >" + log + " 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion_cli_determinism() {
  CliWorkspace ws;

  // Each entry: subcommand arguments with %OUT% for the output location, and
  // the primary files to compare underneath it.
  struct Step {
    std::string name;
    std::string args;
    std::vector<std::string> files;  // relative to %OUT%; empty string = %OUT% itself is a file
  };
  const std::string backend = " --backend mock --seed 3";
  const std::vector<Step> steps = {
      {"paraphrase", "paraphrase --prompt " + ws.prompt_path + " --k 3" + backend + " --out %OUT%",
       {""}},
      {"eval", "eval --task " + ws.task_path + " --data " + ws.data_path + " --prompt " +
                   ws.prompt_path + " --k 2" + backend + " --out %OUT%",
       {"summary.json"}},
      {"conformal", "conformal --summary " + ws.dir.file("eval-a") + "/summary.json --data " +
                        ws.data_path + " --alpha 0.2 --seed 3 --out %OUT%",
       {"conformal.json"}},
      {"analyze", "analyze --summary " + ws.dir.file("eval-a") + "/summary.json --conformal " +
                      ws.dir.file("conformal-a") + "/conformal.json --out %OUT%",
       {"analysis.json", "margin_by_flip.csv", "prompt_scatter.csv"}},
      {"optimize", "optimize --task " + ws.task_path + " --data " + ws.data_path + " --prompt " +
                       ws.prompt_path +
                       " --lambda-perf 0.5 --lambda-stab 0.5 --k 2 --candidates 2 --iters 2 "
                       "--patience 2" +
                       backend + " --out %OUT%",
       {"run.json", "trajectory.jsonl"}},
      {"report", "report --run " + ws.dir.file("optimize-a") + " --out %OUT%",
       {"report.json", "incumbents.csv", "candidates.csv"}},
      {"sweep", "sweep --task " + ws.task_path + " --data " + ws.data_path + " --prompt " +
                    ws.prompt_path +
                    " --seeds 1 --settings acc,joint --k 2 --candidates 2 --iters 1 --patience 1 "
                    "--backend mock --out %OUT%",
       {"sweep.csv", "sweep_aggregate.csv"}},
  };

  for (const auto& step : steps) {
    for (const std::string suffix : {"-a", "-b"}) {
      std::string args = step.args;
      const std::string out = ws.dir.file(step.name + suffix);
      args.replace(args.find("%OUT%"), 5, out);
      if (const int code = run_cli(ws, args); code != 0)
        return {false, step.name + suffix + " exited with code " + std::to_string(code)};
    }
    for (const auto& file : step.files) {
      const std::string rel = file.empty() ? "" : "/" + file;
      const std::string a = util::read_file(ws.dir.file(step.name + "-a") + rel);
      const std::string b = util::read_file(ws.dir.file(step.name + "-b") + rel);
      if (a != b)
        return {false, step.name + (file.empty() ? "" : ": " + file) + " differs between runs"};
    }
  }
  return {true, "7 subcommands, all primary outputs byte-identical"};
}

// ---------------------------------------------------------------------------
// 11. across 100 randomized optimizer runs: acceptance always follows a
//     strict J improvement, accepted-incumbent J is strictly increasing, and
//     no iteration window spends more than (1+N)*(1+K)*n backend calls.

class CountingBackend final : public backend::ModelBackend {
 public:
  CountingBackend(backend::MockParams params, uint64_t seed)
      : inner_(std::move(params), seed, true) {}

  Prediction predict(const Task& task, const Prompt& prompt, const Example& example) override {
    ++calls_;
    return inner_.predict(task, prompt, example);
  }

  long calls() const { return calls_.load(); }

 private:
  backend::MockBackend inner_;
  std::atomic<long> calls_{0};
};

Outcome criterion_optimizer_invariants() {
  constexpr int kRuns = 100;
  std::mt19937_64 rng(53);

  Task task;
  task.id = "invariants";
  task.label_set = {"alpha", "beta", "gamma"};
  task.input_fields = {"text"};
  const Prompt initial{"p0", "Pick the best label for this input: {text}", Provenance::manual()};

  for (int run_index = 0; run_index < kRuns; ++run_index) {
    const int n = 4 + static_cast<int>(rng() % 7);
    optimizer::OptimizerConfig config;
    config.k_variants = 1 + static_cast<int>(rng() % 3);
    config.n_candidates = 1 + static_cast<int>(rng() % 4);
    config.max_iterations = 1 + static_cast<int>(rng() % 4);
    config.patience = 1 + static_cast<int>(rng() % static_cast<uint64_t>(config.max_iterations));
    config.objective.lambda_perf = static_cast<double>(1 + rng() % 4) / 4.0;
    config.objective.lambda_stab = static_cast<double>(rng() % 5) / 4.0;
    config.seed = rng();

    backend::MockParams params;
    params.quality_scale = 0.5 + static_cast<double>(rng() % 12) * 0.5;
    params.difficulty_scale = static_cast<double>(rng() % 9) * 0.5;
    params.instability_scale = static_cast<double>(rng() % 5) * 0.25;

    const Dataset dataset = synth_dataset(task, n, "r" + std::to_string(run_index));
    CountingBackend counting(params, rng());
    paraphrase::RuleBasedParaphraser paraphraser;
    optimizer::RuleBasedCandidateGenerator generator(params.good_tokens, params.stable_tokens);

    const long window_budget = static_cast<long>(1 + config.n_candidates) *
                               (1 + config.k_variants) * n;
    long last_mark = 0;
    bool window_ok = true;
    optimizer::RunOptions options;
    options.on_iteration = [&](const optimizer::IterationRecord&) {
      const long now = counting.calls();
      if (now - last_mark > window_budget) window_ok = false;
      last_mark = now;
    };

    const auto result = optimizer::run(config, counting, paraphraser, generator, task, initial,
                                       dataset, options);
    if (!window_ok)
      return {false, "iteration window exceeded budget in run " + std::to_string(run_index)};
    if (counting.calls() - last_mark > window_budget)
      return {false, "final evaluation exceeded window budget in run " + std::to_string(run_index)};

    const long expected_total = static_cast<long>(1 + result.iterations_run * config.n_candidates +
                                                  1) *
                                (1 + config.k_variants) * n;
    if (counting.calls() != expected_total)
      return {false, "run " + std::to_string(run_index) + " made " +
                         std::to_string(counting.calls()) + " calls, expected " +
                         std::to_string(expected_total)};

    double last_accepted_j = -std::numeric_limits<double>::infinity();
    for (const auto& record : result.trajectory) {
      double best_j = -std::numeric_limits<double>::infinity();
      for (const auto& candidate : record.candidates) best_j = std::max(best_j, candidate.j);
      if (record.accepted) {
        const auto it =
            std::find_if(record.candidates.begin(), record.candidates.end(),
                         [&](const auto& c) { return c.prompt_id == record.accepted_prompt_id; });
        if (it == record.candidates.end())
          return {false, "accepted candidate missing from scores in run " +
                             std::to_string(run_index)};
        if (!(it->j > record.incumbent_j))
          return {false, "acceptance without strict J improvement in run " +
                             std::to_string(run_index)};
        if (!(it->j > last_accepted_j) && last_accepted_j != -std::numeric_limits<double>::infinity())
          return {false, "accepted-incumbent J not strictly increasing in run " +
                             std::to_string(run_index)};
        last_accepted_j = it->j;
      } else if (best_j > record.incumbent_j) {
        return {false, "improving candidate rejected in run " + std::to_string(run_index)};
      }
    }
  }
  return {true, "100 randomized runs"};
}

}  // namespace

int main() {
  struct Criterion {
    int index;
    std::string name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "flip-rate matches brute-force enumeration", criterion_flip_oracle},
      {2, "conformal coverage on calibrated generator", criterion_conformal_coverage},
      {3, "conformal sets nested across alpha", criterion_conformal_nestedness},
      {4, "ECE separates calibrated from overconfident", criterion_calibration_sanity},
      {5, "objective modes rank candidates consistently", criterion_objective_equivalence},
      {6, "joint objective ends with lower flip rate", criterion_joint_vs_accuracy},
      {7, "margins shrink as flip rate grows", criterion_margin_direction},
      {8, "stratified report recovers planted set-size link", criterion_stratified_correlation},
      {9, "anchor flip rate tracks symmetric PSS", criterion_pss_correlation},
      {10, "CLI outputs are byte-identical across reruns", criterion_cli_determinism},
      {11, "optimizer improvement and budget invariants", criterion_optimizer_invariants},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    Outcome outcome;
    try {
      outcome = criterion.check();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.ok) ++failures;
    std::printf("criterion %2d (%s): %s%s%s\n", criterion.index, criterion.name.c_str(),
                outcome.ok ? "PASS" : "FAIL", outcome.detail.empty() ? "" : " — ",
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}

#pragma once
// Post-hoc analysis over evaluation records: stability-stratified conformal
// behavior, margin-vs-flip association, and per-prompt accuracy/stability
// scatter data.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptstab/domain.hpp"
#include "promptstab/metrics.hpp"

namespace promptstab::analysis {

// Quartile summary of base-prediction margins among records sharing one
// flip-rate value.
struct MarginFlipRow {
  double flip_rate = 0.0;
  size_t count = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;

  bool operator==(const MarginFlipRow&) const = default;
};

// One row per distinct flip rate, ascending. Throws when records are empty
// or any record lacks a margin.
std::vector<MarginFlipRow> margin_flip_table(const std::vector<EvalRecord>& records);

struct StratifiedReport {
  size_t n_stable = 0;    // records with flip == false
  size_t n_unstable = 0;  // records with flip == true

  // Conformal behavior per group; absent when the group is empty or carries
  // no conformal fields.
  std::optional<double> mean_set_size_stable;
  std::optional<double> mean_set_size_unstable;
  std::optional<double> coverage_stable;
  std::optional<double> coverage_unstable;

  // Correlations on the continuous flip_rate; absent when fewer than three
  // records carry the needed fields. Constant inputs are reported as
  // degenerate, never as zero correlation.
  std::optional<metrics::SpearmanResult> spearman_flip_setsize;
  std::optional<metrics::SpearmanResult> spearman_margin_fliprate;

  std::vector<MarginFlipRow> margin_by_flip_rate;  // empty when margins absent
};

StratifiedReport stratify(const std::vector<EvalRecord>& records);

struct ScatterRow {
  std::string prompt_id;
  double accuracy = 0.0;
  double mean_flip_rate = 0.0;

  bool operator==(const ScatterRow&) const = default;
};

// One row per summary, in input order.
std::vector<ScatterRow> prompt_scatter(const std::vector<EvalSummary>& summaries);

void to_json(nlohmann::json& j, const MarginFlipRow& v);
void to_json(nlohmann::json& j, const StratifiedReport& v);

// CSV renderings with header rows; numbers use shortest round-trip form.
std::string margin_flip_csv(const std::vector<MarginFlipRow>& rows);
std::string prompt_scatter_csv(const std::vector<ScatterRow>& rows);

}  // namespace promptstab::analysis

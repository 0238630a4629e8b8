#include "promptstab/analysis.hpp"

#include <algorithm>
#include <map>

#include "promptstab/util.hpp"

namespace promptstab::analysis {

using nlohmann::json;

std::vector<MarginFlipRow> margin_flip_table(const std::vector<EvalRecord>& records) {
  if (records.empty()) {
    throw std::invalid_argument("margin_flip_table: no records");
  }
  // Flip rates are exact multiples of 1/K, so grouping by value is exact.
  std::map<double, std::vector<double>> margins_by_rate;
  for (const auto& record : records) {
    if (!record.margin) {
      throw std::invalid_argument("margin_flip_table: record '" + record.example_id +
                                  "' carries no margin (label-only predictions)");
    }
    margins_by_rate[record.flip_rate].push_back(*record.margin);
  }

  std::vector<MarginFlipRow> rows;
  rows.reserve(margins_by_rate.size());
  for (auto& [rate, margins] : margins_by_rate) {
    std::sort(margins.begin(), margins.end());
    MarginFlipRow row;
    row.flip_rate = rate;
    row.count = margins.size();
    row.min = margins.front();
    row.q1 = metrics::quantile_sorted(margins, 0.25);
    row.median = metrics::quantile_sorted(margins, 0.5);
    row.q3 = metrics::quantile_sorted(margins, 0.75);
    row.max = margins.back();
    rows.push_back(row);
  }
  return rows;
}

namespace {

void group_conformal_stats(const std::vector<const EvalRecord*>& group,
                           std::optional<double>& mean_set_size,
                           std::optional<double>& coverage) {
  double size_sum = 0.0;
  double covered_sum = 0.0;
  std::size_t n_sets = 0;
  std::size_t n_covered = 0;
  for (const auto* record : group) {
    if (record->conformal_set) {
      size_sum += static_cast<double>(record->conformal_set->size());
      ++n_sets;
    }
    if (record->covered) {
      covered_sum += *record->covered ? 1.0 : 0.0;
      ++n_covered;
    }
  }
  if (n_sets > 0) mean_set_size = size_sum / static_cast<double>(n_sets);
  if (n_covered > 0) coverage = covered_sum / static_cast<double>(n_covered);
}

json spearman_json(const std::optional<metrics::SpearmanResult>& r) {
  if (!r) return nullptr;
  json j;
  j["degenerate"] = r->degenerate;
  j["rho"] = r->degenerate ? json(nullptr) : json(r->rho);
  j["p_value"] = r->degenerate ? json(nullptr) : json(r->p_value);
  return j;
}

}  // namespace

StratifiedReport stratify(const std::vector<EvalRecord>& records) {
  StratifiedReport report;

  std::vector<const EvalRecord*> stable;
  std::vector<const EvalRecord*> unstable;
  for (const auto& record : records) {
    (record.flip ? unstable : stable).push_back(&record);
  }
  report.n_stable = stable.size();
  report.n_unstable = unstable.size();

  group_conformal_stats(stable, report.mean_set_size_stable, report.coverage_stable);
  group_conformal_stats(unstable, report.mean_set_size_unstable, report.coverage_unstable);

  std::vector<double> flip_rates;
  std::vector<double> set_sizes;
  for (const auto& record : records) {
    if (!record.conformal_set) continue;
    flip_rates.push_back(record.flip_rate);
    set_sizes.push_back(static_cast<double>(record.conformal_set->size()));
  }
  if (flip_rates.size() >= 3) {
    report.spearman_flip_setsize = metrics::spearman(flip_rates, set_sizes);
  }

  std::vector<double> margins;
  std::vector<double> margin_flip_rates;
  std::vector<EvalRecord> with_margin;
  for (const auto& record : records) {
    if (!record.margin) continue;
    margins.push_back(*record.margin);
    margin_flip_rates.push_back(record.flip_rate);
    with_margin.push_back(record);
  }
  if (margins.size() >= 3) {
    report.spearman_margin_fliprate = metrics::spearman(margins, margin_flip_rates);
  }
  if (!with_margin.empty()) {
    report.margin_by_flip_rate = margin_flip_table(with_margin);
  }
  return report;
}

std::vector<ScatterRow> prompt_scatter(const std::vector<EvalSummary>& summaries) {
  std::vector<ScatterRow> rows;
  rows.reserve(summaries.size());
  for (const auto& summary : summaries) {
    rows.push_back({summary.prompt_id, summary.accuracy, summary.mean_flip_rate});
  }
  return rows;
}

void to_json(json& j, const MarginFlipRow& v) {
  j = json{{"flip_rate", v.flip_rate}, {"count", v.count}, {"min", v.min},  {"q1", v.q1},
           {"median", v.median},       {"q3", v.q3},       {"max", v.max}};
}

void to_json(json& j, const StratifiedReport& v) {
  auto opt = [](const std::optional<double>& o) { return o ? json(*o) : json(nullptr); };
  j = json{{"n_stable", v.n_stable},
           {"n_unstable", v.n_unstable},
           {"mean_set_size_stable", opt(v.mean_set_size_stable)},
           {"mean_set_size_unstable", opt(v.mean_set_size_unstable)},
           {"coverage_stable", opt(v.coverage_stable)},
           {"coverage_unstable", opt(v.coverage_unstable)},
           {"spearman_flip_setsize", spearman_json(v.spearman_flip_setsize)},
           {"spearman_margin_fliprate", spearman_json(v.spearman_margin_fliprate)},
           {"margin_by_flip_rate", v.margin_by_flip_rate}};
}

std::string margin_flip_csv(const std::vector<MarginFlipRow>& rows) {
  std::string out = "flip_rate,count,min,q1,median,q3,max\n";
  for (const auto& row : rows) {
    out += util::fmt_double(row.flip_rate);
    out += ',' + std::to_string(row.count);
    for (double v : {row.min, row.q1, row.median, row.q3, row.max}) {
      out += ',' + util::fmt_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string prompt_scatter_csv(const std::vector<ScatterRow>& rows) {
  std::string out = "prompt_id,accuracy,mean_flip_rate\n";
  for (const auto& row : rows) {
    out += util::csv_escape(row.prompt_id);
    out += ',' + util::fmt_double(row.accuracy);
    out += ',' + util::fmt_double(row.mean_flip_rate);
    out += '\n';
  }
  return out;
}

}  // namespace promptstab::analysis

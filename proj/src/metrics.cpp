#include "promptstab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace promptstab::metrics {

namespace {

constexpr double kProbClamp = 1e-12;

void require_nonempty(size_t n, const char* what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

void require_same_size(size_t a, size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

double prob_of(const Prediction& pred, const std::string& label, const char* what) {
  if (!pred.probs.has_value())
    throw std::invalid_argument(std::string(what) + ": prediction has no probabilities");
  auto it = pred.probs->find(label);
  if (it == pred.probs->end())
    throw std::invalid_argument(std::string(what) + ": gold label '" + label +
                                "' missing from probability map");
  return it->second;
}

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double accuracy(const std::vector<EvalRecord>& records) {
  require_nonempty(records.size(), "accuracy");
  size_t correct = 0;
  for (const auto& r : records) correct += r.correct ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& predicted,
                const std::vector<std::string>& label_set,
                std::vector<std::string>* absent_labels) {
  require_nonempty(gold.size(), "macro_f1");
  require_same_size(gold.size(), predicted.size(), "macro_f1");
  if (absent_labels) absent_labels->clear();
  double sum_f1 = 0.0;
  for (const auto& label : label_set) {
    size_t tp = 0, fp = 0, fn = 0, gold_count = 0, pred_count = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
      const bool is_gold = gold[i] == label;
      const bool is_pred = predicted[i] == label;
      gold_count += is_gold ? 1 : 0;
      pred_count += is_pred ? 1 : 0;
      if (is_gold && is_pred) ++tp;
      if (!is_gold && is_pred) ++fp;
      if (is_gold && !is_pred) ++fn;
    }
    if (gold_count == 0 && pred_count == 0 && absent_labels)
      absent_labels->push_back(label);
    const double denom = static_cast<double>(2 * tp + fp + fn);
    sum_f1 += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return sum_f1 / static_cast<double>(label_set.size());
}

double log_loss(const std::vector<Prediction>& predictions, const std::vector<std::string>& gold) {
  require_nonempty(predictions.size(), "log_loss");
  require_same_size(predictions.size(), gold.size(), "log_loss");
  double total = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const double p =
        std::clamp(prob_of(predictions[i], gold[i], "log_loss"), kProbClamp, 1.0 - kProbClamp);
    total -= std::log(p);
  }
  return total / static_cast<double>(predictions.size());
}

double brier(const std::vector<Prediction>& predictions, const std::vector<std::string>& gold) {
  require_nonempty(predictions.size(), "brier");
  require_same_size(predictions.size(), gold.size(), "brier");
  double total = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (!predictions[i].probs.has_value())
      throw std::invalid_argument("brier: prediction has no probabilities");
    double record_sum = 0.0;
    for (const auto& [label, p] : *predictions[i].probs) {
      const double target = label == gold[i] ? 1.0 : 0.0;
      record_sum += (p - target) * (p - target);
    }
    total += record_sum;
  }
  return total / static_cast<double>(predictions.size());
}

EceResult ece_mce(const std::vector<double>& confidence, const std::vector<bool>& correct,
                  int n_bins) {
  require_nonempty(confidence.size(), "ece_mce");
  require_same_size(confidence.size(), correct.size(), "ece_mce");
  if (n_bins < 1) throw std::invalid_argument("ece_mce: n_bins must be >= 1");

  EceResult result;
  result.bins.resize(static_cast<size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    result.bins[static_cast<size_t>(b)].lower = static_cast<double>(b) / n_bins;
    result.bins[static_cast<size_t>(b)].upper = static_cast<double>(b + 1) / n_bins;
  }

  std::vector<double> conf_sum(static_cast<size_t>(n_bins), 0.0);
  std::vector<double> acc_sum(static_cast<size_t>(n_bins), 0.0);
  for (size_t i = 0; i < confidence.size(); ++i) {
    const int b = std::min(n_bins - 1,
                           static_cast<int>(std::floor(confidence[i] * n_bins)));
    const size_t bi = static_cast<size_t>(std::max(0, b));
    result.bins[bi].count += 1;
    conf_sum[bi] += confidence[i];
    acc_sum[bi] += correct[i] ? 1.0 : 0.0;
  }

  const double n = static_cast<double>(confidence.size());
  for (size_t b = 0; b < result.bins.size(); ++b) {
    auto& bin = result.bins[b];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[b] / static_cast<double>(bin.count);
    bin.empirical_accuracy = acc_sum[b] / static_cast<double>(bin.count);
    const double gap = std::abs(bin.empirical_accuracy - bin.mean_confidence);
    result.ece += static_cast<double>(bin.count) / n * gap;
    result.mce = std::max(result.mce, gap);
  }
  return result;
}

EceResult ece_mce(const std::vector<EvalRecord>& records, int n_bins) {
  std::vector<double> conf;
  std::vector<bool> correct;
  conf.reserve(records.size());
  correct.reserve(records.size());
  for (const auto& r : records) {
    conf.push_back(confidence(r.base_prediction));
    correct.push_back(r.correct);
  }
  return ece_mce(conf, correct, n_bins);
}

double confidence(const Prediction& prediction) {
  if (!prediction.probs.has_value())
    throw std::invalid_argument("confidence: prediction has no probabilities");
  double best = 0.0;
  for (const auto& [label, p] : *prediction.probs) best = std::max(best, p);
  return best;
}

double margin(const Prediction& prediction) {
  if (!prediction.probs.has_value())
    throw std::invalid_argument("margin: prediction has no probabilities");
  double top1 = -1.0, top2 = -1.0;
  for (const auto& [label, p] : *prediction.probs) {
    if (p > top1) {
      top2 = top1;
      top1 = p;
    } else if (p > top2) {
      top2 = p;
    }
  }
  if (top2 < 0.0) throw std::invalid_argument("margin: needs at least two labels");
  return top1 - top2;
}

std::vector<FlipStat> flip_stats(const std::vector<std::string>& base_labels,
                                 const std::vector<std::vector<std::string>>& variant_labels) {
  const size_t n = base_labels.size();
  const size_t k = variant_labels.size();
  if (k == 0) throw std::invalid_argument("flip_stats: needs at least one variant");
  for (const auto& column : variant_labels)
    require_same_size(column.size(), n, "flip_stats");

  std::vector<FlipStat> stats(n);
  for (size_t i = 0; i < n; ++i) {
    size_t disagreements = 0;
    for (size_t v = 0; v < k; ++v)
      if (variant_labels[v][i] != base_labels[i]) ++disagreements;
    stats[i].flip_rate = static_cast<double>(disagreements) / static_cast<double>(k);
    stats[i].flip = disagreements > 0;
  }
  return stats;
}

std::vector<double> pss(const std::vector<std::vector<std::string>>& labels_per_prompt) {
  const size_t m = labels_per_prompt.size();
  if (m < 2) throw std::invalid_argument("pss: needs at least two prompts");
  const size_t n = labels_per_prompt.front().size();
  for (const auto& column : labels_per_prompt) require_same_size(column.size(), n, "pss");

  const double pairs = static_cast<double>(m * (m - 1) / 2);
  std::vector<double> scores(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    size_t disagreeing = 0;
    for (size_t a = 0; a < m; ++a)
      for (size_t b = a + 1; b < m; ++b)
        if (labels_per_prompt[a][i] != labels_per_prompt[b][i]) ++disagreeing;
    scores[i] = static_cast<double>(disagreeing) / pairs;
  }
  return scores;
}

double jsd(std::span<const double> p, std::span<const double> q) {
  require_same_size(p.size(), q.size(), "jsd");
  require_nonempty(p.size(), "jsd");
  const double inv_ln2 = 1.0 / std::log(2.0);
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) total += 0.5 * p[i] * std::log(p[i] / m) * inv_ln2;
    if (q[i] > 0.0) total += 0.5 * q[i] * std::log(q[i] / m) * inv_ln2;
  }
  return std::clamp(total, 0.0, 1.0);
}

double jsd(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: mismatched support");
  std::vector<double> pv, qv;
  pv.reserve(p.size());
  qv.reserve(q.size());
  auto qit = q.begin();
  for (const auto& [label, value] : p) {
    if (qit->first != label) throw std::invalid_argument("jsd: mismatched support");
    pv.push_back(value);
    qv.push_back(qit->second);
    ++qit;
  }
  return jsd(std::span<const double>(pv), std::span<const double>(qv));
}

SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  require_same_size(xs.size(), ys.size(), "spearman");
  if (xs.size() < 3) throw std::invalid_argument("spearman: needs at least 3 observations");

  const auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (constant(xs) || constant(ys)) return SpearmanResult{.degenerate = true};

  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mean = (n + 1.0) / 2.0;

  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  SpearmanResult result;
  result.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);

  const double df = n - 2.0;
  const double denom = 1.0 - result.rho * result.rho;
  if (denom <= 0.0) {
    result.p_value = 0.0;
  } else {
    const double t = result.rho * std::sqrt(df / denom);
    const boost::math::students_t dist(df);
    result.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return result;
}

double quantile_sorted(const std::vector<double>& sorted_values, double q) {
  require_nonempty(sorted_values.size(), "quantile");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: q outside [0,1]");
  if (sorted_values.size() == 1) return sorted_values.front();
  const double h = q * static_cast<double>(sorted_values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, sorted_values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace promptstab::metrics

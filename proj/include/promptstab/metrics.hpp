#pragma once
// Performance, calibration and sensitivity statistics. Everything here is a
// pure function over immutable inputs; anything that violates a precondition
// throws std::invalid_argument.

#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "promptstab/domain.hpp"

namespace promptstab::metrics {

double accuracy(const std::vector<EvalRecord>& records);

// Unweighted mean of per-label F1 over base predictions. A label absent from
// both gold and predictions contributes F1 = 0 and is reported through
// `absent_labels` when given, since silently skipping it inflates scores on
// rare-label tasks.
double macro_f1(const std::vector<std::string>& gold, const std::vector<std::string>& predicted,
                const std::vector<std::string>& label_set,
                std::vector<std::string>* absent_labels = nullptr);

// -mean ln p(gold). Probabilities are clamped to [1e-12, 1 - 1e-12] before
// the log.
double log_loss(const std::vector<Prediction>& predictions, const std::vector<std::string>& gold);

// Mean over records of sum_labels (p(label) - 1[label == gold])^2.
double brier(const std::vector<Prediction>& predictions, const std::vector<std::string>& gold);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  size_t count = 0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;
};

struct EceResult {
  double ece = 0.0;
  double mce = 0.0;
  std::vector<ReliabilityBin> bins;  // all n_bins partitions, empty ones with count 0
};

// Equal-width bins over [0,1] on confidence = max-label probability.
// ECE = sum (count/n) |acc - conf|; MCE = max over non-empty bins.
EceResult ece_mce(const std::vector<double>& confidence, const std::vector<bool>& correct,
                  int n_bins);
EceResult ece_mce(const std::vector<EvalRecord>& records, int n_bins);

// Max-label probability of a prediction.
double confidence(const Prediction& prediction);

// Difference between the top-two class probabilities.
double margin(const Prediction& prediction);

struct FlipStat {
  bool flip = false;
  double flip_rate = 0.0;
};

// Per-example flip statistics against the base prompt. variant_labels[k][i]
// is the k-th variant's label for example i; comparison is on labels only.
std::vector<FlipStat> flip_stats(const std::vector<std::string>& base_labels,
                                 const std::vector<std::vector<std::string>>& variant_labels);

// Symmetric instance-level prompt sensitivity: mean disagreement over all
// unordered prompt pairs. labels_per_prompt[m][i] is prompt m's label for
// example i; M >= 2.
std::vector<double> pss(const std::vector<std::vector<std::string>>& labels_per_prompt);

// Jensen-Shannon divergence, log base 2, so the result lies in [0, 1].
double jsd(std::span<const double> p, std::span<const double> q);
double jsd(const std::map<std::string, double>& p, const std::map<std::string, double>& q);

struct SpearmanResult {
  double rho = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  // True when either input is constant, where rho is undefined. Reported
  // explicitly rather than as 0.
  bool degenerate = false;
};

// Rank correlation with average ranks for ties; two-sided p-value from the
// t-approximation t = rho sqrt((n-2)/(1-rho^2)) with n-2 degrees of freedom.
SpearmanResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

// Type-7 quantile (linear interpolation) over an ascending-sorted vector.
double quantile_sorted(const std::vector<double>& sorted_values, double q);

}  // namespace promptstab::metrics

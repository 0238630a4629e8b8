#pragma once
// Split conformal prediction sets and selective-prediction policies over
// probability-capable predictions.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptstab/domain.hpp"

namespace promptstab::conformal {

struct ConformalModel {
  double alpha = 0.1;
  // k-th smallest calibration score with k = ceil((n+1)(1-alpha)), or +inf
  // when k > n (every label always included).
  double threshold = 0.0;
  size_t n_calibration = 0;
};

// A prediction joined with its gold label, the unit conformal calibration
// works on.
struct LabeledPrediction {
  std::string example_id;
  Prediction prediction;
  std::string gold_label;
};

struct SplitIndices {
  std::vector<size_t> calibration;  // first ceil(n/2) after the seeded shuffle
  std::vector<size_t> evaluation;
};

// Seeded uniform shuffle of [0, n); deterministic given seed; the two halves
// partition the input. Throws on n < 2.
SplitIndices split_calibration_indices(size_t n, uint64_t seed);

std::pair<std::vector<LabeledPrediction>, std::vector<LabeledPrediction>> split_calibration(
    const std::vector<LabeledPrediction>& records, uint64_t seed);

// Nonconformity score 1 - p(gold); threshold at the finite-sample-corrected
// order statistic. Throws when any record lacks probabilities.
ConformalModel fit(const std::vector<LabeledPrediction>& calibration, double alpha);

// C = {y : 1 - p(y) <= threshold}, emitted in label_set order. May be empty.
std::vector<std::string> predict_set(const ConformalModel& model, const Task& task,
                                     const Prediction& prediction);

struct CoverageStats {
  double empirical_coverage = 0.0;
  double mean_set_size = 0.0;
};

CoverageStats coverage_stats(const ConformalModel& model, const Task& task,
                             const std::vector<LabeledPrediction>& eval_records);

enum class SelectivePolicy { ConfidenceThreshold, AbstainIfSetLargerThanOne };

struct CurvePoint {
  double coverage_fraction = 0.0;    // fraction answered
  double selective_accuracy = 0.0;   // accuracy among answered
};

// Confidence policy sweeps every distinct confidence value as the answering
// threshold (answer-all included, answer-none omitted). The set-size policy
// abstains exactly when |C| exceeds one.
std::vector<CurvePoint> coverage_accuracy_curve(const std::vector<EvalRecord>& records,
                                                SelectivePolicy policy);

// Run-report fields for conformal.json. threshold serializes as null when
// infinite.
struct ConformalReport {
  double alpha = 0.1;
  double threshold = 0.0;
  size_t n_calibration = 0;
  double coverage = 0.0;
  double mean_set_size = 0.0;
  std::vector<CurvePoint> confidence_curve;
  std::vector<CurvePoint> set_size_curve;
  // Per evaluation-half example: id -> (conformal set, covered).
  std::vector<EvalRecord> eval_records;
};

void to_json(nlohmann::json& j, const CurvePoint& v);
void from_json(const nlohmann::json& j, CurvePoint& v);
void to_json(nlohmann::json& j, const ConformalReport& v);
void from_json(const nlohmann::json& j, ConformalReport& v);

}  // namespace promptstab::conformal

#include "promptstab/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "promptstab/metrics.hpp"
#include "promptstab/util.hpp"

namespace promptstab::conformal {

using nlohmann::json;

namespace {

double gold_probability(const LabeledPrediction& record) {
  if (!record.prediction.probs.has_value())
    throw std::invalid_argument("conformal: record '" + record.example_id +
                                "' has no probabilities");
  auto it = record.prediction.probs->find(util::trim_copy(record.gold_label));
  if (it == record.prediction.probs->end())
    throw std::invalid_argument("conformal: gold label '" + record.gold_label +
                                "' missing from probabilities of '" + record.example_id + "'");
  return it->second;
}

}  // namespace

SplitIndices split_calibration_indices(size_t n, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("split_calibration: needs at least 2 records");
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  util::seeded_shuffle(order, seed);
  const size_t n_cal = (n + 1) / 2;  // ceil(n/2)
  SplitIndices split;
  split.calibration.assign(order.begin(), order.begin() + static_cast<ptrdiff_t>(n_cal));
  split.evaluation.assign(order.begin() + static_cast<ptrdiff_t>(n_cal), order.end());
  return split;
}

std::pair<std::vector<LabeledPrediction>, std::vector<LabeledPrediction>> split_calibration(
    const std::vector<LabeledPrediction>& records, uint64_t seed) {
  const SplitIndices split = split_calibration_indices(records.size(), seed);
  std::pair<std::vector<LabeledPrediction>, std::vector<LabeledPrediction>> halves;
  halves.first.reserve(split.calibration.size());
  halves.second.reserve(split.evaluation.size());
  for (size_t i : split.calibration) halves.first.push_back(records[i]);
  for (size_t i : split.evaluation) halves.second.push_back(records[i]);
  return halves;
}

ConformalModel fit(const std::vector<LabeledPrediction>& calibration, double alpha) {
  if (alpha <= 0.0 || alpha >= 1.0)
    throw std::invalid_argument("conformal fit: alpha must lie in (0,1)");
  if (calibration.empty()) throw std::invalid_argument("conformal fit: empty calibration set");

  std::vector<double> scores;
  scores.reserve(calibration.size());
  for (const auto& record : calibration) scores.push_back(1.0 - gold_probability(record));
  std::sort(scores.begin(), scores.end());

  const size_t n = scores.size();
  // Tolerance guards against 0.9-style binary-representation overshoot in the
  // ceil; (n+1)(1-alpha) values this close to an integer are meant to be it.
  const size_t k = static_cast<size_t>(
      std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-9));

  ConformalModel model;
  model.alpha = alpha;
  model.n_calibration = n;
  model.threshold =
      k > n ? std::numeric_limits<double>::infinity() : scores[k - 1];
  return model;
}

std::vector<std::string> predict_set(const ConformalModel& model, const Task& task,
                                     const Prediction& prediction) {
  if (!prediction.probs.has_value())
    throw std::invalid_argument("predict_set: prediction has no probabilities");
  std::vector<std::string> set;
  for (const auto& label : task.label_set) {
    auto it = prediction.probs->find(label);
    const double p = it == prediction.probs->end() ? 0.0 : it->second;
    if (1.0 - p <= model.threshold) set.push_back(label);
  }
  return set;
}

CoverageStats coverage_stats(const ConformalModel& model, const Task& task,
                             const std::vector<LabeledPrediction>& eval_records) {
  if (eval_records.empty())
    throw std::invalid_argument("coverage_stats: empty evaluation set");
  size_t covered = 0;
  size_t total_size = 0;
  for (const auto& record : eval_records) {
    const auto set = predict_set(model, task, record.prediction);
    total_size += set.size();
    const std::string gold = util::trim_copy(record.gold_label);
    if (std::find(set.begin(), set.end(), gold) != set.end()) ++covered;
  }
  const double n = static_cast<double>(eval_records.size());
  return CoverageStats{static_cast<double>(covered) / n,
                       static_cast<double>(total_size) / n};
}

std::vector<CurvePoint> coverage_accuracy_curve(const std::vector<EvalRecord>& records,
                                                SelectivePolicy policy) {
  if (records.empty()) throw std::invalid_argument("coverage_accuracy_curve: empty input");
  std::vector<CurvePoint> curve;
  const double n = static_cast<double>(records.size());

  if (policy == SelectivePolicy::ConfidenceThreshold) {
    std::vector<double> confidences;
    confidences.reserve(records.size());
    for (const auto& r : records) confidences.push_back(metrics::confidence(r.base_prediction));
    std::vector<double> thresholds = confidences;
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    for (double t : thresholds) {
      size_t answered = 0, correct = 0;
      for (size_t i = 0; i < records.size(); ++i) {
        if (confidences[i] >= t) {
          ++answered;
          correct += records[i].correct ? 1 : 0;
        }
      }
      curve.push_back({static_cast<double>(answered) / n,
                       static_cast<double>(correct) / static_cast<double>(answered)});
    }
    return curve;
  }

  size_t answered = 0, correct = 0;
  for (const auto& r : records) {
    if (!r.conformal_set.has_value())
      throw std::invalid_argument("coverage_accuracy_curve: record '" + r.example_id +
                                  "' has no conformal set");
    if (r.conformal_set->size() <= 1) {
      ++answered;
      correct += r.correct ? 1 : 0;
    }
  }
  if (answered > 0)
    curve.push_back({static_cast<double>(answered) / n,
                     static_cast<double>(correct) / static_cast<double>(answered)});
  return curve;
}

void to_json(json& j, const CurvePoint& v) {
  j = json{{"coverage", v.coverage_fraction}, {"accuracy", v.selective_accuracy}};
}

void from_json(const json& j, CurvePoint& v) {
  j.at("coverage").get_to(v.coverage_fraction);
  j.at("accuracy").get_to(v.selective_accuracy);
}

void to_json(json& j, const ConformalReport& v) {
  j = json{{"alpha", v.alpha},
           {"n_cal", v.n_calibration},
           {"coverage", v.coverage},
           {"mean_set_size", v.mean_set_size},
           {"confidence_curve", v.confidence_curve},
           {"set_size_curve", v.set_size_curve},
           {"eval_records", v.eval_records}};
  j["threshold"] = std::isinf(v.threshold) ? json(nullptr) : json(v.threshold);
}

void from_json(const json& j, ConformalReport& v) {
  j.at("alpha").get_to(v.alpha);
  j.at("n_cal").get_to(v.n_calibration);
  j.at("coverage").get_to(v.coverage);
  j.at("mean_set_size").get_to(v.mean_set_size);
  j.at("confidence_curve").get_to(v.confidence_curve);
  j.at("set_size_curve").get_to(v.set_size_curve);
  j.at("eval_records").get_to(v.eval_records);
  const auto& t = j.at("threshold");
  v.threshold = t.is_null() ? std::numeric_limits<double>::infinity() : t.get<double>();
}

}  // namespace promptstab::conformal

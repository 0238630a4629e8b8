#include "promptstab/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "promptstab/util.hpp"

namespace promptstab::backend {

namespace {

constexpr double kNoiseGain = 4.0;  // logit units at full instability

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Counts distinct tokens from the list that appear in text as
// case-insensitive whole words.
int count_tokens_present(const std::vector<std::string>& tokens, const std::string& text_lower) {
  int n = 0;
  for (const auto& token : tokens) {
    const std::string needle = util::to_lower(util::trim_copy(token));
    if (needle.empty()) continue;
    bool found = false;
    std::size_t pos = 0;
    while ((pos = text_lower.find(needle, pos)) != std::string::npos) {
      const bool left_ok =
          pos == 0 || std::isalnum(static_cast<unsigned char>(text_lower[pos - 1])) == 0;
      const std::size_t end = pos + needle.size();
      const bool right_ok = end >= text_lower.size() ||
                            std::isalnum(static_cast<unsigned char>(text_lower[end])) == 0;
      if (left_ok && right_ok) {
        found = true;
        break;
      }
      ++pos;
    }
    if (found) ++n;
  }
  return n;
}

uint64_t salted_hash(uint64_t seed, std::string_view salt, std::string_view a,
                     std::string_view b = {}) {
  uint64_t h = util::fnv1a64_u64(seed);
  h = util::fnv1a64(salt, h);
  h = util::fnv1a64_u64(a.size(), h);
  h = util::fnv1a64(a, h);
  h = util::fnv1a64_u64(b.size(), h);
  h = util::fnv1a64(b, h);
  return h;
}

// Saturating token bonus: three distinct tokens reach the full effect.
double token_saturation(int n) { return std::min(1.0, static_cast<double>(n) / 3.0); }

}  // namespace

double mock_quality(const MockParams& params, uint64_t seed, std::string_view prompt_text) {
  const std::string lower = util::to_lower(std::string(prompt_text));
  const double bonus = token_saturation(count_tokens_present(params.good_tokens, lower));
  const double jitter = util::hash_unit(salted_hash(seed, "quality", prompt_text)) - 0.5;
  return clamp01(0.15 + 0.7 * bonus + 0.1 * jitter);
}

double mock_stability(const MockParams& params, uint64_t seed, std::string_view prompt_text) {
  const std::string lower = util::to_lower(std::string(prompt_text));
  const double bonus = token_saturation(count_tokens_present(params.stable_tokens, lower));
  const double jitter = util::hash_unit(salted_hash(seed, "stability", prompt_text)) - 0.5;
  return clamp01(0.1 + 0.8 * bonus + 0.1 * jitter);
}

double mock_difficulty(uint64_t seed, std::string_view example_id) {
  return util::hash_unit(salted_hash(seed, "difficulty", example_id));
}

double mock_gold_logit(const MockParams& params, uint64_t seed, std::string_view base_text,
                       std::string_view example_id) {
  const double q = mock_quality(params, seed, base_text);
  const double d = mock_difficulty(seed, example_id);
  return params.quality_scale * q - params.difficulty_scale * d;
}

Prediction mock_predict(const MockParams& params, uint64_t seed, const Task& task,
                        std::string_view base_text, std::optional<std::string_view> variant_text,
                        const Example& example, bool wants_probs) {
  double z = mock_gold_logit(params, seed, base_text, example.id);
  if (variant_text) {
    const double s = mock_stability(params, seed, base_text);
    const double u =
        2.0 * util::hash_unit(salted_hash(seed, "variant-noise", *variant_text, example.id)) - 1.0;
    z += kNoiseGain * params.instability_scale * (1.0 - s) * u;
  }
  const double p_gold = logistic(z);

  const auto& labels = task.label_set;
  const int gold_idx = label_index(task, example.gold_label);
  if (gold_idx < 0) {
    throw std::invalid_argument("mock_predict: gold label '" + example.gold_label +
                                "' of example '" + example.id + "' is not in the task label set");
  }

  std::map<std::string, double> probs;
  const double rest = (1.0 - p_gold) / static_cast<double>(labels.size() - 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    probs[labels[i]] = i == static_cast<std::size_t>(gold_idx) ? p_gold : rest;
  }

  const std::string label = argmax_label(task, probs);
  if (wants_probs) {
    return Prediction::from_probs(task, std::move(probs), label);
  }
  return Prediction::from_label(task, label, label);
}

MockBackend::MockBackend(MockParams params, uint64_t seed, bool wants_probs)
    : params_(std::move(params)), seed_(seed), wants_probs_(wants_probs) {
  validate_mock_params(params_);
}

std::string MockBackend::resolve_base_text(const Prompt& prompt) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (prompt.provenance.kind == ProvenanceKind::ParaphraseOf &&
      !prompt.provenance.parent_id.empty()) {
    auto it = text_by_id_.find(prompt.provenance.parent_id);
    if (it != text_by_id_.end()) return it->second;
    return prompt.text;
  }
  text_by_id_[prompt.id] = prompt.text;
  return prompt.text;
}

Prediction MockBackend::predict(const Task& task, const Prompt& prompt, const Example& example) {
  const std::string base_text = resolve_base_text(prompt);
  std::optional<std::string_view> variant_text;
  if (prompt.provenance.kind == ProvenanceKind::ParaphraseOf && prompt.text != base_text) {
    variant_text = prompt.text;
  }
  return mock_predict(params_, seed_, task, base_text, variant_text, example, wants_probs_);
}

}  // namespace promptstab::backend

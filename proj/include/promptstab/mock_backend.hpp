#pragma once
// Deterministic mock model with planted structure, used for tests and
// offline experiments. Prompt quality q and stability s are monotone in the
// number of scenario tokens present in the prompt text; example difficulty d
// is a stable hash. The gold label receives probability
// logistic(a*q - b*d); paraphrase variants re-draw the logit with additive
// noise scaled by c*(1 - s).

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "promptstab/backend.hpp"

namespace promptstab::backend {

// Planted quantities, exposed for direct inspection.
double mock_quality(const MockParams& params, uint64_t seed, std::string_view prompt_text);
double mock_stability(const MockParams& params, uint64_t seed, std::string_view prompt_text);
double mock_difficulty(uint64_t seed, std::string_view example_id);

// Gold-label logit for the base prompt, before any variant noise.
double mock_gold_logit(const MockParams& params, uint64_t seed, std::string_view base_text,
                       std::string_view example_id);

// Pure function of (params, seed, base_text, variant_text, example).
// variant_text is nullopt for the base prompt itself; when set, an additive
// noise term derived from hash(seed, variant_text, example.id) perturbs the
// base logit, scaled by c * (1 - s(base)). c = 0 reproduces the base
// prediction exactly for every variant. The example's gold label (which must
// be in the task label set) receives probability logistic of the perturbed
// logit; the remainder is spread uniformly over the other labels.
Prediction mock_predict(const MockParams& params, uint64_t seed, const Task& task,
                        std::string_view base_text, std::optional<std::string_view> variant_text,
                        const Example& example, bool wants_probs);

class MockBackend final : public ModelBackend {
 public:
  MockBackend(MockParams params, uint64_t seed, bool wants_probs);

  Prediction predict(const Task& task, const Prompt& prompt, const Example& example) override;

  const MockParams& params() const { return params_; }
  uint64_t seed() const { return seed_; }

 private:
  // Paraphrase variants carry provenance pointing at their base prompt; the
  // base text is resolved through a registry of prompts seen so far so the
  // planted logit stays anchored to the base prompt. Base prompts are always
  // evaluated before their variants, so lookups hit; an unknown parent falls
  // back to the variant's own text.
  std::string resolve_base_text(const Prompt& prompt);

  MockParams params_;
  uint64_t seed_;
  bool wants_probs_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::string> text_by_id_;
};

}  // namespace promptstab::backend

#pragma once
// Meaning-preserving prompt rewrites. Both generators guarantee the same
// contract: K distinct variants, none equal to the base, every placeholder
// preserved, deterministic for a fixed (base text, k, seed) — the LLM path
// only as far as the backend itself is deterministic.

#include <stdexcept>
#include <string>

#include "promptstab/backend.hpp"
#include "promptstab/domain.hpp"

namespace promptstab::paraphrase {

// Variant generation that could not satisfy the contract.
struct ParaphraseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Paraphraser {
 public:
  virtual ~Paraphraser() = default;

  // k >= 1. Throws ParaphraseError when k distinct valid variants cannot be
  // produced.
  virtual PromptVariantSet generate(const Prompt& base, int k, uint64_t seed) = 0;
};

// Deterministic template rewrites (politeness wrapper, clause rotation,
// restatement prefix, question suffix) and their compositions. Affix-based,
// so placeholders are untouched by construction. Supports k up to 15.
class RuleBasedParaphraser final : public Paraphraser {
 public:
  PromptVariantSet generate(const Prompt& base, int k, uint64_t seed) override;
};

// Asks a generation-capable backend to rewrite the prompt, validates each
// candidate line, and retries with a reseeded request until k valid variants
// accumulate or attempts run out.
class LlmParaphraser final : public Paraphraser {
 public:
  explicit LlmParaphraser(backend::ModelBackend& backend, int max_attempts = 3)
      : backend_(backend), max_attempts_(max_attempts) {}

  PromptVariantSet generate(const Prompt& base, int k, uint64_t seed) override;

 private:
  backend::ModelBackend& backend_;
  int max_attempts_;
};

// Splits a numbered/bulleted response into candidate lines, stripping the
// list markers. Blank lines are dropped.
std::vector<std::string> parse_numbered_lines(const std::string& text);

// Loads a stored variant set and revalidates it.
PromptVariantSet load_variants(const std::string& path);

}  // namespace promptstab::paraphrase

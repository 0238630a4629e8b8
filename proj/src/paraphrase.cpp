#include "promptstab/paraphrase.hpp"

#include <algorithm>
#include <cctype>

#include "promptstab/resources.hpp"
#include "promptstab/util.hpp"

namespace promptstab::paraphrase {

namespace {

// Moves the first sentence to the end. Single-sentence texts get a neutral
// lead-in instead so the transform always changes the text.
std::string rotate_clauses(const std::string& text) {
  const std::size_t cut = text.find(". ");
  if (cut == std::string::npos || cut + 2 >= text.size()) {
    return "Here is what needs to be done. " + text;
  }
  return text.substr(cut + 2) + " " + text.substr(0, cut + 1);
}

std::string politeness(const std::string& text) {
  return "Please handle the following task. " + text;
}

std::string restate(const std::string& text) { return "In other words: " + text; }

std::string question_suffix(const std::string& text) {
  std::string out = util::trim_copy(text);
  return out + " Could you work through this and give your answer?";
}

}  // namespace

PromptVariantSet RuleBasedParaphraser::generate(const Prompt& base, int k, uint64_t seed) {
  if (k < 1) {
    throw std::invalid_argument("paraphrase: k must be at least 1");
  }

  // All non-empty subsets of the four affix transforms, applied in a fixed
  // order, give up to 15 distinct rewrites.
  std::vector<std::string> pool;
  for (unsigned mask = 1; mask < 16; ++mask) {
    std::string text = base.text;
    if (mask & 1u) text = rotate_clauses(text);
    if (mask & 2u) text = restate(text);
    if (mask & 4u) text = politeness(text);
    if (mask & 8u) text = question_suffix(text);
    pool.push_back(std::move(text));
  }

  uint64_t h = util::fnv1a64_u64(seed);
  h = util::fnv1a64(base.text, h);
  util::seeded_shuffle(pool, h);

  const auto base_placeholders = placeholders(base.text);
  PromptVariantSet set;
  set.base = base;
  std::vector<std::string> used{base.text};
  for (const auto& text : pool) {
    if (static_cast<int>(set.variants.size()) >= k) break;
    if (std::find(used.begin(), used.end(), text) != used.end()) continue;
    if (placeholders(text) != base_placeholders) continue;
    used.push_back(text);
    Prompt variant;
    variant.id = base.id + "-v" + std::to_string(set.variants.size() + 1);
    variant.text = text;
    variant.provenance = Provenance::paraphrase_of(base.id);
    set.variants.push_back(std::move(variant));
  }

  if (static_cast<int>(set.variants.size()) < k) {
    throw ParaphraseError("variant-generation-failed: only " +
                          std::to_string(set.variants.size()) + " of " + std::to_string(k) +
                          " rule-based rewrites are available for prompt '" + base.id + "'");
  }
  validate_variant_set(set);
  return set;
}

std::vector<std::string> parse_numbered_lines(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    std::string line =
        text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    start = end == std::string::npos ? text.size() + 1 : end + 1;

    std::string trimmed = util::trim_copy(line);
    if (trimmed.empty()) continue;
    std::size_t i = 0;
    while (i < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[i]))) ++i;
    if (i > 0 && i < trimmed.size() && (trimmed[i] == '.' || trimmed[i] == ')')) {
      trimmed = util::trim_copy(trimmed.substr(i + 1));
    } else if (trimmed.size() > 1 && (trimmed[0] == '-' || trimmed[0] == '*') &&
               trimmed[1] == ' ') {
      trimmed = util::trim_copy(trimmed.substr(2));
    }
    if (!trimmed.empty()) out.push_back(std::move(trimmed));
  }
  return out;
}

PromptVariantSet LlmParaphraser::generate(const Prompt& base, int k, uint64_t seed) {
  if (k < 1) {
    throw std::invalid_argument("paraphrase: k must be at least 1");
  }
  const auto base_placeholders = placeholders(base.text);

  PromptVariantSet set;
  set.base = base;
  std::vector<std::string> used{base.text};
  std::string last_error = "no response";
  bool any_response = false;

  for (int attempt = 0; attempt < max_attempts_; ++attempt) {
    const std::string request = "Instruction:\n" + base.text + "\n\nWrite " + std::to_string(k) +
                                " paraphrases of this instruction.";
    std::string response;
    try {
      response = backend_.complete(std::string(resources::kParaphraseMetaPromptV1), request,
                                   seed + static_cast<uint64_t>(attempt));
      any_response = true;
    } catch (const backend::BackendError& e) {
      last_error = e.what();
      continue;
    }

    for (const auto& line : parse_numbered_lines(response)) {
      if (static_cast<int>(set.variants.size()) >= k) break;
      if (std::find(used.begin(), used.end(), line) != used.end()) continue;
      if (placeholders(line) != base_placeholders) continue;
      used.push_back(line);
      Prompt variant;
      variant.id = base.id + "-v" + std::to_string(set.variants.size() + 1);
      variant.text = line;
      variant.provenance = Provenance::paraphrase_of(base.id);
      set.variants.push_back(std::move(variant));
    }
    if (static_cast<int>(set.variants.size()) >= k) {
      validate_variant_set(set);
      return set;
    }
    last_error = "collected " + std::to_string(set.variants.size()) + " valid paraphrase(s)";
  }
  // A backend that never produced any text is a transport failure, not a
  // paraphrasing one; keep its error class so callers can tell them apart.
  if (!any_response) {
    throw backend::BackendError(last_error);
  }
  throw ParaphraseError("variant-generation-failed: " + std::to_string(max_attempts_) +
                        " attempt(s) produced fewer than " + std::to_string(k) +
                        " valid paraphrases for prompt '" + base.id + "' (" + last_error + ")");
}

PromptVariantSet load_variants(const std::string& path) { return load_variant_file(path); }

}  // namespace promptstab::paraphrase

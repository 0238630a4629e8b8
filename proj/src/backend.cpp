#include "promptstab/backend.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include <json.hpp>

#include "promptstab/http_backend.hpp"
#include "promptstab/mock_backend.hpp"
#include "promptstab/util.hpp"

namespace promptstab::backend {

using nlohmann::json;

void validate_mock_params(const MockParams& params) {
  if (!(params.quality_scale > 0.0)) {
    throw std::invalid_argument("mock params: quality_scale must be positive");
  }
  if (!(params.difficulty_scale >= 0.0)) {
    throw std::invalid_argument("mock params: difficulty_scale must be non-negative");
  }
  if (!(params.instability_scale >= 0.0 && params.instability_scale <= 1.0)) {
    throw std::invalid_argument("mock params: instability_scale must lie in [0, 1]");
  }
  for (const auto* list : {&params.good_tokens, &params.stable_tokens}) {
    for (const auto& token : *list) {
      if (util::trim_copy(token).empty()) {
        throw std::invalid_argument("mock params: token lists must not contain blank entries");
      }
    }
  }
}

void to_json(json& j, const MockParams& v) {
  j = json{{"quality_scale", v.quality_scale},
           {"difficulty_scale", v.difficulty_scale},
           {"instability_scale", v.instability_scale},
           {"good_tokens", v.good_tokens},
           {"stable_tokens", v.stable_tokens}};
}

void from_json(const json& j, MockParams& v) {
  MockParams defaults;
  v.quality_scale = j.value("quality_scale", defaults.quality_scale);
  v.difficulty_scale = j.value("difficulty_scale", defaults.difficulty_scale);
  v.instability_scale = j.value("instability_scale", defaults.instability_scale);
  v.good_tokens = j.value("good_tokens", defaults.good_tokens);
  v.stable_tokens = j.value("stable_tokens", defaults.stable_tokens);
}

void validate_backend_config(const BackendConfig& config) {
  if (config.kind == BackendKind::Http) {
    if (!config.endpoint_url || util::trim_copy(*config.endpoint_url).empty()) {
      throw std::invalid_argument("backend config: http backend requires an endpoint URL");
    }
  } else {
    if (!config.seed) {
      throw std::invalid_argument("backend config: mock backend requires a seed");
    }
    if (config.mock_params) {
      validate_mock_params(*config.mock_params);
    }
  }
  if (util::trim_copy(config.model_name).empty()) {
    throw std::invalid_argument("backend config: model name must be non-empty");
  }
  if (config.max_retries < 0) {
    throw std::invalid_argument("backend config: max_retries must be non-negative");
  }
  if (config.concurrency < 1) {
    throw std::invalid_argument("backend config: concurrency must be at least 1");
  }
  if (config.timeout.count() <= 0) {
    throw std::invalid_argument("backend config: timeout must be positive");
  }
}

std::string ModelBackend::complete(const std::string&, const std::string&, uint64_t) {
  throw BackendError("backend-unavailable: this backend does not generate free text");
}

std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config) {
  validate_backend_config(config);
  if (config.kind == BackendKind::Mock) {
    MockParams params = config.mock_params.value_or(MockParams{});
    return std::make_unique<MockBackend>(std::move(params), *config.seed, config.wants_probs);
  }
  return std::make_unique<HttpBackend>(config);
}

namespace {

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0; }

// Whole-word, case-insensitive containment of needle in haystack.
bool contains_word(const std::string& haystack_lower, const std::string& needle_lower) {
  if (needle_lower.empty()) return false;
  std::size_t pos = 0;
  while ((pos = haystack_lower.find(needle_lower, pos)) != std::string::npos) {
    const bool left_ok = pos == 0 || !is_word_char(haystack_lower[pos - 1]);
    const std::size_t end = pos + needle_lower.size();
    const bool right_ok = end >= haystack_lower.size() || !is_word_char(haystack_lower[end]);
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

}  // namespace

std::optional<std::string> extract_label(std::string_view raw_output,
                                         const std::vector<std::string>& label_set) {
  const std::string trimmed = util::trim_copy(std::string(raw_output));
  if (trimmed.empty()) return std::nullopt;

  for (const auto& label : label_set) {
    if (util::trim_copy(label) == trimmed) return label;
  }

  const std::string trimmed_lower = util::to_lower(trimmed);
  for (const auto& label : label_set) {
    if (util::to_lower(util::trim_copy(label)) == trimmed_lower) return label;
  }

  std::optional<std::string> unique_hit;
  for (const auto& label : label_set) {
    const std::string needle = util::to_lower(util::trim_copy(label));
    if (contains_word(trimmed_lower, needle)) {
      if (unique_hit) return std::nullopt;  // ambiguous
      unique_hit = label;
    }
  }
  return unique_hit;
}

std::map<std::string, double> softmax_over_scores(const std::map<std::string, double>& scores) {
  if (scores.empty()) {
    throw std::invalid_argument("softmax_over_scores: empty score map");
  }
  double max_score = -std::numeric_limits<double>::infinity();
  for (const auto& [_, s] : scores) max_score = std::max(max_score, s);
  std::map<std::string, double> out;
  double total = 0.0;
  for (const auto& [label, s] : scores) {
    const double e = std::exp(s - max_score);
    out[label] = e;
    total += e;
  }
  for (auto& [_, p] : out) p /= total;
  return out;
}

std::string cache_digest(const std::string& model_name, const std::string& prompt_text,
                         const std::string& rendered_input, bool wants_probs, double temperature) {
  char temp_buf[40];
  std::snprintf(temp_buf, sizeof(temp_buf), "%.17g", temperature);
  // Length-prefixed fields so distinct tuples never collide by concatenation.
  uint64_t h = util::kFnvOffset;
  auto feed = [&h](std::string_view field) {
    h = util::fnv1a64_u64(field.size(), h);
    h = util::fnv1a64(field, h);
  };
  feed(model_name);
  feed(prompt_text);
  feed(rendered_input);
  feed(wants_probs ? "probs" : "label");
  feed(temp_buf);
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

std::vector<BatchItem> predict_batch(ModelBackend& backend, const Task& task, const Prompt& prompt,
                                     const std::vector<Example>& examples, int concurrency) {
  if (concurrency < 1) {
    throw std::invalid_argument("predict_batch: concurrency must be at least 1");
  }
  std::vector<BatchItem> items(examples.size());
  if (examples.empty()) return items;

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= examples.size()) break;
      try {
        items[i].prediction = backend.predict(task, prompt, examples[i]);
      } catch (const InvalidOutputError& e) {
        items[i].error_kind = PredictErrorKind::InvalidOutput;
        items[i].error = e.what();
      } catch (const BackendError& e) {
        items[i].error_kind = PredictErrorKind::BackendUnavailable;
        items[i].error = e.what();
      } catch (const std::exception& e) {
        items[i].error_kind = PredictErrorKind::BackendUnavailable;
        items[i].error = std::string("backend-unavailable: ") + e.what();
      }
    }
  };

  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(concurrency), examples.size());
  if (n_threads <= 1) {
    worker();
    return items;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return items;
}

}  // namespace promptstab::backend

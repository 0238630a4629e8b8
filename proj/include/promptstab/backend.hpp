#pragma once
// Uniform contract for obtaining a Prediction from (prompt, example):
// configuration, error types, label extraction from free text, and the
// batch driver. Concrete backends live in mock_backend.hpp / http_backend.hpp.

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptstab/domain.hpp"

namespace promptstab::backend {

enum class BackendKind { Http, Mock };

// Scenario configuration for the planted mock model. quality_scale (a) and
// difficulty_scale (b) shape the gold-label logit a*q(P) - b*d(x);
// instability_scale (c) in [0,1] scales the deterministic paraphrase noise.
// The token lists define which prompt words raise the planted quality and
// stability scores.
struct MockParams {
  double quality_scale = 4.0;
  double difficulty_scale = 2.0;
  double instability_scale = 0.8;
  std::vector<std::string> good_tokens{"thorough", "grounded", "specific"};
  std::vector<std::string> stable_tokens{"consistent", "measured", "steady"};
};

void validate_mock_params(const MockParams& params);

void to_json(nlohmann::json& j, const MockParams& v);
void from_json(const nlohmann::json& j, MockParams& v);

struct BackendConfig {
  BackendKind kind = BackendKind::Mock;
  std::optional<std::string> endpoint_url;  // required for http
  std::string model_name = "mock-classifier";
  bool wants_probs = true;
  double temperature = 0.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{30000};
  std::optional<uint64_t> seed;  // required for mock
  std::optional<MockParams> mock_params;
  std::string cache_dir;  // empty disables the inference cache
  int concurrency = 1;
  std::string api_token_env = "PROMPTSTAB_API_TOKEN";
};

void validate_backend_config(const BackendConfig& config);

// Transport failure that survived the retry policy.
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model output that no extraction rule could map to a label.
struct InvalidOutputError : std::runtime_error {
  InvalidOutputError(std::string example_id_, std::string raw_output_, const std::string& reason)
      : std::runtime_error("invalid-output(" + example_id_ + "): " + reason),
        example_id(std::move(example_id_)),
        raw_output(std::move(raw_output_)) {}
  std::string example_id;
  std::string raw_output;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  // Returns a Prediction satisfying all Prediction invariants. Throws
  // BackendError or InvalidOutputError. Safe to call concurrently.
  virtual Prediction predict(const Task& task, const Prompt& prompt, const Example& example) = 0;

  // Free-text generation for paraphrasing and candidate writing. Backends
  // that only classify throw BackendError.
  virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                               uint64_t seed);
};

std::unique_ptr<ModelBackend> make_backend(const BackendConfig& config);

// Maps free text to a label: (1) exact match after trimming, (2)
// case-insensitive exact match, (3) unique label appearing as a whole word.
// nullopt when no rule matches or rule 3 is ambiguous; empty output never
// maps to a label.
std::optional<std::string> extract_label(std::string_view raw_output,
                                         const std::vector<std::string>& label_set);

// Softmax over per-label scores, numerically stabilized.
std::map<std::string, double> softmax_over_scores(const std::map<std::string, double>& scores);

// Content digest for the inference cache: identical inputs produce identical
// digests across runs and platforms.
std::string cache_digest(const std::string& model_name, const std::string& prompt_text,
                         const std::string& rendered_input, bool wants_probs, double temperature);

enum class PredictErrorKind { None, BackendUnavailable, InvalidOutput };

struct BatchItem {
  std::optional<Prediction> prediction;
  PredictErrorKind error_kind = PredictErrorKind::None;
  std::string error;

  bool ok() const { return error_kind == PredictErrorKind::None; }
};

// Element i corresponds to examples[i]; results are identical to sequential
// predict calls regardless of concurrency; per-example failures are reported
// in place without aborting the batch.
std::vector<BatchItem> predict_batch(ModelBackend& backend, const Task& task, const Prompt& prompt,
                                     const std::vector<Example>& examples, int concurrency = 1);

}  // namespace promptstab::backend

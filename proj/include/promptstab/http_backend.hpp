#pragma once
// Chat-completions HTTP backend with retry, optional logprob-based label
// probabilities, request de-duplication, and an optional persistent cache.

#include <memory>
#include <string>

#include "promptstab/backend.hpp"

namespace promptstab::backend {

struct EndpointParts {
  std::string base;  // scheme://host[:port]
  std::string path;  // defaults to /v1/chat/completions
};

// Splits an endpoint URL into the client base and request path.
EndpointParts parse_endpoint(const std::string& url);

class HttpBackend final : public ModelBackend {
 public:
  explicit HttpBackend(BackendConfig config);
  ~HttpBackend() override;

  Prediction predict(const Task& task, const Prompt& prompt, const Example& example) override;
  std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                       uint64_t seed) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace promptstab::backend

#include "promptstab/http_backend.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <future>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "promptstab/cache.hpp"
#include "promptstab/util.hpp"

namespace promptstab::backend {

using nlohmann::json;

EndpointParts parse_endpoint(const std::string& url) {
  std::string normalized = util::trim_copy(url);
  if (normalized.find("://") == std::string::npos) {
    normalized = "http://" + normalized;
  }
  const std::size_t scheme_end = normalized.find("://") + 3;
  const std::size_t slash = normalized.find('/', scheme_end);
  EndpointParts parts;
  if (slash == std::string::npos) {
    parts.base = normalized;
    parts.path = "/v1/chat/completions";
  } else {
    parts.base = normalized.substr(0, slash);
    parts.path = normalized.substr(slash);
  }
  return parts;
}

namespace {

// Plain counting semaphore bounding concurrent outbound requests.
class Limiter {
 public:
  explicit Limiter(int slots) : free_(slots) {}
  void acquire() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
};

struct LimiterGuard {
  explicit LimiterGuard(Limiter& l) : limiter(l) { limiter.acquire(); }
  ~LimiterGuard() { limiter.release(); }
  Limiter& limiter;
};

std::string truncate_for_error(const std::string& s, std::size_t limit = 200) {
  if (s.size() <= limit) return s;
  return s.substr(0, limit) + "...";
}

}  // namespace

struct HttpBackend::Impl {
  explicit Impl(BackendConfig cfg)
      : config(std::move(cfg)),
        endpoint(parse_endpoint(*config.endpoint_url)),
        limiter(config.concurrency) {
    if (const char* token = std::getenv(config.api_token_env.c_str())) {
      auth_token = token;
    }
    if (!config.cache_dir.empty()) {
      cache.emplace(config.cache_dir);
    }
  }

  json post_json(const json& body) {
    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      if (attempt > 0) {
        const auto backoff =
            std::min(std::chrono::milliseconds(100) * (1 << (attempt - 1)),
                     std::chrono::milliseconds(2000));
        std::this_thread::sleep_for(backoff);
      }
      httplib::Client client(endpoint.base);
      client.set_connection_timeout(config.timeout);
      client.set_read_timeout(config.timeout);
      client.set_write_timeout(config.timeout);
      httplib::Headers headers;
      if (!auth_token.empty()) {
        headers.emplace("Authorization", "Bearer " + auth_token);
      }
      auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "connection error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        try {
          return json::parse(res->body);
        } catch (const json::exception& e) {
          last_error = std::string("malformed response body: ") + e.what();
          continue;  // truncated or garbled body; worth another attempt
        }
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status) + ": " + truncate_for_error(res->body);
        continue;
      }
      throw BackendError("backend-unavailable: HTTP " + std::to_string(res->status) + " from " +
                         endpoint.base + endpoint.path + ": " + truncate_for_error(res->body));
    }
    throw BackendError("backend-unavailable: " + std::to_string(config.max_retries + 1) +
                       " attempt(s) failed; last error: " + last_error);
  }

  static std::string response_text(const json& response) {
    if (response.contains("choices") && response["choices"].is_array() &&
        !response["choices"].empty()) {
      const json& choice = response["choices"][0];
      if (choice.contains("message") && choice["message"].contains("content") &&
          choice["message"]["content"].is_string()) {
        return choice["message"]["content"].get<std::string>();
      }
      if (choice.contains("text") && choice["text"].is_string()) {
        return choice["text"].get<std::string>();
      }
    }
    throw BackendError("backend-unavailable: response carries no completion text: " +
                       truncate_for_error(response.dump()));
  }

  // Per-label log-scores from the first generated token's top alternatives;
  // nullopt unless every task label is present among them.
  static std::optional<std::map<std::string, double>> label_scores(
      const json& response, const std::vector<std::string>& label_set) {
    if (!response.contains("choices") || response["choices"].empty()) return std::nullopt;
    const json& choice = response["choices"][0];
    if (!choice.contains("logprobs")) return std::nullopt;
    const json& lp = choice["logprobs"];
    if (!lp.contains("content") || !lp["content"].is_array() || lp["content"].empty()) {
      return std::nullopt;
    }
    const json& first = lp["content"][0];
    if (!first.contains("top_logprobs") || !first["top_logprobs"].is_array()) return std::nullopt;

    std::map<std::string, double> scores;
    for (const auto& label : label_set) {
      const std::string want = util::to_lower(util::trim_copy(label));
      std::optional<double> best;
      for (const auto& entry : first["top_logprobs"]) {
        if (!entry.contains("token") || !entry.contains("logprob")) continue;
        const std::string token =
            util::to_lower(util::trim_copy(entry["token"].get<std::string>()));
        if (token != want) continue;
        const double v = entry["logprob"].get<double>();
        if (!best || v > *best) best = v;
      }
      if (!best) return std::nullopt;
      scores[label] = *best;
    }
    return scores;
  }

  Prediction predict_remote(const Task& task, const Prompt& prompt, const Example& example) {
    const std::string rendered = render_prompt(prompt, example);
    json body{{"model", config.model_name},
              {"messages", json::array({json{{"role", "user"}, {"content", rendered}}})},
              {"temperature", config.temperature},
              {"max_tokens", 64}};
    if (config.wants_probs) {
      body["logprobs"] = true;
      body["top_logprobs"] = 20;
    }

    json response;
    {
      LimiterGuard guard(limiter);
      response = post_json(body);
    }
    const std::string text = response_text(response);

    if (config.wants_probs) {
      if (auto scores = label_scores(response, task.label_set)) {
        return Prediction::from_probs(task, softmax_over_scores(*scores), text);
      }
      // Logprobs missing or not label-shaped: degrade to label-only.
    }
    if (auto label = extract_label(text, task.label_set)) {
      return Prediction::from_label(task, *label, text);
    }
    throw InvalidOutputError(example.id, text,
                             "no label extraction rule matched: " + truncate_for_error(text));
  }

  Prediction predict(const Task& task, const Prompt& prompt, const Example& example) {
    const std::string digest = cache_digest(config.model_name, prompt.text,
                                            render_prompt(prompt, example), config.wants_probs,
                                            config.temperature);
    // Deterministic requests (temperature 0) are cacheable; retried sampling
    // requests are not, so they are never stored.
    const bool cacheable = cache && config.temperature == 0.0;
    if (cacheable) {
      if (auto hit = cache->get(digest)) return *hit;
    }

    // De-duplicate identical requests in flight across worker threads.
    std::shared_future<Prediction> fut;
    bool leader = false;
    {
      std::lock_guard<std::mutex> lock(inflight_mu);
      auto it = inflight.find(digest);
      if (it != inflight.end()) {
        fut = it->second;
      } else {
        std::promise<Prediction> promise;
        fut = promise.get_future().share();
        inflight.emplace(digest, fut);
        pending.emplace(digest, std::move(promise));
        leader = true;
      }
    }
    if (!leader) return fut.get();

    try {
      Prediction prediction = predict_remote(task, prompt, example);
      if (cacheable) cache->put(digest, prediction);
      settle(digest, [&](std::promise<Prediction>& p) { p.set_value(prediction); });
      return prediction;
    } catch (...) {
      auto eptr = std::current_exception();
      settle(digest, [&](std::promise<Prediction>& p) { p.set_exception(eptr); });
      std::rethrow_exception(eptr);
    }
  }

  template <typename Fn>
  void settle(const std::string& digest, Fn&& fn) {
    std::lock_guard<std::mutex> lock(inflight_mu);
    auto it = pending.find(digest);
    if (it != pending.end()) {
      fn(it->second);
      pending.erase(it);
    }
    inflight.erase(digest);
  }

  std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                       uint64_t seed) {
    json body{{"model", config.model_name},
              {"messages",
               json::array({json{{"role", "system"}, {"content", system_prompt}},
                            json{{"role", "user"}, {"content", user_prompt}}})},
              {"temperature", config.temperature},
              {"max_tokens", 2048},
              {"seed", seed}};
    LimiterGuard guard(limiter);
    return response_text(post_json(body));
  }

  BackendConfig config;
  EndpointParts endpoint;
  std::string auth_token;
  std::optional<PredictionCache> cache;
  Limiter limiter;
  std::mutex inflight_mu;
  std::unordered_map<std::string, std::shared_future<Prediction>> inflight;
  std::unordered_map<std::string, std::promise<Prediction>> pending;
};

HttpBackend::HttpBackend(BackendConfig config) {
  validate_backend_config(config);  // before Impl dereferences endpoint_url
  impl_ = std::make_unique<Impl>(std::move(config));
}

HttpBackend::~HttpBackend() = default;

Prediction HttpBackend::predict(const Task& task, const Prompt& prompt, const Example& example) {
  return impl_->predict(task, prompt, example);
}

std::string HttpBackend::complete(const std::string& system_prompt, const std::string& user_prompt,
                                  uint64_t seed) {
  return impl_->complete(system_prompt, user_prompt, seed);
}

}  // namespace promptstab::backend

#pragma once

// Chat completion gateway: a thread-safe client for OpenAI-compatible
// /v1/chat/completions endpoints with bounded concurrency, exponential
// backoff on transient failures, and request accounting.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ictforge/common.hpp"

namespace ictforge::gateway {

/// Raised when a completion request fails for good. `status` is the HTTP
/// status code, or 0 for transport-level failures.
class GatewayError : public std::runtime_error {
 public:
  GatewayError(int status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ChatMessage {
  std::string role;  // "system", "user", or "assistant"
  std::string content;
  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatOptions {
  std::string model = "default";
  double temperature = 0.7;
  int max_tokens = 1024;
};

struct GatewayConfig {
  std::string base_url;                       // e.g. "http://127.0.0.1:8000"
  std::string api_key_env = "ICT_FORGE_API_KEY";
  int connect_timeout_s = 10;
  int read_timeout_s = 120;
  unsigned max_retries = 3;                   // retries after the first attempt
  unsigned backoff_base_ms = 1000;
  double backoff_factor = 2.0;
  double backoff_jitter = 0.2;                // +/- fraction of the delay
  unsigned max_in_flight = 4;
};

struct RequestStats {
  std::uint64_t requests = 0;  // logical complete() calls
  std::uint64_t attempts = 0;  // HTTP requests issued, including retries
  std::uint64_t retries = 0;
  std::uint64_t failures = 0;  // calls that exhausted their retries
};

/// Anything that can turn a message list into an assistant reply. Lets the
/// orchestration layers run against stubs in tests.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages,
                               const ChatOptions& options) = 0;
};

class ChatClient final : public ChatBackend {
 public:
  explicit ChatClient(GatewayConfig config)
      : config_(std::move(config)),
        in_flight_(static_cast<std::ptrdiff_t>(config_.max_in_flight)),
        jitter_rng_(0x1CEB00DAu) {
    if (config_.base_url.empty()) throw ConfigError("gateway: base_url is required");
    if (config_.max_in_flight == 0) throw ConfigError("gateway: max_in_flight must be >= 1");
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr)
      api_key_ = key;
  }

  const GatewayConfig& config() const { return config_; }

  RequestStats stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
  }

  std::string complete(const std::vector<ChatMessage>& messages,
                       const ChatOptions& options) override {
    bump([](RequestStats& s) { ++s.requests; });
    in_flight_.acquire();
    struct Release {
      std::counting_semaphore<>* sem;
      ~Release() { sem->release(); }
    } release{&in_flight_};

    const std::string body = build_body(messages, options);
    std::string last_error;
    for (unsigned attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) {
        bump([](RequestStats& s) { ++s.retries; });
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms(attempt)));
      }
      bump([](RequestStats& s) { ++s.attempts; });

      httplib::Client http(config_.base_url);
      http.set_connection_timeout(config_.connect_timeout_s, 0);
      http.set_read_timeout(config_.read_timeout_s, 0);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

      httplib::Result res =
          http.Post("/v1/chat/completions", headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;  // retryable
      }
      if (res->status >= 500) {
        last_error = "server error: HTTP " + std::to_string(res->status);
        continue;  // retryable
      }
      if (res->status != 200) {
        bump([](RequestStats& s) { ++s.failures; });
        throw GatewayError(res->status, "gateway: HTTP " + std::to_string(res->status) +
                                            " from " + config_.base_url);
      }
      return extract_content(res->body);
    }
    bump([](RequestStats& s) { ++s.failures; });
    throw GatewayError(0, "gateway: retries exhausted against " + config_.base_url + " (" +
                              last_error + ")");
  }

 private:
  std::string build_body(const std::vector<ChatMessage>& messages,
                         const ChatOptions& options) const {
    nlohmann::json payload;
    payload["model"] = options.model;
    payload["temperature"] = options.temperature;
    payload["max_tokens"] = options.max_tokens;
    payload["messages"] = nlohmann::json::array();
    for (const ChatMessage& m : messages)
      payload["messages"].push_back({{"role", m.role}, {"content", m.content}});
    return payload.dump();
  }

  std::string extract_content(const std::string& body) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception&) {
      bump([](RequestStats& s) { ++s.failures; });
      throw GatewayError(200, "gateway: response is not valid JSON");
    }
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty() ||
        !doc["choices"][0].contains("message") ||
        !doc["choices"][0]["message"].contains("content") ||
        !doc["choices"][0]["message"]["content"].is_string()) {
      bump([](RequestStats& s) { ++s.failures; });
      throw GatewayError(200, "gateway: response missing choices[0].message.content");
    }
    return doc["choices"][0]["message"]["content"].get<std::string>();
  }

  /// Exponential backoff with symmetric jitter: base * factor^(attempt-1),
  /// scaled by a uniform draw from [1-jitter, 1+jitter].
  std::uint64_t backoff_ms(unsigned attempt) {
    double delay = static_cast<double>(config_.backoff_base_ms);
    for (unsigned i = 1; i < attempt; ++i) delay *= config_.backoff_factor;
    double scale = 1.0;
    {
      std::lock_guard lock(stats_mutex_);
      std::uniform_real_distribution<double> dist(1.0 - config_.backoff_jitter,
                                                  1.0 + config_.backoff_jitter);
      scale = dist(jitter_rng_);
    }
    const double jittered = delay * scale;
    return jittered <= 0.0 ? 0 : static_cast<std::uint64_t>(jittered);
  }

  template <typename F>
  void bump(F mutate) {
    std::lock_guard lock(stats_mutex_);
    mutate(stats_);
  }

  GatewayConfig config_;
  std::string api_key_;
  std::counting_semaphore<> in_flight_;
  mutable std::mutex stats_mutex_;
  RequestStats stats_;
  std::mt19937 jitter_rng_;
};

}  // namespace ictforge::gateway

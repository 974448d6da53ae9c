#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace nrpa_gd {

enum class ChatRole { System, User, Assistant };

std::string_view to_string(ChatRole r);
ChatRole parse_chat_role(std::string_view s);

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_tokens = 256;
  std::optional<std::int64_t> seed;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;

  Usage& operator+=(const Usage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
};

// Raw result of one attempt. status 0 with `timed_out` marks a transport
// level failure (connection refused, timeout).
struct TransportResponse {
  int status = 200;
  std::string text;
  Usage usage;
  std::string error;
  bool timed_out = false;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual TransportResponse send(const ChatRequest& req) = 0;
};

// Request body for POST /v1/chat/completions.
nlohmann::json encode_chat_request(const ChatRequest& req);
// Pulls choices[0].message.content and usage out of a response body.
TransportResponse decode_chat_response(int status, const std::string& body);

class HttpTransport final : public Transport {
 public:
  // `base_url` like "https://api.openai.com" or "http://localhost:8000/v1".
  HttpTransport(std::string base_url, std::string api_key,
                std::chrono::seconds timeout = std::chrono::seconds(60));

  // NRPA_GD_BASE_URL / OPENAI_BASE_URL and NRPA_GD_API_KEY / OPENAI_API_KEY.
  static std::unique_ptr<HttpTransport> from_environment();

  TransportResponse send(const ChatRequest& req) override;

  const std::string& endpoint_host() const { return host_; }
  const std::string& endpoint_path() const { return path_; }

 private:
  std::string host_;  // scheme://host[:port]
  std::string path_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

class MockTransport final : public Transport {
 public:
  using Handler = std::function<TransportResponse(const ChatRequest&)>;

  explicit MockTransport(Handler handler) : handler_(std::move(handler)) {}
  // Always answers `reply` with status 200.
  static std::shared_ptr<MockTransport> canned(std::string reply);

  TransportResponse send(const ChatRequest& req) override {
    ++calls_;
    return handler_(req);
  }
  long calls() const { return calls_.load(); }

 private:
  Handler handler_;
  std::atomic<long> calls_{0};
};

// Stable hex digest of (model, whitespace-normalized messages, temperature, seed).
std::string cache_key(const ChatRequest& req);

// Concurrent key -> completion map, optionally backed by an append-only
// JSON-lines file so later runs start warm.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path file);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& text);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
  std::optional<std::filesystem::path> file_;
  std::mutex file_mu_;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{8000};

  static RetryPolicy from_json(const nlohmann::json& j);
};

struct Completion {
  std::string text;
  Usage usage;
  bool from_cache = false;
};

class LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  LlmClient(std::shared_ptr<Transport> transport, RetryPolicy retry = {},
            std::shared_ptr<ResponseCache> cache = nullptr, int max_in_flight = 8,
            Sleeper sleeper = {});

  // Cache hit: no traffic and usage unchanged. Otherwise retries 429/5xx and
  // timeouts with exponential backoff; other 4xx raise ConfigError and an
  // exhausted retry budget raises TransportError.
  Completion complete(const ChatRequest& req);

  Usage total_usage() const;
  long network_attempts() const { return attempts_.load(); }
  long cache_hits() const { return cache_hits_.load(); }

 private:
  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
  std::shared_ptr<ResponseCache> cache_;
  std::counting_semaphore<1024> in_flight_;
  Sleeper sleeper_;

  mutable std::mutex usage_mu_;
  Usage usage_;
  std::atomic<long> attempts_{0};
  std::atomic<long> cache_hits_{0};
};

}  // namespace nrpa_gd

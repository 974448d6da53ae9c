#include "nrpa_gd/llm_client.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

std::string_view to_string(ChatRole r) {
  switch (r) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "?";
}

ChatRole parse_chat_role(std::string_view s) {
  if (s == "system") return ChatRole::System;
  if (s == "user") return ChatRole::User;
  if (s == "assistant") return ChatRole::Assistant;
  throw ConfigError("unknown chat role '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Wire format

nlohmann::json encode_chat_request(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  nlohmann::json body = {{"model", req.model},
                         {"messages", std::move(messages)},
                         {"temperature", req.temperature},
                         {"max_tokens", req.max_tokens}};
  if (req.seed) body["seed"] = *req.seed;
  return body;
}

TransportResponse decode_chat_response(int status, const std::string& body) {
  TransportResponse out;
  out.status = status;
  if (status != 200) {
    out.error = body.substr(0, 512);
    return out;
  }
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
    if (j.contains("usage") && j.at("usage").is_object()) {
      out.usage.prompt_tokens = j.at("usage").value("prompt_tokens", 0L);
      out.usage.completion_tokens = j.at("usage").value("completion_tokens", 0L);
    }
  } catch (const nlohmann::json::exception& e) {
    // A 200 without a usable body is treated like a server fault.
    out.status = 502;
    out.error = std::string("malformed completion body: ") + e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// HttpTransport

HttpTransport::HttpTransport(std::string base_url, std::string api_key,
                             std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base URL needs a scheme: " + base_url);
  const auto path_start = base_url.find('/', scheme_end + 3);
  host_ = base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : base_url.substr(path_start);
  const bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
  path_ = prefix + (has_v1 ? "/chat/completions" : "/v1/chat/completions");
}

std::unique_ptr<HttpTransport> HttpTransport::from_environment() {
  auto env = [](const char* a, const char* b) -> std::string {
    if (const char* v = std::getenv(a)) return v;
    if (const char* v = std::getenv(b)) return v;
    return {};
  };
  std::string base = env("NRPA_GD_BASE_URL", "OPENAI_BASE_URL");
  if (base.empty()) base = "https://api.openai.com";
  std::string key = env("NRPA_GD_API_KEY", "OPENAI_API_KEY");
  return std::make_unique<HttpTransport>(std::move(base), std::move(key));
}

TransportResponse HttpTransport::send(const ChatRequest& req) {
  httplib::Client client(host_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path_, headers, encode_chat_request(req).dump(), "application/json");
  if (!res) {
    TransportResponse out;
    out.status = 0;
    out.timed_out = true;
    out.error = httplib::to_string(res.error());
    return out;
  }
  return decode_chat_response(res->status, res->body);
}

std::shared_ptr<MockTransport> MockTransport::canned(std::string reply) {
  return std::make_shared<MockTransport>([reply = std::move(reply)](const ChatRequest&) {
    TransportResponse r;
    r.text = reply;
    r.usage = {10, 5};
    return r;
  });
}

// ---------------------------------------------------------------------------
// Cache

namespace {

std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

}  // namespace

std::string cache_key(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    messages.push_back(
        {{"content", normalize_whitespace(m.content)}, {"role", std::string(to_string(m.role))}});
  }
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.6f", req.temperature);
  nlohmann::json canonical = {{"messages", std::move(messages)},
                              {"model", req.model},
                              {"temperature", temp},
                              {"seed", req.seed ? nlohmann::json(*req.seed) : nlohmann::json()}};
  return sha256_hex(canonical.dump());
}

ResponseCache::ResponseCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_[j.at("key").get<std::string>()] = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // A torn final line from an interrupted run is skipped.
    }
  }
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mu_);
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

void ResponseCache::put(const std::string& key, const std::string& text) {
  {
    std::unique_lock lock(mu_);
    if (!entries_.emplace(key, text).second) return;
  }
  if (file_) {
    std::lock_guard lock(file_mu_);
    if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
    std::ofstream out(*file_, std::ios::app);
    out << nlohmann::json{{"key", key}, {"text", text}}.dump() << '\n';
  }
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------
// Client

RetryPolicy RetryPolicy::from_json(const nlohmann::json& j) {
  RetryPolicy r;
  r.max_attempts = j.value("max_attempts", r.max_attempts);
  r.base_delay = std::chrono::milliseconds(j.value("base_delay_ms", r.base_delay.count()));
  r.multiplier = j.value("multiplier", r.multiplier);
  r.max_delay = std::chrono::milliseconds(j.value("max_delay_ms", r.max_delay.count()));
  if (r.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
  return r;
}

LlmClient::LlmClient(std::shared_ptr<Transport> transport, RetryPolicy retry,
                     std::shared_ptr<ResponseCache> cache, int max_in_flight, Sleeper sleeper)
    : transport_(std::move(transport)),
      retry_(retry),
      cache_(std::move(cache)),
      in_flight_(std::clamp(max_in_flight, 1, 1024)),
      sleeper_(std::move(sleeper)) {
  if (!transport_) throw ConfigError("LLM client needs a transport");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

Completion LlmClient::complete(const ChatRequest& req) {
  if (req.messages.empty()) throw PreconditionError("chat request without messages");

  std::string key;
  if (cache_) {
    key = cache_key(req);
    if (auto hit = cache_->get(key)) {
      ++cache_hits_;
      return Completion{*hit, {}, true};
    }
  }

  auto delay = retry_.base_delay;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    TransportResponse res;
    {
      in_flight_.acquire();
      ++attempts_;
      try {
        res = transport_->send(req);
      } catch (...) {
        in_flight_.release();
        throw;
      }
      in_flight_.release();
    }

    if (res.status == 200) {
      {
        std::lock_guard lock(usage_mu_);
        usage_ += res.usage;
      }
      if (cache_) cache_->put(key, res.text);
      return Completion{std::move(res.text), res.usage, false};
    }

    const bool retryable = res.timed_out || res.status == 0 || res.status == 429 ||
                           (res.status >= 500 && res.status < 600);
    if (!retryable) {
      throw ConfigError("chat completion rejected with HTTP " + std::to_string(res.status) + ": " +
                        res.error);
    }
    last_error = res.timed_out ? "transport failure: " + res.error
                               : "HTTP " + std::to_string(res.status) + ": " + res.error;
    if (attempt < retry_.max_attempts) {
      sleeper_(delay);
      delay = std::min(retry_.max_delay, std::chrono::milliseconds(static_cast<long>(
                                             static_cast<double>(delay.count()) * retry_.multiplier)));
    }
  }
  throw TransportError("chat completion failed after " + std::to_string(retry_.max_attempts) +
                       " attempts: " + last_error);
}

Usage LlmClient::total_usage() const {
  std::lock_guard lock(usage_mu_);
  return usage_;
}

}  // namespace nrpa_gd

#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "nrpa_gd/llm_client.hpp"
#include "support.hpp"

using namespace nrpa_gd;
using namespace nrpa_gd::testing;

namespace {

ChatRequest simple_request(std::string text = "hello") {
  ChatRequest r;
  r.model = "m";
  r.messages = {{ChatRole::System, "be brief"}, {ChatRole::User, std::move(text)}};
  r.temperature = 0.7;
  r.seed = 5;
  return r;
}

// Replays a list of statuses, then answers 200 "ok".
std::shared_ptr<MockTransport> scripted_statuses(std::vector<int> statuses) {
  auto idx = std::make_shared<std::size_t>(0);
  return std::make_shared<MockTransport>([statuses, idx](const ChatRequest&) {
    TransportResponse r;
    if (*idx < statuses.size()) {
      r.status = statuses[(*idx)++];
      if (r.status == 0) r.timed_out = true;
      r.error = "scripted";
      return r;
    }
    r.text = "ok";
    r.usage = {7, 3};
    return r;
  });
}

}  // namespace

TEST(WireFormat, EncodesOpenAiRequestShape) {
  const auto j = encode_chat_request(simple_request());
  EXPECT_EQ(j["model"], "m");
  EXPECT_EQ(j["messages"][0]["role"], "system");
  EXPECT_EQ(j["messages"][1]["content"], "hello");
  EXPECT_EQ(j["max_tokens"], 256);
  EXPECT_EQ(j["seed"], 5);
  ChatRequest no_seed = simple_request();
  no_seed.seed.reset();
  EXPECT_FALSE(encode_chat_request(no_seed).contains("seed"));
}

TEST(WireFormat, DecodesContentAndUsage) {
  const std::string body =
      R"({"choices":[{"message":{"role":"assistant","content":"Hi there"}}],"usage":{"prompt_tokens":12,"completion_tokens":4}})";
  const auto r = decode_chat_response(200, body);
  EXPECT_EQ(r.status, 200);
  EXPECT_EQ(r.text, "Hi there");
  EXPECT_EQ(r.usage.prompt_tokens, 12);
  EXPECT_EQ(r.usage.completion_tokens, 4);
}

TEST(WireFormat, MalformedSuccessBodyBecomesServerFault) {
  EXPECT_EQ(decode_chat_response(200, "{}").status, 502);
  EXPECT_EQ(decode_chat_response(200, "not json").status, 502);
  EXPECT_EQ(decode_chat_response(429, "slow down").status, 429);
}

TEST(HttpTransport, EndpointPathFromBaseUrl) {
  HttpTransport a("https://api.openai.com", "");
  EXPECT_EQ(a.endpoint_host(), "https://api.openai.com");
  EXPECT_EQ(a.endpoint_path(), "/v1/chat/completions");
  HttpTransport b("http://localhost:8000/v1/", "");
  EXPECT_EQ(b.endpoint_host(), "http://localhost:8000");
  EXPECT_EQ(b.endpoint_path(), "/v1/chat/completions");
  HttpTransport c("http://proxy:9/openai", "");
  EXPECT_EQ(c.endpoint_path(), "/openai/v1/chat/completions");
  EXPECT_THROW(HttpTransport("localhost:8000", ""), ConfigError);
}

TEST(CacheKey, StableUnderWhitespaceNoise) {
  auto a = simple_request("hello   world\n");
  auto b = simple_request("  hello world");
  EXPECT_EQ(cache_key(a), cache_key(b));
  EXPECT_EQ(cache_key(a).size(), 64u);
}

TEST(CacheKey, SensitiveToModelTemperatureSeedAndRole) {
  const auto base = simple_request();
  auto m = base;
  m.model = "other";
  auto t = base;
  t.temperature = 0.70001;
  auto s = base;
  s.seed = 6;
  auto r = base;
  r.messages[1].role = ChatRole::Assistant;
  for (const auto& v : {m, t, s, r}) EXPECT_NE(cache_key(v), cache_key(base));
}

TEST(LlmClient, CacheHitSkipsTransportAndUsage) {
  auto transport = MockTransport::canned("reply");
  LlmClient client(transport, {}, std::make_shared<ResponseCache>());
  const auto first = client.complete(simple_request());
  EXPECT_FALSE(first.from_cache);
  const auto usage = client.total_usage();
  const auto second = client.complete(simple_request());
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(second.text, "reply");
  EXPECT_EQ(transport->calls(), 1);
  EXPECT_EQ(client.total_usage().prompt_tokens, usage.prompt_tokens);
  EXPECT_EQ(client.cache_hits(), 1);
}

TEST(LlmClient, RetriesWithExponentialBackoff) {
  std::vector<long> sleeps;
  RetryPolicy retry;
  retry.max_attempts = 5;
  LlmClient client(scripted_statuses({429, 503, 0}), retry, nullptr, 4,
                   [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  EXPECT_EQ(client.complete(simple_request()).text, "ok");
  EXPECT_EQ(client.network_attempts(), 4);
  EXPECT_EQ(sleeps, (std::vector<long>{500, 1000, 2000}));
}

TEST(LlmClient, BackoffIsCapped) {
  std::vector<long> sleeps;
  RetryPolicy retry;
  retry.max_attempts = 7;
  retry.max_delay = std::chrono::milliseconds(1500);
  LlmClient client(scripted_statuses({500, 500, 500, 500}), retry, nullptr, 4,
                   [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); });
  client.complete(simple_request());
  EXPECT_EQ(sleeps, (std::vector<long>{500, 1000, 1500, 1500}));
}

TEST(LlmClient, ClientErrorsAreNotRetried) {
  auto transport = scripted_statuses({401});
  LlmClient client(transport, {}, nullptr, 4, [](auto) {});
  EXPECT_THROW(client.complete(simple_request()), ConfigError);
  EXPECT_EQ(transport->calls(), 1);
}

TEST(LlmClient, ExhaustedRetriesRaiseTransportError) {
  RetryPolicy retry;
  retry.max_attempts = 3;
  LlmClient client(scripted_statuses({500, 500, 500, 500}), retry, nullptr, 4, [](auto) {});
  EXPECT_THROW(client.complete(simple_request()), TransportError);
  EXPECT_EQ(client.network_attempts(), 3);
}

TEST(LlmClient, InFlightLimitIsRespected) {
  std::atomic<int> now{0}, peak{0};
  auto transport = std::make_shared<MockTransport>([&](const ChatRequest&) {
    const int v = ++now;
    int p = peak.load();
    while (v > p && !peak.compare_exchange_weak(p, v)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --now;
    TransportResponse r;
    r.text = "x";
    return r;
  });
  LlmClient client(transport, {}, nullptr, 2);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] { client.complete(simple_request("q" + std::to_string(i))); });
  }
  for (auto& t : threads) t.join();
  EXPECT_LE(peak.load(), 2);
  EXPECT_EQ(transport->calls(), 8);
}

TEST(ResponseCache, PersistsAcrossInstances) {
  const auto dir = temp_dir("cache");
  const auto file = dir / "cache.jsonl";
  {
    ResponseCache c(file);
    c.put("k1", "v1");
    c.put("k1", "ignored");
    c.put("k2", "line\nbreak");
  }
  {
    std::ofstream torn(file, std::ios::app);
    torn << "{\"key\": \"k3\", \"te";
  }
  ResponseCache again(file);
  EXPECT_EQ(again.size(), 2u);
  EXPECT_EQ(again.get("k1"), "v1");
  EXPECT_EQ(again.get("k2"), "line\nbreak");
  EXPECT_FALSE(again.get("k3"));
}

TEST(HttpTransport, TalksToLocalEndpointAndRetries429) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 429;
      res.set_content("rate limited", "text/plain");
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(
        R"({"choices":[{"message":{"content":"pong"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}})",
        "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto transport = std::make_shared<HttpTransport>("http://127.0.0.1:" + std::to_string(port), "sk-test");
  LlmClient client(transport, {}, nullptr, 2, [](auto) {});
  const auto c = client.complete(simple_request("ping"));
  server.stop();
  t.join();

  EXPECT_EQ(c.text, "pong");
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(seen_auth, "Bearer sk-test");
  EXPECT_EQ(nlohmann::json::parse(seen_body)["messages"][1]["content"], "ping");
  EXPECT_EQ(client.total_usage().prompt_tokens, 3);
}

TEST(HttpTransport, UnreachableEndpointIsATransportFailure) {
  auto transport = std::make_shared<HttpTransport>("http://127.0.0.1:1", "", std::chrono::seconds(1));
  const auto r = transport->send(simple_request());
  EXPECT_EQ(r.status, 0);
  EXPECT_TRUE(r.timed_out);
  RetryPolicy retry;
  retry.max_attempts = 2;
  LlmClient client(transport, retry, nullptr, 1, [](auto) {});
  EXPECT_THROW(client.complete(simple_request()), TransportError);
}

#include <gtest/gtest.h>

#include "support.hpp"

using namespace nrpa_gd;
using namespace nrpa_gd::testing;

namespace {

LlmEnvConfig sim_config() {
  LlmEnvConfig c;
  c.system_model = "sim-system";
  c.user_model = "sim-user";
  c.critic_model = "sim-critic";
  c.judge_model = "sim-judge";
  return c;
}

struct MockWorld {
  std::shared_ptr<const PromptLibrary> lib = prompt_library();
  std::shared_ptr<MockTransport> transport;
  std::shared_ptr<LlmClient> client;
  std::unique_ptr<LlmEnvironment> env;

  explicit MockWorld(std::shared_ptr<MockTransport> t, LlmEnvConfig cfg = sim_config())
      : transport(std::move(t)),
        client(std::make_shared<LlmClient>(transport, RetryPolicy{}, std::make_shared<ResponseCache>())),
        env(std::make_unique<LlmEnvironment>(client, lib, cfg)) {}

  std::shared_ptr<const ScenarioConfig> scenario(const std::string& file) const {
    return load_scenarios(data_dir() / "scenarios" / (file + ".json"), *lib).front();
  }
};

// Fixed answers per model id.
std::shared_ptr<MockTransport> fixed(std::string system, std::string user, std::string critic) {
  return std::make_shared<MockTransport>([=](const ChatRequest& r) {
    TransportResponse out;
    out.text = r.model == "sim-critic" ? critic : r.model == "sim-user" ? user : system;
    return out;
  });
}

}  // namespace

TEST(ExtractDealPrice, CommonFormats) {
  EXPECT_EQ(extract_deal_price("$12.50"), 12.5);
  EXPECT_EQ(extract_deal_price("agreed at 1,200 dollars"), 1200.0);
  EXPECT_EQ(extract_deal_price(" 180"), 180.0);
  EXPECT_FALSE(extract_deal_price("no deal").has_value());
}

TEST(CriticVerdict, OpenEndedDatasets) {
  EXPECT_EQ(parse_critic_verdict(Dataset::ESConv, "Solved").signal, EnvSignal::UserSolved);
  EXPECT_EQ(parse_critic_verdict(Dataset::P4G, "  solved.").signal, EnvSignal::UserSolved);
  EXPECT_EQ(parse_critic_verdict(Dataset::CIMA, "ONGOING").signal, EnvSignal::UserOngoing);
  EXPECT_EQ(parse_critic_verdict(Dataset::ESConv, "Unsolved").signal, EnvSignal::UserOngoing);
  EXPECT_FALSE(parse_critic_verdict(Dataset::ESConv, "I think the patient is fine").signal);
  EXPECT_FALSE(parse_critic_verdict(Dataset::ESConv, "DEAL 10").signal);
}

TEST(CriticVerdict, Bargaining) {
  auto v = parse_critic_verdict(Dataset::CraigslistBargain, "DEAL $185");
  EXPECT_EQ(v.signal, EnvSignal::DealReached);
  EXPECT_EQ(v.deal_price, 185.0);
  EXPECT_FALSE(v.price_unparsed);
  v = parse_critic_verdict(Dataset::CraigslistBargain, "deal");
  EXPECT_EQ(v.signal, EnvSignal::DealReached);
  EXPECT_TRUE(v.price_unparsed);
  EXPECT_EQ(parse_critic_verdict(Dataset::CraigslistBargain, "NO-DEAL").signal, EnvSignal::UserOngoing);
  EXPECT_EQ(parse_critic_verdict(Dataset::CraigslistBargain, "Rejected").signal, EnvSignal::DealRejected);
  EXPECT_FALSE(parse_critic_verdict(Dataset::CraigslistBargain, "Solved").signal);
}

TEST(LlmEnvironment, StepIsOneExchangeWithThreeCalls) {
  MockWorld w(fixed("sys says", "user says", "Ongoing"));
  const auto s0 = DialogueState::open(w.scenario("esconv"));
  Rng rng(1);
  const auto out = w.env->step(s0, s0.scenario().action_space->at(0), rng);
  EXPECT_EQ(w.transport->calls(), 3);
  ASSERT_EQ(out.state.history().size(), 4u);
  EXPECT_EQ(out.state.history()[2].text, "sys says");
  EXPECT_EQ(out.state.history()[3].text, "user says");
  EXPECT_TRUE(out.state.ongoing());
  EXPECT_EQ(s0.history().size(), 2u);
}

TEST(LlmEnvironment, MockEpisodeAlternatesAndSolves) {
  const auto cfg = sim_config();
  MockWorld w(make_simulated_transport(cfg, 3), cfg);
  auto s = DialogueState::open(w.scenario("p4g"));
  Rng rng(9);
  int steps = 0;
  while (s.ongoing()) {
    s = w.env->step(s, s.scenario().action_space->at(steps % 3), rng).state;
    ++steps;
  }
  EXPECT_EQ(steps, 3);
  EXPECT_EQ(s.terminal(), Terminal::Solved);
  const auto& h = s.history();
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_NE(h[i].speaker, h[i - 1].speaker);
  EXPECT_EQ(w.env->malformed_critic_answers(), 0);
}

TEST(LlmEnvironment, MalformedCriticCountsAndContinues) {
  MockWorld w(fixed("s", "u", "maybe?"));
  auto s = DialogueState::open(w.scenario("cima"));
  Rng rng(2);
  s = w.env->step(s, s.scenario().action_space->at(0), rng).state;
  EXPECT_TRUE(s.ongoing());
  EXPECT_EQ(w.env->malformed_critic_answers(), 1);
}

TEST(LlmEnvironment, DealWithPriceSolvesAndRecordsIt) {
  const auto cfg = sim_config();
  MockWorld w(make_simulated_transport(cfg, 1, 175), cfg);
  auto s = DialogueState::open(w.scenario("craigslist_bargain"));
  Rng rng(0);
  s = w.env->step(s, s.scenario().action_space->at(3), rng).state;
  EXPECT_EQ(s.terminal(), Terminal::Solved);
  EXPECT_EQ(s.deal_price(), 175.0);
  EXPECT_FALSE(s.deal_price_invalid());
}

TEST(LlmEnvironment, DealWithoutPriceIsFlagged) {
  MockWorld w(fixed("s", "u", "DEAL"));
  auto s = DialogueState::open(w.scenario("craigslist_bargain"));
  Rng rng(0);
  s = w.env->step(s, s.scenario().action_space->at(0), rng).state;
  EXPECT_EQ(s.terminal(), Terminal::Solved);
  EXPECT_FALSE(s.deal_price().has_value());
  EXPECT_TRUE(s.deal_price_invalid());
  EXPECT_EQ(w.env->unparsed_deal_prices(), 1);
}

TEST(LlmEnvironment, RejectionFails) {
  MockWorld w(fixed("s", "u", "REJECTED"));
  auto s = DialogueState::open(w.scenario("craigslist_bargain"));
  Rng rng(0);
  s = w.env->step(s, s.scenario().action_space->at(0), rng).state;
  EXPECT_EQ(s.terminal(), Terminal::Failed);
}

TEST(LlmEnvironment, SameSeedIsReproducibleThroughTheCache) {
  const auto cfg = sim_config();
  MockWorld w(make_simulated_transport(cfg, 99), cfg);
  const auto s0 = DialogueState::open(w.scenario("esconv"));
  Rng a(5), b(5);
  const auto x = w.env->step(s0, s0.scenario().action_space->at(2), a).state;
  const long calls = w.transport->calls();
  const auto y = w.env->step(s0, s0.scenario().action_space->at(2), b).state;
  EXPECT_EQ(x, y);
  EXPECT_EQ(w.transport->calls(), calls);
}

TEST(LlmEnvironment, TransportFailureSurfacesAsEnvironmentError) {
  auto t = std::make_shared<MockTransport>([](const ChatRequest&) {
    TransportResponse r;
    r.status = 503;
    return r;
  });
  auto lib = prompt_library();
  RetryPolicy retry;
  retry.max_attempts = 2;
  auto client = std::make_shared<LlmClient>(t, retry, nullptr, 1, [](auto) {});
  LlmEnvironment env(client, lib, sim_config());
  const auto sc = load_scenarios(data_dir() / "scenarios" / "esconv.json", *lib).front();
  Rng rng(0);
  EXPECT_THROW(env.step(DialogueState::open(sc), sc->action_space->at(0), rng), EnvironmentError);
}

TEST(LlmEnvironment, LiveTurnsSplitGenerationAndAssessment) {
  MockWorld w(fixed("sys", "unused", "Solved"));
  auto s = DialogueState::open(w.scenario("esconv"), false);
  Rng rng(0);
  EXPECT_THROW(w.env->system_turn(s, s.scenario().action_space->at(0), rng), PreconditionError);
  s.append_user("I feel awful.");
  const long before = w.transport->calls();
  auto assessed = w.env->assess_user_turn(s, rng);
  EXPECT_EQ(assessed.state.terminal(), Terminal::Solved);
  EXPECT_EQ(w.transport->calls(), before + 1);
}

TEST(LlmEnvConfig, ValidationAndRoundTrip) {
  auto c = sim_config();
  EXPECT_EQ(LlmEnvConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(LlmEnvConfig::from_json({{"system_temperature", 3.0}}), ConfigError);
  EXPECT_THROW(LlmEnvConfig::from_json({{"critic_model", ""}}), ConfigError);
}

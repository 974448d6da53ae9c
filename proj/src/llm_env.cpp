#include "nrpa_gd/llm_env.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

#include <spdlog/spdlog.h>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

void LlmEnvConfig::validate() const {
  for (const auto* id : {&system_model, &user_model, &critic_model, &judge_model}) {
    if (id->empty()) throw ConfigError("llm: model ids must be nonempty");
  }
  for (double t : {system_temperature, user_temperature, critic_temperature, judge_temperature}) {
    if (!(t >= 0.0 && t <= 2.0)) throw ConfigError("llm: temperatures must lie in [0, 2]");
  }
  if (max_tokens < 1) throw ConfigError("llm: max_tokens must be >= 1");
}

nlohmann::json LlmEnvConfig::to_json() const {
  return {{"system_model", system_model},
          {"user_model", user_model},
          {"critic_model", critic_model},
          {"judge_model", judge_model},
          {"system_temperature", system_temperature},
          {"user_temperature", user_temperature},
          {"critic_temperature", critic_temperature},
          {"judge_temperature", judge_temperature},
          {"max_tokens", max_tokens},
          {"cache_enabled", cache_enabled},
          {"seed_requests", seed_requests}};
}

LlmEnvConfig LlmEnvConfig::from_json(const nlohmann::json& j) {
  LlmEnvConfig c;
  try {
    c.system_model = j.value("system_model", c.system_model);
    c.user_model = j.value("user_model", c.user_model);
    c.critic_model = j.value("critic_model", c.critic_model);
    c.judge_model = j.value("judge_model", c.judge_model);
    c.system_temperature = j.value("system_temperature", c.system_temperature);
    c.user_temperature = j.value("user_temperature", c.user_temperature);
    c.critic_temperature = j.value("critic_temperature", c.critic_temperature);
    c.judge_temperature = j.value("judge_temperature", c.judge_temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.cache_enabled = j.value("cache_enabled", c.cache_enabled);
    c.seed_requests = j.value("seed_requests", c.seed_requests);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("llm: ") + e.what());
  }
  c.validate();
  return c;
}

std::optional<double> extract_deal_price(const std::string& text) {
  static const std::regex kPrice(R"((\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?)");
  std::smatch m;
  if (!std::regex_search(text, m, kPrice)) return std::nullopt;
  std::string digits = m[1].str();
  digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
  return std::stod(digits + m[2].str());
}

namespace {

std::string first_word_upper(const std::string& text, std::string* rest) {
  std::size_t i = 0;
  while (i < text.size() && !std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
  std::string word;
  while (i < text.size() &&
         (std::isalpha(static_cast<unsigned char>(text[i])) || text[i] == '-' || text[i] == '_')) {
    word.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(text[i]))));
    ++i;
  }
  if (rest) *rest = text.substr(i);
  word.erase(std::remove_if(word.begin(), word.end(), [](char c) { return c == '-' || c == '_'; }),
             word.end());
  return word;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

CriticVerdict parse_critic_verdict(Dataset dataset, const std::string& text) {
  CriticVerdict v;
  std::string rest;
  const std::string word = first_word_upper(text, &rest);
  if (dataset == Dataset::CraigslistBargain) {
    if (word == "DEAL") {
      v.signal = EnvSignal::DealReached;
      v.deal_price = extract_deal_price(rest);
      v.price_unparsed = !v.deal_price.has_value();
    } else if (word == "NODEAL" || word == "ONGOING") {
      v.signal = EnvSignal::UserOngoing;
    } else if (word == "REJECTED" || word == "REJECT") {
      v.signal = EnvSignal::DealRejected;
    }
    return v;
  }
  if (word == "SOLVED") {
    v.signal = EnvSignal::UserSolved;
  } else if (word == "ONGOING" || word == "UNSOLVED") {
    v.signal = EnvSignal::UserOngoing;
  }
  return v;
}

// ---------------------------------------------------------------------------

LlmEnvironment::LlmEnvironment(std::shared_ptr<LlmClient> client,
                               std::shared_ptr<const PromptLibrary> prompts, LlmEnvConfig cfg)
    : client_(std::move(client)), prompts_(std::move(prompts)), cfg_(std::move(cfg)) {
  if (!client_ || !prompts_) throw ConfigError("LLM environment needs a client and prompts");
  cfg_.validate();
}

std::string LlmEnvironment::ask(const std::string& model, double temperature,
                                std::vector<ChatMessage> messages, Rng& rng) const {
  ChatRequest req;
  req.model = model;
  req.messages = std::move(messages);
  req.temperature = temperature;
  req.max_tokens = cfg_.max_tokens;
  if (cfg_.seed_requests) req.seed = static_cast<std::int64_t>(rng() >> 1);
  return trim(client_->complete(req).text);
}

std::string LlmEnvironment::generate_system(const DialogueState& state, const DialogueAct& act,
                                            Rng& rng) const {
  const auto& prompts = prompts_->get(state.scenario().dataset);
  auto messages = render(prompts.get(PromptRole::AssistantSim), state.scenario(), &act, state, prompts);
  return ask(cfg_.system_model, cfg_.system_temperature, std::move(messages), rng);
}

void LlmEnvironment::critique(DialogueState& state, EnvSignal& signal, Rng& rng) const {
  const auto& prompts = prompts_->get(state.scenario().dataset);
  auto messages = render(prompts.get(PromptRole::Critic), state.scenario(), nullptr, state, prompts);
  const std::string answer = ask(cfg_.critic_model, cfg_.critic_temperature, std::move(messages), rng);
  const auto verdict = parse_critic_verdict(state.scenario().dataset, answer);
  if (!verdict.signal) {
    ++malformed_;
    spdlog::warn("critic answer not in the verdict set, treating as ongoing: '{}'", answer);
    signal = EnvSignal::UserOngoing;
  } else {
    signal = *verdict.signal;
  }
  if (signal == EnvSignal::DealReached) {
    state.set_deal_price(verdict.deal_price);
    if (verdict.price_unparsed) {
      ++unparsed_prices_;
      state.set_deal_price_invalid(true);
      spdlog::warn("critic confirmed a deal without a readable price: '{}'", answer);
    }
  }
  apply_signal(state, signal);
}

StepOutcome LlmEnvironment::step(const DialogueState& state, const DialogueAct& act, Rng& rng) const {
  if (!state.ongoing()) throw PreconditionError("step on a terminal dialogue state");
  const auto& prompts = prompts_->get(state.scenario().dataset);

  StepOutcome out{state, EnvSignal::UserOngoing};
  out.state.append_system(act, generate_system(state, act, rng));

  auto user_messages =
      render(prompts.get(PromptRole::UserSim), state.scenario(), nullptr, out.state, prompts);
  out.state.append_user(ask(cfg_.user_model, cfg_.user_temperature, std::move(user_messages), rng));

  critique(out.state, out.signal, rng);
  return out;
}

DialogueState LlmEnvironment::system_turn(const DialogueState& state, const DialogueAct& act,
                                          Rng& rng) const {
  if (!state.ongoing()) throw PreconditionError("system turn on a terminal dialogue state");
  DialogueState next = state;
  next.append_system(act, generate_system(state, act, rng));
  return next;
}

StepOutcome LlmEnvironment::assess_user_turn(const DialogueState& state, Rng& rng) const {
  if (!state.ongoing()) throw PreconditionError("assessing a terminal dialogue state");
  if (state.history().empty() || state.history().back().speaker != Speaker::User) {
    throw PreconditionError("no user utterance to assess");
  }
  StepOutcome out{state, EnvSignal::UserOngoing};
  critique(out.state, out.signal, rng);
  return out;
}

// ---------------------------------------------------------------------------

std::shared_ptr<MockTransport> make_simulated_transport(const LlmEnvConfig& cfg,
                                                        int solve_after_turns, double deal_price) {
  return std::make_shared<MockTransport>([cfg, solve_after_turns, deal_price](const ChatRequest& req) {
    TransportResponse r;
    r.usage = {static_cast<long>(req.messages.size()) * 20, 12};
    const std::size_t n = req.messages.size();
    if (req.model == cfg.critic_model) {
      // Transcript lines: opener pair plus (system, user) per turn.
      const std::string& body = req.messages.back().content;
      const long lines = std::count(body.begin(), body.end(), '\n') + 1;
      const bool bargaining = body.find("Buyer:") != std::string::npos;
      const long turns = (lines - 2) / 2;
      if (turns >= solve_after_turns) {
        r.text = bargaining ? "DEAL $" + std::to_string(static_cast<long>(deal_price)) : "Solved";
      } else {
        r.text = bargaining ? "NODEAL" : "Ongoing";
      }
    } else if (req.model == cfg.judge_model) {
      r.text = "A";
    } else if (req.model == cfg.user_model && req.model != cfg.system_model) {
      r.text = "Simulated user reply #" + std::to_string(n) + ".";
    } else {
      r.text = "Simulated system reply #" + std::to_string(n) + ".";
    }
    return r;
  });
}

}  // namespace nrpa_gd

#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "nrpa_gd/env.hpp"
#include "nrpa_gd/llm_client.hpp"
#include "nrpa_gd/prompts.hpp"

namespace nrpa_gd {

struct LlmEnvConfig {
  std::string system_model = "gpt-4o-mini";
  std::string user_model = "gpt-4o-mini";
  std::string critic_model = "gpt-4o-mini";
  std::string judge_model = "gpt-3.5-turbo";
  double system_temperature = 0.7;
  double user_temperature = 0.7;
  double critic_temperature = 0.0;
  double judge_temperature = 0.0;
  int max_tokens = 256;
  bool cache_enabled = true;
  // Draw a per-request seed from the search rng so cached lookahead
  // playouts stay distinct yet reproducible.
  bool seed_requests = true;

  void validate() const;
  nlohmann::json to_json() const;
  static LlmEnvConfig from_json(const nlohmann::json& j);
};

// Leading-price parse: "$12.50" -> 12.5, "1,200" -> 1200, "no deal" -> nullopt.
std::optional<double> extract_deal_price(const std::string& text);

struct CriticVerdict {
  std::optional<EnvSignal> signal;  // empty when the answer is malformed
  std::optional<double> deal_price;
  bool price_unparsed = false;
};

// The critic answers with one verdict word from a closed set, case
// insensitive: SOLVED / ONGOING, or for CraigslistBargain DEAL <price> /
// NODEAL / REJECTED.
CriticVerdict parse_critic_verdict(Dataset dataset, const std::string& text);

class LlmEnvironment final : public Environment {
 public:
  LlmEnvironment(std::shared_ptr<LlmClient> client, std::shared_ptr<const PromptLibrary> prompts,
                 LlmEnvConfig cfg);

  StepOutcome step(const DialogueState& state, const DialogueAct& act, Rng& rng) const override;
  DialogueState system_turn(const DialogueState& state, const DialogueAct& act,
                            Rng& rng) const override;
  StepOutcome assess_user_turn(const DialogueState& state, Rng& rng) const override;

  long malformed_critic_answers() const { return malformed_.load(); }
  long unparsed_deal_prices() const { return unparsed_prices_.load(); }
  const LlmEnvConfig& config() const { return cfg_; }

 private:
  std::string ask(const std::string& model, double temperature, std::vector<ChatMessage> messages,
                  Rng& rng) const;
  std::string generate_system(const DialogueState& state, const DialogueAct& act, Rng& rng) const;
  void critique(DialogueState& state, EnvSignal& signal, Rng& rng) const;

  std::shared_ptr<LlmClient> client_;
  std::shared_ptr<const PromptLibrary> prompts_;
  LlmEnvConfig cfg_;
  mutable std::atomic<long> malformed_{0};
  mutable std::atomic<long> unparsed_prices_{0};
};

// Offline stand-in for a chat endpoint, dispatching on the model id of each
// request: system and user models get short numbered replies, the critic
// reports success once `solve_after_turns` system turns are in the
// transcript (CraigslistBargain: DEAL at `deal_price`), the judge says "A".
std::shared_ptr<MockTransport> make_simulated_transport(const LlmEnvConfig& cfg,
                                                        int solve_after_turns,
                                                        double deal_price = 0.0);

}  // namespace nrpa_gd

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nrpa_gd {

using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits, so results do not
// depend on the standard library's distribution implementation.
double uniform01(Rng& rng);

enum class Dataset { ESConv, CIMA, CraigslistBargain, P4G };

std::string_view to_string(Dataset d);
Dataset parse_dataset(std::string_view s);

struct DialogueAct {
  std::string id;
  std::string label;
  std::string prompt_text;
};

class ActionSpace {
 public:
  ActionSpace(Dataset dataset, std::vector<DialogueAct> acts);

  static ActionSpace from_json(const nlohmann::json& j);
  static ActionSpace load(const std::string& path);
  nlohmann::json to_json() const;

  Dataset dataset() const { return dataset_; }
  std::size_t size() const { return acts_.size(); }
  const DialogueAct& at(std::size_t i) const { return acts_.at(i); }
  const std::vector<DialogueAct>& acts() const { return acts_; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  const DialogueAct& act(std::string_view id) const;  // throws on unknown id

 private:
  Dataset dataset_;
  std::vector<DialogueAct> acts_;
};

// A concrete task instance: which action space, the prompt slots, the
// dialogue-level turn budget and the opening exchange (u0 system, u1 user).
struct ScenarioConfig {
  std::string id;
  Dataset dataset = Dataset::ESConv;
  std::map<std::string, std::string> slots;
  int max_turns = 10;
  std::shared_ptr<const ActionSpace> action_space;
  std::string opening_system;
  std::string opening_user;
};

enum class Speaker { System, User };

// Act id carried by the scripted opening system utterance (turn 0). It is
// reserved and never part of an ActionSpace.
inline constexpr std::string_view kOpeningAct = "opening";

struct Utterance {
  Speaker speaker = Speaker::System;
  std::string text;
  std::optional<std::string> act;  // present iff speaker == System
  int turn_index = 0;
};

enum class Terminal { Ongoing, Solved, Failed, TurnBudgetExhausted };

std::string_view to_string(Terminal t);
Terminal parse_terminal(std::string_view s);

// The MDP state: utterance history plus bookkeeping. Environments never
// modify a state in place; they copy it and append to the copy.
class DialogueState {
 public:
  // Seeds the history with the scenario's opening system utterance and,
  // when `with_user_opener`, the scripted opening user utterance.
  static DialogueState open(std::shared_ptr<const ScenarioConfig> scenario,
                            bool with_user_opener = true);

  const ScenarioConfig& scenario() const { return *scenario_; }
  const std::shared_ptr<const ScenarioConfig>& scenario_ptr() const { return scenario_; }
  const std::vector<Utterance>& history() const { return history_; }
  int turn_count() const { return turn_count_; }
  Terminal terminal() const { return terminal_; }
  bool ongoing() const { return terminal_ == Terminal::Ongoing; }

  // Act ids of system turns with turn_index >= 1, in order.
  std::vector<std::string> act_sequence() const;

  void append_system(const DialogueAct& act, std::string text);
  void append_user(std::string text);
  void set_terminal(Terminal t);

  // Opaque key used by scripted environments to track their abstract state.
  const std::string& env_key() const { return env_key_; }
  void set_env_key(std::string key) { env_key_ = std::move(key); }

  const std::optional<double>& deal_price() const { return deal_price_; }
  void set_deal_price(std::optional<double> p) { deal_price_ = p; }
  bool deal_price_invalid() const { return deal_price_invalid_; }
  void set_deal_price_invalid(bool v) { deal_price_invalid_ = v; }

  bool operator==(const DialogueState& other) const;

 private:
  explicit DialogueState(std::shared_ptr<const ScenarioConfig> scenario);
  void require_ongoing() const;

  std::shared_ptr<const ScenarioConfig> scenario_;
  std::vector<Utterance> history_;
  int turn_count_ = 0;
  Terminal terminal_ = Terminal::Ongoing;
  std::string env_key_;
  std::optional<double> deal_price_;
  bool deal_price_invalid_ = false;
};

// One weight per action, indexed like the owning ActionSpace.
class Policy {
 public:
  Policy() = default;
  explicit Policy(std::vector<double> weights);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  double& operator[](std::size_t i) { return weights_[i]; }
  std::span<const double> weights() const { return weights_; }

  bool operator==(const Policy&) const = default;

 private:
  std::vector<double> weights_;
};

struct RolloutResult {
  double score = 0.0;
  std::vector<std::string> sequence;
  DialogueState final_state;
};

enum class RootSelection { BestSequenceHead, PolicyArgmax };
enum class AdaptVariant {
  FixedPolicy,  // probabilities from the incoming policy for every step
  Classical,    // probabilities recomputed from the evolving copy
};

struct NrpaParams {
  int level = 1;
  int iterations = 10;
  double alpha = 1.0;
  int early_stopping = 3;
  int min_iterations = 3;
  int max_playout_steps = 10;
  std::uint64_t rng_seed = 0;

  bool stop_on_stagnation = true;
  bool stop_on_solved = true;
  RootSelection root_selection = RootSelection::BestSequenceHead;
  AdaptVariant adapt_variant = AdaptVariant::FixedPolicy;
  double weight_clamp = 50.0;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static NrpaParams from_json(const nlohmann::json& j);
};

// P(a) = exp(w_a) / sum exp(w), computed after subtracting max(w).
std::vector<double> softmax_probs(std::span<const double> weights);
std::vector<double> softmax_probs(const Policy& policy);

std::size_t sample_index(const Policy& policy, Rng& rng);
const DialogueAct& sample_action(const Policy& policy, const ActionSpace& space, Rng& rng);

Policy uniform_policy(const ActionSpace& space);

}  // namespace nrpa_gd

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrpa_gd/core.hpp"
#include "nrpa_gd/reward.hpp"

namespace nrpa_gd {

struct StepOutcome {
  DialogueState state;
  EnvSignal signal = EnvSignal::UserOngoing;
};

// The transition function. Implementations must be safe for concurrent
// calls from distinct searches and must never mutate their input state.
class Environment {
 public:
  virtual ~Environment() = default;

  // One MDP transition: the system utterance realizing `act`, then the
  // simulated user reply. The returned state has its terminal class set.
  virtual StepOutcome step(const DialogueState& state, const DialogueAct& act, Rng& rng) const = 0;

  // Live sessions: only the system utterance for `act` is appended; the
  // user side comes from a human.
  virtual DialogueState system_turn(const DialogueState& state, const DialogueAct& act,
                                    Rng& rng) const = 0;

  // Live sessions: classifies the latest user utterance of `state` and
  // returns the state with its terminal class (and deal price) updated.
  virtual StepOutcome assess_user_turn(const DialogueState& state, Rng& rng) const = 0;
};

// Sets the terminal class from `signal` and the scenario turn budget.
void apply_signal(DialogueState& state, EnvSignal signal);

// ---------------------------------------------------------------------------
// Scripted oracle environment

struct ScriptedBranch {
  double probability = 1.0;
  std::string next_key;
  std::string reply;
  EnvSignal signal = EnvSignal::UserOngoing;
  std::optional<double> deal_price;
};

struct ScriptedEntry {
  std::string key;   // "*" matches any key
  std::string act;   // "*" matches any act
  std::optional<std::string> system_text;  // defaults to the act label
  std::vector<ScriptedBranch> branches;    // probabilities sum to 1
};

// Substring rule applied to human messages in live sessions.
struct LiveRule {
  std::string contains;  // matched case-insensitively
  EnvSignal signal = EnvSignal::UserSolved;
  std::optional<double> deal_price;
};

// A transition table over abstract state keys. Lookup order for (key, act):
// exact, (key, *), (*, act), (*, *).
class ScriptedScenario {
 public:
  // `base_dir` resolves a relative "action_space" path.
  static ScriptedScenario from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ScriptedScenario load(const std::filesystem::path& path);

  const std::shared_ptr<const ScenarioConfig>& scenario() const { return scenario_; }
  const std::string& start_key() const { return start_key_; }
  const std::vector<LiveRule>& live_rules() const { return live_rules_; }

  const ScriptedEntry* find(const std::string& key, const std::string& act) const;

  // Every (key, act) pair reachable from the start key must resolve.
  void check_reachable() const;

  DialogueState initial_state(bool with_user_opener = true) const;

 private:
  std::shared_ptr<const ScenarioConfig> scenario_;
  std::string start_key_;
  std::map<std::pair<std::string, std::string>, ScriptedEntry> table_;
  std::vector<LiveRule> live_rules_;
};

class ScriptedEnvironment final : public Environment {
 public:
  explicit ScriptedEnvironment(std::shared_ptr<const ScriptedScenario> script);

  StepOutcome step(const DialogueState& state, const DialogueAct& act, Rng& rng) const override;
  DialogueState system_turn(const DialogueState& state, const DialogueAct& act,
                            Rng& rng) const override;
  StepOutcome assess_user_turn(const DialogueState& state, Rng& rng) const override;

  const ScriptedScenario& script() const { return *script_; }

 private:
  const ScriptedEntry& lookup(const DialogueState& state, const DialogueAct& act) const;

  std::shared_ptr<const ScriptedScenario> script_;
};

}  // namespace nrpa_gd

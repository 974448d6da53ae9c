#pragma once

#include <string_view>

#include <nlohmann/json.hpp>

#include "nrpa_gd/core.hpp"

namespace nrpa_gd {

// Terminal-state scoring: success_value (or unsolved_base) minus a
// per-system-turn penalty.
struct RewardSpec {
  double success_value = 1.0;
  double turn_penalty = 0.001;
  double unsolved_base = 0.0;
  int max_turns = 10;

  // Also checks that every solved outcome outranks every unsolved one
  // within max_turns.
  void validate() const;
  nlohmann::json to_json() const;
  static RewardSpec from_json(const nlohmann::json& j);

  double evaluate(Terminal terminal, int turn_count) const;
  double evaluate(const DialogueState& state) const;
};

enum class EnvSignal { UserSolved, UserOngoing, DealReached, DealRejected };

std::string_view to_string(EnvSignal s);
EnvSignal parse_env_signal(std::string_view s);

// Maps an environment signal plus the turn budget onto a terminal class.
// Success takes precedence over budget exhaustion, which takes precedence
// over an explicit rejection.
Terminal classify_terminal(int turn_count, EnvSignal signal, int max_turns);
Terminal classify_terminal(const DialogueState& state, EnvSignal signal);

}  // namespace nrpa_gd

#include "nrpa_gd/reward.hpp"

#include <cmath>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

void RewardSpec::validate() const {
  if (!(turn_penalty >= 0.0)) throw ConfigError("reward.turn_penalty must be >= 0");
  if (!(success_value > unsolved_base)) {
    throw ConfigError("reward.success_value must exceed reward.unsolved_base");
  }
  if (max_turns < 1) throw ConfigError("reward.max_turns must be >= 1");
  if (!(turn_penalty * max_turns < success_value - unsolved_base)) {
    throw ConfigError(
        "reward: turn_penalty * max_turns must be below success_value - unsolved_base, "
        "otherwise a long solved dialogue can score below a short unsolved one");
  }
}

nlohmann::json RewardSpec::to_json() const {
  return {{"success_value", success_value},
          {"turn_penalty", turn_penalty},
          {"unsolved_base", unsolved_base},
          {"max_turns", max_turns}};
}

RewardSpec RewardSpec::from_json(const nlohmann::json& j) {
  RewardSpec r;
  try {
    r.success_value = j.value("success_value", r.success_value);
    r.turn_penalty = j.value("turn_penalty", r.turn_penalty);
    r.unsolved_base = j.value("unsolved_base", r.unsolved_base);
    r.max_turns = j.value("max_turns", r.max_turns);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("reward: ") + e.what());
  }
  r.validate();
  return r;
}

double RewardSpec::evaluate(Terminal terminal, int turn_count) const {
  if (terminal == Terminal::Ongoing) {
    throw PreconditionError("reward is only defined for terminal states");
  }
  const double base = terminal == Terminal::Solved ? success_value : unsolved_base;
  return base - turn_penalty * turn_count;
}

double RewardSpec::evaluate(const DialogueState& state) const {
  return evaluate(state.terminal(), state.turn_count());
}

std::string_view to_string(EnvSignal s) {
  switch (s) {
    case EnvSignal::UserSolved: return "UserSolved";
    case EnvSignal::UserOngoing: return "UserOngoing";
    case EnvSignal::DealReached: return "DealReached";
    case EnvSignal::DealRejected: return "DealRejected";
  }
  return "?";
}

EnvSignal parse_env_signal(std::string_view s) {
  for (auto v : {EnvSignal::UserSolved, EnvSignal::UserOngoing, EnvSignal::DealReached,
                 EnvSignal::DealRejected}) {
    if (to_string(v) == s) return v;
  }
  throw ConfigError("unknown environment signal '" + std::string(s) + "'");
}

Terminal classify_terminal(int turn_count, EnvSignal signal, int max_turns) {
  if (signal == EnvSignal::UserSolved || signal == EnvSignal::DealReached) return Terminal::Solved;
  if (turn_count >= max_turns) return Terminal::TurnBudgetExhausted;
  if (signal == EnvSignal::DealRejected) return Terminal::Failed;
  return Terminal::Ongoing;
}

Terminal classify_terminal(const DialogueState& state, EnvSignal signal) {
  return classify_terminal(state.turn_count(), signal, state.scenario().max_turns);
}

}  // namespace nrpa_gd

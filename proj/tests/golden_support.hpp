#pragma once

#include <string>
#include <utility>
#include <vector>

#include "support.hpp"

namespace nrpa_gd::testing {

inline const std::vector<std::pair<Dataset, std::string>>& golden_datasets() {
  static const std::vector<std::pair<Dataset, std::string>> d{{Dataset::ESConv, "esconv"},
                                                               {Dataset::CIMA, "cima"},
                                                               {Dataset::CraigslistBargain, "craigslist_bargain"},
                                                               {Dataset::P4G, "p4g"}};
  return d;
}

inline const std::vector<PromptRole>& golden_roles() {
  static const std::vector<PromptRole> r{PromptRole::AssistantSim, PromptRole::UserSim, PromptRole::Critic,
                                         PromptRole::Judge};
  return r;
}

inline std::shared_ptr<const ScenarioConfig> first_scenario(const std::string& file, const PromptLibrary& lib) {
  return load_scenarios(data_dir() / "scenarios" / (file + ".json"), lib).front();
}

// Opening pair plus one exchange realized with the first act.
inline DialogueState sample_history(const std::shared_ptr<const ScenarioConfig>& sc) {
  auto s = DialogueState::open(sc);
  s.append_system(sc->action_space->at(0), "First system line.");
  s.append_user("First user line.");
  return s;
}

inline std::string golden_name(const std::string& file, PromptRole role) {
  return file + "_" + std::string(to_string(role)) + ".txt";
}

// Rendered prompt for the first bundled scenario of `file`.
inline std::string render_for_golden(PromptRole role, const std::string& file, const PromptLibrary& lib) {
  const auto sc = first_scenario(file, lib);
  const auto& set = lib.get(sc->dataset);
  const auto history = sample_history(sc);
  if (role == PromptRole::Judge) {
    return format_messages(render_judge(set, transcript(history, set), "Response one.", "Response two."));
  }
  const DialogueAct* act = role == PromptRole::AssistantSim ? &sc->action_space->at(1) : nullptr;
  return format_messages(render(set.get(role), *sc, act, history, set));
}

}  // namespace nrpa_gd::testing

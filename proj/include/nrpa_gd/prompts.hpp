#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrpa_gd/core.hpp"
#include "nrpa_gd/llm_client.hpp"

namespace nrpa_gd {

enum class PromptRole { AssistantSim, UserSim, Critic, Judge };

std::string_view to_string(PromptRole r);
PromptRole parse_prompt_role(std::string_view s);

struct TemplateTurn {
  ChatRole role = ChatRole::User;
  std::string text;
};

// Fixed turns with slots, optionally followed by the dialogue history.
// Role-play templates use [slot name] markers; judge templates use {slot}.
struct PromptTemplate {
  Dataset dataset = Dataset::ESConv;
  PromptRole role = PromptRole::AssistantSim;
  std::vector<TemplateTurn> turns;
  std::set<std::string> required_slots;  // normalized: lower case, '_' for spaces
  bool append_history = true;

  static PromptTemplate from_json(Dataset dataset, PromptRole role, const nlohmann::json& j);
};

// Everything a dataset needs for simulation and judging.
struct PromptSet {
  Dataset dataset = Dataset::ESConv;
  std::string system_speaker;  // e.g. "Therapist"
  std::string user_speaker;    // e.g. "Patient"
  std::string opening_system;  // templated u0 (system)
  std::string opening_user;    // templated u1 (user)
  std::map<PromptRole, PromptTemplate> templates;

  const PromptTemplate& get(PromptRole role) const;
  static PromptSet from_json(const nlohmann::json& j);
};

class PromptLibrary {
 public:
  // Loads every *.json in `dir`.
  static PromptLibrary load(const std::filesystem::path& dir);
  void add(PromptSet set);
  const PromptSet& get(Dataset d) const;
  bool contains(Dataset d) const { return sets_.count(d) > 0; }

 private:
  std::map<Dataset, PromptSet> sets_;
};

// Lower-cases and maps spaces to underscores: "item name" -> "item_name".
std::string normalize_slot(std::string_view name);

// Substitutes `open`name`close` markers in one pass (substituted values are
// never re-scanned). Unbound slot names raise RenderError naming the slot.
std::string substitute(std::string_view text, const std::map<std::string, std::string>& bindings,
                       char open, char close);

// "Therapist: ...\nPatient: ..." view of the history.
std::string transcript(const DialogueState& state, const PromptSet& prompts);

std::vector<ChatMessage> render(const PromptTemplate& tmpl, const ScenarioConfig& scenario,
                                const DialogueAct* act, const DialogueState& history,
                                const PromptSet& prompts);

std::vector<ChatMessage> render_judge(const PromptSet& prompts, const std::string& context,
                                      const std::string& resp_a, const std::string& resp_b);

// Plain-text dump used by golden files.
std::string format_messages(const std::vector<ChatMessage>& messages);

// Checks slot coverage for every template of the dataset and the
// CraigslistBargain price ordering.
void validate_scenario(const ScenarioConfig& scenario, const PromptSet& prompts);

// Scenario file: {"dataset", "action_space", "max_turns", "scenarios": [{"id", "slots", ...}]}.
std::vector<std::shared_ptr<const ScenarioConfig>> load_scenarios(
    const std::filesystem::path& path, const PromptLibrary& prompts);

}  // namespace nrpa_gd

#include "nrpa_gd/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

bool is_slot_name(std::string_view s) {
  if (s.empty() || !std::islower(static_cast<unsigned char>(s.front()))) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::islower(static_cast<unsigned char>(c)) || c == ' ' || c == '_';
  });
}

void collect_slots(std::string_view text, char open, char close, std::set<std::string>& out) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != open) continue;
    const auto end = text.find(close, i + 1);
    if (end == std::string_view::npos) break;
    const auto name = text.substr(i + 1, end - i - 1);
    if (is_slot_name(name)) {
      out.insert(normalize_slot(name));
      i = end;
    }
  }
}

// Slots filled by the renderer itself rather than by the scenario.
const std::set<std::string>& builtin_slots() {
  static const std::set<std::string> s{"action", "conversation", "context", "resp_a", "resp_b"};
  return s;
}

}  // namespace

std::string_view to_string(PromptRole r) {
  switch (r) {
    case PromptRole::AssistantSim: return "AssistantSim";
    case PromptRole::UserSim: return "UserSim";
    case PromptRole::Critic: return "Critic";
    case PromptRole::Judge: return "Judge";
  }
  return "?";
}

PromptRole parse_prompt_role(std::string_view s) {
  for (auto r : {PromptRole::AssistantSim, PromptRole::UserSim, PromptRole::Critic,
                 PromptRole::Judge}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown prompt role '" + std::string(s) + "'");
}

std::string normalize_slot(std::string_view name) {
  std::string out(name);
  for (char& c : out) {
    c = c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string substitute(std::string_view text, const std::map<std::string, std::string>& bindings,
                       char open, char close) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == open) {
      const auto end = text.find(close, i + 1);
      if (end != std::string_view::npos) {
        const auto name = text.substr(i + 1, end - i - 1);
        if (is_slot_name(name)) {
          const auto it = bindings.find(normalize_slot(name));
          if (it == bindings.end()) {
            throw RenderError("unbound prompt slot '" + std::string(name) + "'");
          }
          out += it->second;
          i = end + 1;
          continue;
        }
      }
    }
    out.push_back(text[i++]);
  }
  return out;
}

PromptTemplate PromptTemplate::from_json(Dataset dataset, PromptRole role, const nlohmann::json& j) {
  PromptTemplate t;
  t.dataset = dataset;
  t.role = role;
  t.append_history = j.value("append_history", role == PromptRole::AssistantSim ||
                                                   role == PromptRole::UserSim);
  const char open = role == PromptRole::Judge ? '{' : '[';
  const char close = role == PromptRole::Judge ? '}' : ']';
  for (const auto& turn : j.at("turns")) {
    TemplateTurn tt{parse_chat_role(turn.at("role").get<std::string>()), {}};
    const auto& text = turn.at("text");
    if (text.is_array()) {
      // Multi-line turns are stored as a list of lines.
      for (std::size_t k = 0; k < text.size(); ++k) {
        if (k) tt.text += '\n';
        tt.text += text[k].get<std::string>();
      }
    } else {
      tt.text = text.get<std::string>();
    }
    collect_slots(tt.text, open, close, t.required_slots);
    t.turns.push_back(std::move(tt));
  }
  if (t.turns.empty()) throw ConfigError("prompt template without turns");
  return t;
}

const PromptTemplate& PromptSet::get(PromptRole role) const {
  auto it = templates.find(role);
  if (it == templates.end()) {
    throw ConfigError("no " + std::string(to_string(role)) + " template for " +
                      std::string(to_string(dataset)));
  }
  return it->second;
}

PromptSet PromptSet::from_json(const nlohmann::json& j) {
  PromptSet s;
  try {
    s.dataset = parse_dataset(j.at("dataset").get<std::string>());
    s.system_speaker = j.at("speakers").at("system").get<std::string>();
    s.user_speaker = j.at("speakers").at("user").get<std::string>();
    s.opening_system = j.at("opening").at("system").get<std::string>();
    s.opening_user = j.at("opening").at("user").get<std::string>();
    for (const auto& [name, body] : j.at("templates").items()) {
      const auto role = parse_prompt_role(name);
      s.templates.emplace(role, PromptTemplate::from_json(s.dataset, role, body));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prompt set: ") + e.what());
  }
  return s;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  PromptLibrary lib;
  if (!std::filesystem::is_directory(dir)) throw ConfigError("prompt directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) lib.add(PromptSet::from_json(read_json(f)));
  return lib;
}

void PromptLibrary::add(PromptSet set) {
  const auto d = set.dataset;
  sets_.insert_or_assign(d, std::move(set));
}

const PromptSet& PromptLibrary::get(Dataset d) const {
  auto it = sets_.find(d);
  if (it == sets_.end()) throw ConfigError("no prompts loaded for " + std::string(to_string(d)));
  return it->second;
}

std::string transcript(const DialogueState& state, const PromptSet& prompts) {
  std::string out;
  for (const auto& u : state.history()) {
    if (!out.empty()) out += '\n';
    out += u.speaker == Speaker::System ? prompts.system_speaker : prompts.user_speaker;
    out += ": ";
    out += u.text;
  }
  return out;
}

std::vector<ChatMessage> render(const PromptTemplate& tmpl, const ScenarioConfig& scenario,
                                const DialogueAct* act, const DialogueState& history,
                                const PromptSet& prompts) {
  const bool wants_act = tmpl.role == PromptRole::AssistantSim;
  if (wants_act && !act) throw RenderError("assistant simulation needs a dialogue act");
  if (!wants_act && act) throw RenderError("only assistant simulation takes a dialogue act");

  std::map<std::string, std::string> bindings;
  for (const auto& [k, v] : scenario.slots) bindings[normalize_slot(k)] = v;
  if (act) bindings["action"] = act->prompt_text;
  if (tmpl.required_slots.count("conversation")) bindings["conversation"] = transcript(history, prompts);

  std::vector<ChatMessage> out;
  for (const auto& turn : tmpl.turns) {
    out.push_back({turn.role, substitute(turn.text, bindings, '[', ']')});
  }
  if (tmpl.append_history) {
    // The simulated speaker's own utterances are `assistant` messages.
    const Speaker self = tmpl.role == PromptRole::UserSim ? Speaker::User : Speaker::System;
    for (const auto& u : history.history()) {
      out.push_back({u.speaker == self ? ChatRole::Assistant : ChatRole::User, u.text});
    }
  }
  return out;
}

std::vector<ChatMessage> render_judge(const PromptSet& prompts, const std::string& context,
                                      const std::string& resp_a, const std::string& resp_b) {
  if (resp_a.empty() || resp_b.empty()) throw RenderError("judge responses must be nonempty");
  const auto& tmpl = prompts.get(PromptRole::Judge);
  const std::map<std::string, std::string> bindings{
      {"context", context}, {"resp_a", resp_a}, {"resp_b", resp_b}};
  std::vector<ChatMessage> out;
  for (const auto& turn : tmpl.turns) {
    out.push_back({turn.role, substitute(turn.text, bindings, '{', '}')});
  }
  return out;
}

std::string format_messages(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += "[";
    out += to_string(m.role);
    out += "]\n";
    out += m.content;
    out += "\n\n";
  }
  return out;
}

void validate_scenario(const ScenarioConfig& scenario, const PromptSet& prompts) {
  std::set<std::string> bound{builtin_slots()};
  for (const auto& [k, v] : scenario.slots) bound.insert(normalize_slot(k));
  for (const auto& [role, tmpl] : prompts.templates) {
    if (role == PromptRole::Judge) continue;
    for (const auto& slot : tmpl.required_slots) {
      if (!bound.count(slot)) {
        throw ConfigError("scenario '" + scenario.id + "' is missing slot '" + slot + "' required by " +
                          std::string(to_string(role)) + " template");
      }
    }
  }
  if (scenario.dataset == Dataset::CraigslistBargain) {
    auto price = [&](const char* name) {
      auto it = scenario.slots.find(name);
      if (it == scenario.slots.end()) {
        throw ConfigError("scenario '" + scenario.id + "' is missing slot '" + name + "'");
      }
      try {
        return std::stod(it->second);
      } catch (const std::exception&) {
        throw ConfigError("scenario '" + scenario.id + "': slot '" + name + "' is not a number");
      }
    };
    const double buyer = price("buyer_target_price");
    const double seller = price("seller_target_price");
    if (!(buyer < seller)) {
      throw ConfigError("scenario '" + scenario.id +
                        "': buyer_target_price must be below seller_target_price");
    }
  }
}

std::vector<std::shared_ptr<const ScenarioConfig>> load_scenarios(
    const std::filesystem::path& path, const PromptLibrary& prompts) {
  const auto j = read_json(path);
  std::vector<std::shared_ptr<const ScenarioConfig>> out;
  try {
    const auto dataset = parse_dataset(j.at("dataset").get<std::string>());
    std::filesystem::path space_path = j.at("action_space").get<std::string>();
    if (space_path.is_relative()) space_path = path.parent_path() / space_path;
    auto space = std::make_shared<const ActionSpace>(ActionSpace::load(space_path.string()));
    if (space->dataset() != dataset) throw ConfigError(path.string() + ": action space dataset mismatch");
    const int default_turns = j.value("max_turns", 10);
    const PromptSet& set = prompts.get(dataset);

    for (const auto& s : j.at("scenarios")) {
      auto cfg = std::make_shared<ScenarioConfig>();
      cfg->id = s.at("id").get<std::string>();
      cfg->dataset = dataset;
      cfg->slots = s.value("slots", std::map<std::string, std::string>{});
      cfg->max_turns = s.value("max_turns", default_turns);
      if (cfg->max_turns < 1) throw ConfigError("scenario '" + cfg->id + "': max_turns must be >= 1");
      cfg->action_space = space;
      validate_scenario(*cfg, set);
      std::map<std::string, std::string> bindings;
      for (const auto& [k, v] : cfg->slots) bindings[normalize_slot(k)] = v;
      cfg->opening_system = substitute(set.opening_system, bindings, '[', ']');
      cfg->opening_user = substitute(set.opening_user, bindings, '[', ']');
      out.push_back(std::move(cfg));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const RenderError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace nrpa_gd

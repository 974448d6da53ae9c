#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>

#include "nrpa_gd/env.hpp"
#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

namespace {

bool is_terminal_signal(EnvSignal s) { return s != EnvSignal::UserOngoing; }

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

ScriptedBranch parse_branch(const nlohmann::json& j) {
  ScriptedBranch b;
  b.probability = j.value("p", 1.0);
  b.next_key = j.value("next", std::string{});
  b.reply = j.value("reply", std::string{"..."});
  b.signal = parse_env_signal(j.value("signal", std::string("UserOngoing")));
  if (j.contains("deal_price") && !j.at("deal_price").is_null()) {
    b.deal_price = j.at("deal_price").get<double>();
  }
  return b;
}

}  // namespace

void apply_signal(DialogueState& state, EnvSignal signal) {
  const Terminal t = classify_terminal(state, signal);
  if (t != Terminal::Ongoing) state.set_terminal(t);
}

ScriptedScenario ScriptedScenario::from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir) {
  ScriptedScenario s;
  try {
    auto cfg = std::make_shared<ScenarioConfig>();
    cfg->id = j.at("id").get<std::string>();

    const auto& space = j.at("action_space");
    if (space.is_string()) {
      std::filesystem::path p = space.get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      cfg->action_space = std::make_shared<ActionSpace>(ActionSpace::load(p.string()));
    } else {
      cfg->action_space = std::make_shared<ActionSpace>(ActionSpace::from_json(space));
    }
    cfg->dataset = j.contains("dataset") ? parse_dataset(j.at("dataset").get<std::string>())
                                         : cfg->action_space->dataset();
    cfg->max_turns = j.value("max_turns", 10);
    if (cfg->max_turns < 1) throw ConfigError("scripted scenario max_turns must be >= 1");
    if (j.contains("slots")) cfg->slots = j.at("slots").get<std::map<std::string, std::string>>();
    const auto opening = j.value("opening", nlohmann::json::object());
    cfg->opening_system = opening.value("system", std::string("Hello."));
    cfg->opening_user = opening.value("user", std::string("Hi."));
    s.scenario_ = std::move(cfg);

    s.start_key_ = j.value("start", std::string{});

    for (const auto& e : j.at("transitions")) {
      ScriptedEntry entry;
      entry.key = e.value("key", std::string{});
      entry.act = e.at("act").get<std::string>();
      if (e.contains("system")) entry.system_text = e.at("system").get<std::string>();
      if (e.contains("branches")) {
        for (const auto& b : e.at("branches")) entry.branches.push_back(parse_branch(b));
      } else {
        entry.branches.push_back(parse_branch(e));
      }
      double total = 0.0;
      for (const auto& b : entry.branches) {
        if (!(b.probability >= 0.0)) {
          throw ConfigError("negative branch probability at (" + entry.key + ", " + entry.act + ")");
        }
        total += b.probability;
      }
      if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("branch probabilities at (" + entry.key + ", " + entry.act +
                          ") sum to " + std::to_string(total));
      }
      if (entry.act != "*" && !s.scenario_->action_space->index_of(entry.act)) {
        throw ConfigError("transition names unknown act '" + entry.act + "'");
      }
      auto k = std::make_pair(entry.key, entry.act);
      if (!s.table_.emplace(k, std::move(entry)).second) {
        throw ConfigError("duplicate transition (" + k.first + ", " + k.second + ")");
      }
    }

    for (const auto& r : j.value("live_rules", nlohmann::json::array())) {
      LiveRule rule;
      rule.contains = lower(r.at("contains").get<std::string>());
      rule.signal = parse_env_signal(r.value("signal", std::string("UserSolved")));
      if (r.contains("deal_price")) rule.deal_price = r.at("deal_price").get<double>();
      s.live_rules_.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed scripted scenario: ") + e.what());
  }
  s.check_reachable();
  return s;
}

ScriptedScenario ScriptedScenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scripted scenario: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

const ScriptedEntry* ScriptedScenario::find(const std::string& key, const std::string& act) const {
  for (const auto& probe : {std::make_pair(key, act), std::make_pair(key, std::string("*")),
                            std::make_pair(std::string("*"), act),
                            std::make_pair(std::string("*"), std::string("*"))}) {
    if (auto it = table_.find(probe); it != table_.end()) return &it->second;
  }
  return nullptr;
}

void ScriptedScenario::check_reachable() const {
  std::set<std::string> seen{start_key_};
  std::deque<std::string> frontier{start_key_};
  while (!frontier.empty()) {
    const std::string key = frontier.front();
    frontier.pop_front();
    for (const auto& act : scenario_->action_space->acts()) {
      const ScriptedEntry* e = find(key, act.id);
      if (!e) {
        throw ConfigError("scripted scenario '" + scenario_->id + "' has no transition for (key '" +
                          key + "', act '" + act.id + "')");
      }
      for (const auto& b : e->branches) {
        if (!is_terminal_signal(b.signal) && seen.insert(b.next_key).second) {
          frontier.push_back(b.next_key);
        }
      }
    }
  }
}

DialogueState ScriptedScenario::initial_state(bool with_user_opener) const {
  auto s = DialogueState::open(scenario_, with_user_opener);
  s.set_env_key(start_key_);
  return s;
}

// ---------------------------------------------------------------------------

ScriptedEnvironment::ScriptedEnvironment(std::shared_ptr<const ScriptedScenario> script)
    : script_(std::move(script)) {
  if (!script_) throw PreconditionError("scripted environment needs a script");
}

const ScriptedEntry& ScriptedEnvironment::lookup(const DialogueState& state,
                                                 const DialogueAct& act) const {
  if (!state.ongoing()) throw PreconditionError("step on a terminal dialogue state");
  const ScriptedEntry* e = script_->find(state.env_key(), act.id);
  if (!e) {
    throw ConfigError("no scripted transition for (key '" + state.env_key() + "', act '" +
                      act.id + "')");
  }
  return *e;
}

StepOutcome ScriptedEnvironment::step(const DialogueState& state, const DialogueAct& act,
                                      Rng& rng) const {
  const ScriptedEntry& entry = lookup(state, act);

  const ScriptedBranch* chosen = &entry.branches.back();
  if (entry.branches.size() > 1) {
    const double u = uniform01(rng);
    double cumulative = 0.0;
    for (const auto& b : entry.branches) {
      cumulative += b.probability;
      if (u < cumulative) {
        chosen = &b;
        break;
      }
    }
  }

  StepOutcome out{state, chosen->signal};
  out.state.append_system(act, entry.system_text.value_or(act.label));
  out.state.append_user(chosen->reply);
  out.state.set_env_key(chosen->next_key);
  if (chosen->signal == EnvSignal::DealReached) out.state.set_deal_price(chosen->deal_price);
  apply_signal(out.state, chosen->signal);
  return out;
}

DialogueState ScriptedEnvironment::system_turn(const DialogueState& state, const DialogueAct& act,
                                               Rng& /*rng*/) const {
  const ScriptedEntry& entry = lookup(state, act);
  DialogueState next = state;
  next.append_system(act, entry.system_text.value_or(act.label));
  // Live play follows the first branch's key; the human supplies the reply.
  next.set_env_key(entry.branches.front().next_key);
  return next;
}

StepOutcome ScriptedEnvironment::assess_user_turn(const DialogueState& state, Rng& /*rng*/) const {
  if (!state.ongoing()) throw PreconditionError("assessing a terminal dialogue state");
  if (state.history().empty() || state.history().back().speaker != Speaker::User) {
    throw PreconditionError("no user utterance to assess");
  }
  const std::string text = lower(state.history().back().text);
  StepOutcome out{state, EnvSignal::UserOngoing};
  for (const auto& rule : script_->live_rules()) {
    if (text.find(rule.contains) != std::string::npos) {
      out.signal = rule.signal;
      if (rule.signal == EnvSignal::DealReached) out.state.set_deal_price(rule.deal_price);
      break;
    }
  }
  apply_signal(out.state, out.signal);
  return out;
}

}  // namespace nrpa_gd

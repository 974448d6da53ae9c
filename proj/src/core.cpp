#include "nrpa_gd/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::ESConv: return "ESConv";
    case Dataset::CIMA: return "CIMA";
    case Dataset::CraigslistBargain: return "CraigslistBargain";
    case Dataset::P4G: return "P4G";
  }
  return "?";
}

Dataset parse_dataset(std::string_view s) {
  for (auto d : {Dataset::ESConv, Dataset::CIMA, Dataset::CraigslistBargain, Dataset::P4G}) {
    if (to_string(d) == s) return d;
  }
  throw ConfigError("unknown dataset '" + std::string(s) + "'");
}

std::string_view to_string(Terminal t) {
  switch (t) {
    case Terminal::Ongoing: return "Ongoing";
    case Terminal::Solved: return "Solved";
    case Terminal::Failed: return "Failed";
    case Terminal::TurnBudgetExhausted: return "TurnBudgetExhausted";
  }
  return "?";
}

Terminal parse_terminal(std::string_view s) {
  for (auto t : {Terminal::Ongoing, Terminal::Solved, Terminal::Failed,
                 Terminal::TurnBudgetExhausted}) {
    if (to_string(t) == s) return t;
  }
  throw ConfigError("unknown terminal class '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// ActionSpace

ActionSpace::ActionSpace(Dataset dataset, std::vector<DialogueAct> acts)
    : dataset_(dataset), acts_(std::move(acts)) {
  if (acts_.size() < 2) {
    throw ConfigError("action space needs at least 2 acts, got " + std::to_string(acts_.size()));
  }
  std::set<std::string> seen;
  for (const auto& a : acts_) {
    if (a.id.empty()) throw ConfigError("dialogue act with empty id");
    if (a.id == kOpeningAct) throw ConfigError("dialogue act id 'opening' is reserved");
    if (a.prompt_text.empty()) throw ConfigError("dialogue act '" + a.id + "' has empty prompt_text");
    if (!seen.insert(a.id).second) throw ConfigError("duplicate dialogue act id '" + a.id + "'");
  }
}

ActionSpace ActionSpace::from_json(const nlohmann::json& j) {
  try {
    std::vector<DialogueAct> acts;
    for (const auto& a : j.at("acts")) {
      DialogueAct act{a.at("id").get<std::string>(), a.value("label", std::string{}),
                      a.at("prompt_text").get<std::string>()};
      if (act.label.empty()) act.label = act.id;
      acts.push_back(std::move(act));
    }
    return ActionSpace(parse_dataset(j.at("dataset").get<std::string>()), std::move(acts));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed action space: ") + e.what());
  }
}

ActionSpace ActionSpace::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open action space file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ActionSpace::to_json() const {
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : acts_) {
    acts.push_back({{"id", a.id}, {"label", a.label}, {"prompt_text", a.prompt_text}});
  }
  return {{"dataset", std::string(to_string(dataset_))}, {"acts", acts}};
}

std::optional<std::size_t> ActionSpace::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < acts_.size(); ++i) {
    if (acts_[i].id == id) return i;
  }
  return std::nullopt;
}

const DialogueAct& ActionSpace::act(std::string_view id) const {
  auto i = index_of(id);
  if (!i) throw PreconditionError("unknown dialogue act '" + std::string(id) + "'");
  return acts_[*i];
}

// ---------------------------------------------------------------------------
// DialogueState

DialogueState::DialogueState(std::shared_ptr<const ScenarioConfig> scenario)
    : scenario_(std::move(scenario)) {}

DialogueState DialogueState::open(std::shared_ptr<const ScenarioConfig> scenario,
                                  bool with_user_opener) {
  if (!scenario || !scenario->action_space) {
    throw PreconditionError("dialogue state needs a scenario with an action space");
  }
  DialogueState s(std::move(scenario));
  s.history_.push_back({Speaker::System, s.scenario_->opening_system, std::string(kOpeningAct), 0});
  if (with_user_opener) {
    s.history_.push_back({Speaker::User, s.scenario_->opening_user, std::nullopt, 1});
  }
  return s;
}

std::vector<std::string> DialogueState::act_sequence() const {
  std::vector<std::string> out;
  for (const auto& u : history_) {
    if (u.speaker == Speaker::System && u.turn_index >= 1) out.push_back(*u.act);
  }
  return out;
}

void DialogueState::require_ongoing() const {
  if (terminal_ != Terminal::Ongoing) {
    throw PreconditionError("dialogue already ended (" + std::string(to_string(terminal_)) + ")");
  }
}

void DialogueState::append_system(const DialogueAct& act, std::string text) {
  require_ongoing();
  if (!history_.empty() && history_.back().speaker == Speaker::System) {
    throw PreconditionError("system turn must follow a user turn");
  }
  ++turn_count_;
  history_.push_back({Speaker::System, std::move(text), act.id, turn_count_});
}

void DialogueState::append_user(std::string text) {
  require_ongoing();
  if (history_.empty() || history_.back().speaker != Speaker::System) {
    throw PreconditionError("user turn must follow a system turn");
  }
  history_.push_back({Speaker::User, std::move(text), std::nullopt, turn_count_ + 1});
}

void DialogueState::set_terminal(Terminal t) {
  require_ongoing();
  terminal_ = t;
}

bool DialogueState::operator==(const DialogueState& o) const {
  auto same_history = std::equal(history_.begin(), history_.end(), o.history_.begin(),
                                 o.history_.end(), [](const Utterance& a, const Utterance& b) {
                                   return a.speaker == b.speaker && a.text == b.text &&
                                          a.act == b.act && a.turn_index == b.turn_index;
                                 });
  return scenario_ == o.scenario_ && same_history && turn_count_ == o.turn_count_ &&
         terminal_ == o.terminal_ && env_key_ == o.env_key_ && deal_price_ == o.deal_price_ &&
         deal_price_invalid_ == o.deal_price_invalid_;
}

// ---------------------------------------------------------------------------
// Policy and softmax

Policy::Policy(std::vector<double> weights) : weights_(std::move(weights)) {
  for (double w : weights_) {
    if (!std::isfinite(w)) throw PreconditionError("policy weights must be finite");
  }
}

std::vector<double> softmax_probs(std::span<const double> weights) {
  if (weights.empty()) throw PreconditionError("softmax of an empty weight vector");
  const double top = *std::max_element(weights.begin(), weights.end());
  if (!std::isfinite(top)) throw PreconditionError("softmax weights must be finite");
  std::vector<double> p(weights.size());
  double z = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i])) throw PreconditionError("softmax weights must be finite");
    p[i] = std::exp(weights[i] - top);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

std::vector<double> softmax_probs(const Policy& policy) { return softmax_probs(policy.weights()); }

std::size_t sample_index(const Policy& policy, Rng& rng) {
  const auto p = softmax_probs(policy);
  const double u = uniform01(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cumulative += p[i];
    if (u < cumulative) return i;
  }
  // Rounding can leave the cumulative sum a hair below 1.
  for (std::size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0.0) return i;
  }
  return p.size() - 1;
}

const DialogueAct& sample_action(const Policy& policy, const ActionSpace& space, Rng& rng) {
  if (policy.size() != space.size()) {
    throw PreconditionError("policy size does not match action space");
  }
  return space.at(sample_index(policy, rng));
}

Policy uniform_policy(const ActionSpace& space) {
  return Policy(std::vector<double>(space.size(), 0.0));
}

// ---------------------------------------------------------------------------
// NrpaParams

void NrpaParams::validate() const {
  if (level < 1) throw ConfigError("nrpa.level must be >= 1");
  if (iterations < 1) throw ConfigError("nrpa.iterations must be >= 1");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("nrpa.alpha must be > 0");
  if (early_stopping < 1) throw ConfigError("nrpa.early_stopping must be >= 1");
  if (min_iterations < 1) throw ConfigError("nrpa.min_iterations must be >= 1");
  if (min_iterations > iterations) throw ConfigError("nrpa.min_iterations must be <= iterations");
  if (max_playout_steps < 1) throw ConfigError("nrpa.max_playout_steps must be >= 1");
  if (!(weight_clamp > 0.0)) throw ConfigError("nrpa.weight_clamp must be > 0");
}

nlohmann::json NrpaParams::to_json() const {
  return {
      {"level", level},
      {"iterations", iterations},
      {"alpha", alpha},
      {"early_stopping", early_stopping},
      {"min_iterations", min_iterations},
      {"max_playout_steps", max_playout_steps},
      {"rng_seed", rng_seed},
      {"stop_on_stagnation", stop_on_stagnation},
      {"stop_on_solved", stop_on_solved},
      {"root_selection",
       root_selection == RootSelection::BestSequenceHead ? "best_sequence_head" : "policy_argmax"},
      {"adapt_variant", adapt_variant == AdaptVariant::FixedPolicy ? "fixed_policy" : "classical"},
      {"weight_clamp", weight_clamp},
  };
}

NrpaParams NrpaParams::from_json(const nlohmann::json& j) {
  NrpaParams p;
  try {
    p.level = j.value("level", p.level);
    p.iterations = j.value("iterations", p.iterations);
    p.alpha = j.value("alpha", p.alpha);
    p.early_stopping = j.value("early_stopping", p.early_stopping);
    p.min_iterations = j.value("min_iterations", p.min_iterations);
    p.max_playout_steps = j.value("max_playout_steps", p.max_playout_steps);
    p.rng_seed = j.value("rng_seed", p.rng_seed);
    p.stop_on_stagnation = j.value("stop_on_stagnation", p.stop_on_stagnation);
    p.stop_on_solved = j.value("stop_on_solved", p.stop_on_solved);
    p.weight_clamp = j.value("weight_clamp", p.weight_clamp);
    if (j.contains("root_selection")) {
      auto s = j.at("root_selection").get<std::string>();
      if (s == "best_sequence_head") {
        p.root_selection = RootSelection::BestSequenceHead;
      } else if (s == "policy_argmax") {
        p.root_selection = RootSelection::PolicyArgmax;
      } else {
        throw ConfigError("nrpa.root_selection: unknown value '" + s + "'");
      }
    }
    if (j.contains("adapt_variant")) {
      auto s = j.at("adapt_variant").get<std::string>();
      if (s == "fixed_policy") {
        p.adapt_variant = AdaptVariant::FixedPolicy;
      } else if (s == "classical") {
        p.adapt_variant = AdaptVariant::Classical;
      } else {
        throw ConfigError("nrpa.adapt_variant: unknown value '" + s + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("nrpa params: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace nrpa_gd

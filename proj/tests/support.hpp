#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "nrpa_gd/core.hpp"
#include "nrpa_gd/env.hpp"
#include "nrpa_gd/errors.hpp"
#include "nrpa_gd/llm_env.hpp"
#include "nrpa_gd/nrpa.hpp"
#include "nrpa_gd/prompts.hpp"
#include "nrpa_gd/reward.hpp"

namespace nrpa_gd::testing {

inline std::filesystem::path data_dir() { return NRPA_GD_DATA_DIR; }
inline std::filesystem::path golden_dir() { return NRPA_GD_GOLDEN_DIR; }

inline std::shared_ptr<const ScriptedScenario> load_script(const std::string& name) {
  return std::make_shared<const ScriptedScenario>(
      ScriptedScenario::load(data_dir() / "scripted" / name));
}

struct ScriptedFixture {
  std::shared_ptr<const ScriptedScenario> script;
  ScriptedEnvironment env;
  explicit ScriptedFixture(const std::string& name) : script(load_script(name)), env(script) {}
  DialogueState initial(bool user_opener = true) const { return script->initial_state(user_opener); }
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("nrpa_gd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::shared_ptr<const PromptLibrary> prompt_library() {
  return std::make_shared<const PromptLibrary>(PromptLibrary::load(data_dir() / "prompts"));
}

// Opening-only scenario with a small inline action space.
inline std::shared_ptr<const ScenarioConfig> tiny_scenario(int n_acts, int max_turns = 10,
                                                           Dataset dataset = Dataset::ESConv) {
  std::vector<DialogueAct> acts;
  for (int i = 0; i < n_acts; ++i) {
    acts.push_back({"a" + std::to_string(i), "Act " + std::to_string(i), "do " + std::to_string(i)});
  }
  auto sc = std::make_shared<ScenarioConfig>();
  sc->id = "tiny";
  sc->dataset = dataset;
  sc->max_turns = max_turns;
  sc->action_space = std::make_shared<const ActionSpace>(dataset, std::move(acts));
  sc->opening_system = "Hello.";
  sc->opening_user = "Hi.";
  return sc;
}

// Every system turn realizes act i as "s<i>" and the user answers "u";
// the dialogue never ends on its own.
class EchoEnvironment : public Environment {
 public:
  StepOutcome step(const DialogueState& state, const DialogueAct& act, Rng&) const override {
    StepOutcome out{state, EnvSignal::UserOngoing};
    out.state.append_system(act, "s:" + act.id);
    out.state.append_user("u");
    apply_signal(out.state, out.signal);
    return out;
  }
  DialogueState system_turn(const DialogueState& state, const DialogueAct& act, Rng&) const override {
    DialogueState next = state;
    next.append_system(act, "s:" + act.id);
    return next;
  }
  StepOutcome assess_user_turn(const DialogueState& state, Rng&) const override {
    StepOutcome out{state, EnvSignal::UserOngoing};
    apply_signal(out.state, out.signal);
    return out;
  }
};

// Fails after `ok_steps` successful steps.
class FailingEnvironment : public EchoEnvironment {
 public:
  explicit FailingEnvironment(long ok_steps) : remaining_(ok_steps) {}
  StepOutcome step(const DialogueState& state, const DialogueAct& act, Rng& rng) const override {
    if (remaining_.fetch_sub(1) <= 0) throw TransportError("backend unavailable");
    return EchoEnvironment::step(state, act, rng);
  }
  DialogueState system_turn(const DialogueState& state, const DialogueAct& act, Rng& rng) const override {
    if (remaining_.fetch_sub(1) <= 0) throw TransportError("backend unavailable");
    return EchoEnvironment::system_turn(state, act, rng);
  }

 private:
  mutable std::atomic<long> remaining_;
};

// Exhaustive search over act sequences up to the horizon: the best score
// any fixed act sequence can reach (for deterministic tables).
inline double brute_force_optimum(const DialogueState& start, const Environment& env,
                                  const RewardSpec& reward, int horizon,
                                  std::vector<std::string>* best_seq = nullptr,
                                  long* leaves = nullptr) {
  const auto& space = *start.scenario().action_space;
  double best = -1e300;
  std::vector<std::string> seq;
  Rng rng(0);
  std::function<void(const DialogueState&, int)> rec = [&](const DialogueState& s, int depth) {
    if (!s.ongoing() || depth == horizon) {
      DialogueState end = s;
      if (end.ongoing()) end.set_terminal(Terminal::TurnBudgetExhausted);
      if (leaves) ++*leaves;
      const double v = reward.evaluate(end);
      if (v > best) {
        best = v;
        if (best_seq) *best_seq = seq;
      }
      return;
    }
    for (const auto& a : space.acts()) {
      seq.push_back(a.id);
      rec(env.step(s, a, rng).state, depth + 1);
      seq.pop_back();
    }
  };
  rec(start, 0);
  return best;
}

}  // namespace nrpa_gd::testing

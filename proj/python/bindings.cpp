#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nrpa_gd/commands.hpp"
#include "nrpa_gd/config.hpp"
#include "nrpa_gd/env.hpp"
#include "nrpa_gd/eval.hpp"
#include "nrpa_gd/nrpa.hpp"

namespace py = pybind11;
using namespace nrpa_gd;

namespace {

// JSON crosses the boundary as text; the Python package wraps it in dicts.
std::string plan_json(const std::string& script_path, const std::string& params_json,
                      const std::string& reward_json) {
  const auto script = std::make_shared<const ScriptedScenario>(ScriptedScenario::load(script_path));
  const ScriptedEnvironment env(script);
  const auto params = NrpaParams::from_json(nlohmann::json::parse(params_json));
  params.validate();
  const auto reward = RewardSpec::from_json(nlohmann::json::parse(reward_json));
  Rng rng(params.rng_seed);
  const auto plan = plan_next_act(script->initial_state(), env, params, reward, rng);
  return nlohmann::json{{"act", plan.act_id},
                        {"best_score", plan.search.best.score},
                        {"best_sequence", plan.search.best.sequence},
                        {"stats", plan.search.stats.to_json()}}
      .dump();
}

std::string run_json(const std::string& config_path, const std::string& out_dir) {
  auto cfg = RunConfig::load(config_path);
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.validate();
  std::ostringstream sink;
  const auto res = cmd_run(cfg, sink);
  return nlohmann::json{{"run_dir", res.run_dir.string()}, {"summary", res.summary.to_json()}}.dump();
}

std::string summarize_json(const std::string& episodes_path) {
  const auto records = read_episodes(episodes_path);
  return summarize(records).to_json().dump();
}

DuelVerdict parse_verdict(const std::string& s) {
  if (s == "A") return DuelVerdict::A;
  if (s == "B") return DuelVerdict::B;
  if (s == "Tie") return DuelVerdict::Tie;
  throw ConfigError("verdict must be A, B or Tie, got '" + s + "'");
}

std::string win_rate_json(const std::vector<std::string>& verdicts, int runs) {
  std::vector<DuelVerdict> v;
  for (const auto& s : verdicts) v.push_back(parse_verdict(s));
  return win_rate(v, runs).to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "NRPA dialogue policy planning core";

  // Registered base first so the more specific translators take precedence.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
  py::register_exception<EnvironmentError>(m, "EnvironmentError", PyExc_RuntimeError);
  py::register_exception<RenderError>(m, "RenderError", PyExc_ValueError);

  m.def("softmax", [](const std::vector<double>& w) { return softmax_probs(std::span<const double>(w)); }, py::arg("weights"));
  m.def("reward",
        [](const std::string& terminal, int turns, const std::string& spec_json) {
          return RewardSpec::from_json(nlohmann::json::parse(spec_json)).evaluate(parse_terminal(terminal), turns);
        },
        py::arg("terminal"), py::arg("turns"), py::arg("spec_json") = "{}");
  m.def("compute_sl", &compute_sl, py::arg("deal_price"), py::arg("seller_target"), py::arg("buyer_target"));
  m.def("tally_votes",
        [](int a, int b, int tie) { return std::string(to_string(tally_votes(a, b, tie))); },
        py::arg("a"), py::arg("b"), py::arg("tie"));
  m.def("episode_seed", &episode_seed, py::arg("run_seed"), py::arg("index"));

  m.def("plan_json", &plan_json, py::arg("script_path"), py::arg("params_json") = "{}",
        py::arg("reward_json") = "{}", py::call_guard<py::gil_scoped_release>());
  m.def("run_json", &run_json, py::arg("config_path"), py::arg("out_dir") = "",
        py::call_guard<py::gil_scoped_release>());
  m.def("summarize_json", &summarize_json, py::arg("episodes_path"));
  m.def("win_rate_json", &win_rate_json, py::arg("verdicts"), py::arg("runs"));
}

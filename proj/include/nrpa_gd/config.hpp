#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrpa_gd/core.hpp"
#include "nrpa_gd/env.hpp"
#include "nrpa_gd/eval.hpp"
#include "nrpa_gd/llm_client.hpp"
#include "nrpa_gd/llm_env.hpp"
#include "nrpa_gd/prompts.hpp"
#include "nrpa_gd/reward.hpp"

namespace nrpa_gd {

enum class RunMode { Scripted, Llm, Replay };

std::string_view to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);

struct TransportConfig {
  std::string kind = "http";  // "http" or "simulated"
  std::string base_url;       // empty: taken from the environment
  std::string api_key_env = "NRPA_GD_API_KEY";
  int timeout_s = 60;
  // simulated only
  int solve_after_turns = 3;
  double deal_price = 0.0;
};

struct ServiceConfig {
  std::string bind = "127.0.0.1:8080";
  std::filesystem::path sessions_dir = "sessions";
  int max_concurrent_turns = 4;
};

// One JSON document. Relative paths resolve against the config file.
struct RunConfig {
  std::filesystem::path source;
  RunMode mode = RunMode::Scripted;
  std::optional<Dataset> dataset;
  // scripted: scripted-scenario files; llm: scenario files
  std::vector<std::filesystem::path> scenario_files;
  std::filesystem::path prompts_dir;
  std::filesystem::path replay_episodes;

  NrpaParams nrpa;
  RewardSpec reward;
  LlmEnvConfig llm;
  TransportConfig transport;
  RetryPolicy retry;
  std::filesystem::path cache_path;
  int max_in_flight = 8;

  int workers = 1;
  int episodes_per_scenario = 1;
  std::filesystem::path out_dir = "runs";
  std::string run_id;

  JudgeConfig judge;
  int duel_runs = 3;

  ServiceConfig service;

  // Field-level ConfigError on anything missing or inconsistent.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
  nlohmann::json to_json() const;

  // Explicit run_id, else derived from mode, dataset and search settings.
  std::string effective_run_id() const;
};

// Scenarios paired with the environment that simulates them.
struct ScenarioEntry {
  std::shared_ptr<const ScenarioConfig> scenario;
  std::shared_ptr<const Environment> env;
  std::shared_ptr<const ScriptedScenario> script;  // scripted mode only
};

// Everything a run, duel or service needs, built once from a RunConfig.
struct Workbench {
  RunConfig config;
  std::shared_ptr<const PromptLibrary> prompts;  // null when no prompt dir is configured
  std::shared_ptr<Transport> transport;
  std::shared_ptr<LlmClient> client;
  std::vector<ScenarioEntry> scenarios;

  static Workbench build(const RunConfig& cfg);

  const ScenarioEntry* find(const std::string& scenario_id) const;
  // Lazily creates the LLM client when the mode itself does not need one.
  LlmClient& llm_client();
};

}  // namespace nrpa_gd

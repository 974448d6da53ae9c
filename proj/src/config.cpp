#include "nrpa_gd/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::Scripted: return "scripted";
    case RunMode::Llm: return "llm";
    case RunMode::Replay: return "replay";
  }
  return "?";
}

RunMode parse_run_mode(std::string_view s) {
  for (auto m : {RunMode::Scripted, RunMode::Llm, RunMode::Replay}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("mode: expected scripted, llm or replay, got '" + std::string(s) + "'");
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

void require_file(const std::filesystem::path& p, const char* field) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError(std::string(field) + ": file not found: " + p.string());
  }
}

// Section parsers rethrow json errors with the section name.
template <typename F>
auto section(const char* name, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(name, 0) == 0) throw;
    throw ConfigError(std::string(name) + ": " + what);
  }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.mode = parse_run_mode(section("mode", [&] { return j.at("mode").get<std::string>(); }));
  if (j.contains("dataset")) {
    c.dataset = section("dataset", [&] { return parse_dataset(j.at("dataset").get<std::string>()); });
  }
  section("scenarios", [&] {
    if (!j.contains("scenarios")) return 0;
    const auto& s = j.at("scenarios");
    if (s.is_string()) {
      c.scenario_files.push_back(resolve(base_dir, s.get<std::string>()));
    } else {
      for (const auto& f : s) c.scenario_files.push_back(resolve(base_dir, f.get<std::string>()));
    }
    return 0;
  });
  if (j.contains("prompts_dir")) {
    c.prompts_dir = resolve(base_dir, section("prompts_dir", [&] { return j.at("prompts_dir").get<std::string>(); }));
  }
  if (j.contains("replay_episodes")) {
    c.replay_episodes =
        resolve(base_dir, section("replay_episodes", [&] { return j.at("replay_episodes").get<std::string>(); }));
  }
  c.nrpa = section("nrpa", [&] { return NrpaParams::from_json(j.value("nrpa", nlohmann::json::object())); });
  c.reward = section("reward", [&] { return RewardSpec::from_json(j.value("reward", nlohmann::json::object())); });

  const auto llm = j.value("llm", nlohmann::json::object());
  c.llm = section("llm", [&] { return LlmEnvConfig::from_json(llm); });
  section("llm.transport", [&] {
    const auto t = llm.value("transport", nlohmann::json::object());
    c.transport.kind = t.value("kind", c.transport.kind);
    c.transport.base_url = t.value("base_url", c.transport.base_url);
    c.transport.api_key_env = t.value("api_key_env", c.transport.api_key_env);
    c.transport.timeout_s = t.value("timeout_s", c.transport.timeout_s);
    c.transport.solve_after_turns = t.value("solve_after_turns", c.transport.solve_after_turns);
    c.transport.deal_price = t.value("deal_price", c.transport.deal_price);
    return 0;
  });
  c.retry = section("llm.retry", [&] { return RetryPolicy::from_json(llm.value("retry", nlohmann::json::object())); });
  if (llm.contains("cache_path")) {
    c.cache_path = resolve(base_dir, section("llm.cache_path", [&] { return llm.at("cache_path").get<std::string>(); }));
  }
  c.max_in_flight = section("llm.max_in_flight", [&] { return llm.value("max_in_flight", c.max_in_flight); });

  section("run", [&] {
    c.workers = j.value("workers", c.workers);
    c.episodes_per_scenario = j.value("episodes_per_scenario", c.episodes_per_scenario);
    c.out_dir = resolve(base_dir, j.value("out_dir", c.out_dir.string()));
    c.run_id = j.value("run_id", c.run_id);
    return 0;
  });
  section("judge", [&] {
    const auto jj = j.value("judge", nlohmann::json::object());
    c.judge.model = jj.value("model", c.llm.judge_model);
    c.judge.temperature = jj.value("temperature", c.llm.judge_temperature);
    c.judge.samples = jj.value("samples", c.judge.samples);
    c.judge.max_tokens = jj.value("max_tokens", c.judge.max_tokens);
    c.duel_runs = jj.value("runs", c.duel_runs);
    return 0;
  });
  section("service", [&] {
    const auto s = j.value("service", nlohmann::json::object());
    c.service.bind = s.value("bind", c.service.bind);
    c.service.sessions_dir = resolve(base_dir, s.value("sessions_dir", c.service.sessions_dir.string()));
    c.service.max_concurrent_turns = s.value("max_concurrent_turns", c.service.max_concurrent_turns);
    return 0;
  });
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: file not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  c.source = path;
  return c;
}

void RunConfig::validate() const {
  nrpa.validate();
  reward.validate();
  llm.validate();
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (episodes_per_scenario < 1) throw ConfigError("episodes_per_scenario must be >= 1");
  if (max_in_flight < 1) throw ConfigError("llm.max_in_flight must be >= 1");
  if (judge.samples < 1) throw ConfigError("judge.samples must be >= 1");
  if (duel_runs < 1) throw ConfigError("judge.runs must be >= 1");
  if (service.max_concurrent_turns < 1) throw ConfigError("service.max_concurrent_turns must be >= 1");
  if (transport.kind != "http" && transport.kind != "simulated") {
    throw ConfigError("llm.transport.kind: expected http or simulated, got '" + transport.kind + "'");
  }
  switch (mode) {
    case RunMode::Scripted:
    case RunMode::Llm:
      if (scenario_files.empty()) throw ConfigError("scenarios: at least one file is required");
      for (const auto& f : scenario_files) require_file(f, "scenarios");
      if (mode == RunMode::Llm && prompts_dir.empty()) {
        throw ConfigError("prompts_dir: required in llm mode");
      }
      break;
    case RunMode::Replay:
      if (replay_episodes.empty()) throw ConfigError("replay_episodes: required in replay mode");
      require_file(replay_episodes, "replay_episodes");
      break;
  }
  if (!prompts_dir.empty() && !std::filesystem::is_directory(prompts_dir)) {
    throw ConfigError("prompts_dir: directory not found: " + prompts_dir.string());
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : scenario_files) files.push_back(f.filename().string());
  nlohmann::json llm_j = llm.to_json();
  llm_j["transport"] = {{"kind", transport.kind},
                        {"timeout_s", transport.timeout_s},
                        {"solve_after_turns", transport.solve_after_turns},
                        {"deal_price", transport.deal_price}};
  llm_j["retry"] = {{"max_attempts", retry.max_attempts},
                    {"base_delay_ms", retry.base_delay.count()},
                    {"multiplier", retry.multiplier},
                    {"max_delay_ms", retry.max_delay.count()}};
  llm_j["max_in_flight"] = max_in_flight;
  // File names only, so the snapshot does not depend on where the repo lives.
  return {{"mode", std::string(to_string(mode))},
          {"dataset", dataset ? nlohmann::json(std::string(to_string(*dataset))) : nlohmann::json(nullptr)},
          {"scenarios", files},
          {"replay_episodes", replay_episodes.empty() ? nlohmann::json(nullptr)
                                                      : nlohmann::json(replay_episodes.filename().string())},
          {"nrpa", nrpa.to_json()},
          {"reward", reward.to_json()},
          {"llm", llm_j},
          {"workers", workers},
          {"episodes_per_scenario", episodes_per_scenario},
          {"run_id", effective_run_id()},
          {"judge",
           {{"model", judge.model},
            {"temperature", judge.temperature},
            {"samples", judge.samples},
            {"runs", duel_runs}}}};
}

std::string RunConfig::effective_run_id() const {
  if (!run_id.empty()) return run_id;
  std::ostringstream os;
  os << to_string(mode);
  if (dataset) os << '-' << to_string(*dataset);
  if (mode != RunMode::Replay) os << "-L" << nrpa.level << "-N" << nrpa.iterations;
  os << "-seed" << nrpa.rng_seed;
  return os.str();
}

// ---------------------------------------------------------------------------

Workbench Workbench::build(const RunConfig& cfg) {
  Workbench wb;
  wb.config = cfg;
  if (!cfg.prompts_dir.empty()) {
    wb.prompts = std::make_shared<const PromptLibrary>(PromptLibrary::load(cfg.prompts_dir));
  }

  if (cfg.mode == RunMode::Scripted) {
    for (const auto& f : cfg.scenario_files) {
      auto script = std::make_shared<const ScriptedScenario>(ScriptedScenario::load(f));
      script->check_reachable();
      if (cfg.dataset && script->scenario()->dataset != *cfg.dataset) {
        throw ConfigError(f.string() + ": dataset differs from the configured one");
      }
      wb.scenarios.push_back({script->scenario(), std::make_shared<ScriptedEnvironment>(script), script});
    }
  } else if (cfg.mode == RunMode::Llm) {
    wb.llm_client();
    auto env = std::make_shared<const LlmEnvironment>(wb.client, wb.prompts, cfg.llm);
    for (const auto& f : cfg.scenario_files) {
      for (auto& sc : load_scenarios(f, *wb.prompts)) {
        if (cfg.dataset && sc->dataset != *cfg.dataset) {
          throw ConfigError(f.string() + ": dataset differs from the configured one");
        }
        wb.scenarios.push_back({std::move(sc), env, nullptr});
      }
    }
  }
  for (std::size_t i = 0; i < wb.scenarios.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      if (wb.scenarios[k].scenario->id == wb.scenarios[i].scenario->id) {
        throw ConfigError("scenarios: duplicate scenario id '" + wb.scenarios[i].scenario->id + "'");
      }
    }
  }
  return wb;
}

const ScenarioEntry* Workbench::find(const std::string& scenario_id) const {
  for (const auto& e : scenarios) {
    if (e.scenario->id == scenario_id) return &e;
  }
  return nullptr;
}

LlmClient& Workbench::llm_client() {
  if (client) return *client;
  if (config.transport.kind == "simulated") {
    transport = make_simulated_transport(config.llm, config.transport.solve_after_turns,
                                         config.transport.deal_price);
  } else if (config.transport.base_url.empty()) {
    transport = HttpTransport::from_environment();
  } else {
    const char* key = std::getenv(config.transport.api_key_env.c_str());
    if (!key) key = std::getenv("OPENAI_API_KEY");
    transport = std::make_shared<HttpTransport>(config.transport.base_url, key ? key : "",
                                                std::chrono::seconds(config.transport.timeout_s));
  }
  std::shared_ptr<ResponseCache> cache;
  if (config.llm.cache_enabled) {
    cache = config.cache_path.empty() ? std::make_shared<ResponseCache>()
                                      : std::make_shared<ResponseCache>(config.cache_path);
  }
  client = std::make_shared<LlmClient>(transport, config.retry, cache, config.max_in_flight);
  return *client;
}

}  // namespace nrpa_gd

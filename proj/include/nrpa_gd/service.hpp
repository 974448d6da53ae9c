#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrpa_gd/config.hpp"
#include "nrpa_gd/errors.hpp"
#include "nrpa_gd/eval.hpp"
#include "nrpa_gd/nrpa.hpp"

namespace nrpa_gd {

// Error carrying the HTTP status the API should answer with.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct Session;

// Live sessions where a human plays the user against the planner.
class SessionService {
 public:
  SessionService(std::vector<ScenarioEntry> catalog, NrpaParams defaults, RewardSpec reward,
                 ServiceConfig cfg);
  ~SessionService();

  // {"scenario_id", "dataset"?, "params"?}
  nlohmann::json create_session(const nlohmann::json& body);
  // {"text", "nonce"?, "params"?}. A repeated nonce returns the earlier
  // turn without planning again.
  nlohmann::json post_message(const std::string& id, const nlohmann::json& body);
  nlohmann::json get_session(const std::string& id) const;
  nlohmann::json get_stats(const std::string& id) const;
  nlohmann::json list_scenarios() const;

  // Session transcript in the episode schema.
  EpisodeRecord record(const std::string& id) const;
  // Rewrites sessions_dir/<id>.json for every session and
  // sessions_dir/episodes.jsonl with all of them.
  void flush() const;

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& s) const;

  std::vector<ScenarioEntry> catalog_;
  NrpaParams defaults_;
  RewardSpec reward_;
  ServiceConfig cfg_;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  long next_id_ = 1;
  std::counting_semaphore<1024> turn_slots_;
};

// "host:port"; throws ConfigError on anything else.
std::pair<std::string, int> parse_bind_address(const std::string& bind);

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<SessionService> service);
  ~HttpServer();

  // Returns the bound port (useful with port 0). Throws ConfigError on failure.
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Blocks until SIGINT/SIGTERM, then flushes sessions. Returns an exit code.
int cmd_serve(const RunConfig& cfg, const std::string& bind_override, std::ostream& out);

}  // namespace nrpa_gd

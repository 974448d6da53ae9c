#include "nrpa_gd/service.hpp"

#include <csignal>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace nrpa_gd {

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(system_clock::now().time_since_epoch()).count();
}

std::string_view speaker_name(Speaker s) { return s == Speaker::System ? "system" : "user"; }

}  // namespace

struct Session {
  std::string id;
  ScenarioEntry entry;
  DialogueState state;
  NrpaParams params;
  Rng rng;
  std::vector<SearchStats> stats;
  std::map<std::string, nlohmann::json> nonce_results;
  bool in_flight = false;
  nlohmann::json progress = nullptr;
  double created_at = 0.0;
  double updated_at = 0.0;
  mutable std::mutex mu;

  Session(std::string id_, ScenarioEntry e, DialogueState s, NrpaParams p, std::uint64_t seed)
      : id(std::move(id_)), entry(std::move(e)), state(std::move(s)), params(p), rng(seed) {}
};

SessionService::SessionService(std::vector<ScenarioEntry> catalog, NrpaParams defaults,
                               RewardSpec reward, ServiceConfig cfg)
    : catalog_(std::move(catalog)),
      defaults_(defaults),
      reward_(reward),
      cfg_(std::move(cfg)),
      turn_slots_(std::clamp(cfg_.max_concurrent_turns, 1, 1024)) {
  if (catalog_.empty()) throw ConfigError("service: no scenarios to serve");
  defaults_.validate();
  std::filesystem::create_directories(cfg_.sessions_dir);
  // Avoid clobbering sessions kept from earlier runs.
  while (std::filesystem::exists(cfg_.sessions_dir / ("s" + std::to_string(next_id_) + ".json"))) {
    ++next_id_;
  }
}

SessionService::~SessionService() = default;

std::shared_ptr<Session> SessionService::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

namespace {

NrpaParams merge_params(const NrpaParams& base, const nlohmann::json& patch) {
  if (patch.is_null()) return base;
  if (!patch.is_object()) throw ServiceError(400, "params must be an object");
  nlohmann::json j = base.to_json();
  j.merge_patch(patch);
  try {
    NrpaParams p = NrpaParams::from_json(j);
    p.validate();
    return p;
  } catch (const ConfigError& e) {
    throw ServiceError(400, e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, std::string("params: ") + e.what());
  }
}

nlohmann::json history_json(const DialogueState& state) {
  nlohmann::json out = nlohmann::json::array();
  const auto& space = *state.scenario().action_space;
  for (const auto& u : state.history()) {
    nlohmann::json h{{"speaker", speaker_name(u.speaker)}, {"text", u.text}, {"turn_index", u.turn_index}};
    if (u.act) {
      h["act"] = *u.act;
      const auto idx = space.index_of(*u.act);
      h["act_label"] = idx ? space.at(*idx).label : *u.act;
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace

nlohmann::json SessionService::create_session(const nlohmann::json& body) {
  if (!body.is_object() || !body.contains("scenario_id") || !body["scenario_id"].is_string()) {
    throw ServiceError(400, "scenario_id is required");
  }
  const std::string sid = body["scenario_id"].get<std::string>();
  const ScenarioEntry* entry = nullptr;
  for (const auto& e : catalog_) {
    if (e.scenario->id != sid) continue;
    if (body.contains("dataset") && body["dataset"].is_string() &&
        body["dataset"].get<std::string>() != to_string(e.scenario->dataset)) {
      continue;
    }
    entry = &e;
    break;
  }
  if (!entry) throw ServiceError(404, "unknown scenario '" + sid + "'");
  const NrpaParams params = merge_params(defaults_, body.value("params", nlohmann::json(nullptr)));

  // The human supplies every user turn, so no scripted user opener.
  DialogueState state =
      entry->script ? entry->script->initial_state(false) : DialogueState::open(entry->scenario, false);

  std::shared_ptr<Session> s;
  {
    std::lock_guard lock(mu_);
    const long n = next_id_++;
    const std::string id = "s" + std::to_string(n);
    s = std::make_shared<Session>(id, *entry, std::move(state), params,
                                  episode_seed(params.rng_seed, static_cast<std::size_t>(n)));
    s->created_at = s->updated_at = now_seconds();
    sessions_.emplace(id, s);
  }
  persist(*s);
  return get_session(s->id);
}

nlohmann::json SessionService::post_message(const std::string& id, const nlohmann::json& body) {
  auto s = find(id);
  if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
    throw ServiceError(400, "text is required");
  }
  const std::string text = body["text"].get<std::string>();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ServiceError(400, "text is empty");
  const std::string nonce = body.contains("nonce") && body["nonce"].is_string() ? body["nonce"].get<std::string>() : "";

  std::optional<DialogueState> snapshot;
  NrpaParams params;
  Rng rng;
  {
    std::lock_guard lock(s->mu);
    if (!nonce.empty()) {
      auto it = s->nonce_results.find(nonce);
      if (it != s->nonce_results.end()) {
        auto dup = it->second;
        dup["duplicate"] = true;
        return dup;
      }
    }
    if (s->in_flight) throw ServiceError(409, "a turn is already in progress for session '" + id + "'");
    if (!s->state.ongoing()) throw ServiceError(409, "session '" + id + "' has ended");
    params = merge_params(s->params, body.value("params", nlohmann::json(nullptr)));
    snapshot = s->state;
    rng = s->rng;
    s->in_flight = true;
    s->progress = nullptr;
  }
  auto release = [&] {
    std::lock_guard lock(s->mu);
    s->in_flight = false;
  };

  DialogueState state = std::move(*snapshot);
  const Environment& env = *s->entry.env;
  nlohmann::json bundle;
  std::optional<SearchStats> turn_stats;
  try {
    turn_slots_.acquire();
    struct SlotGuard {
      std::counting_semaphore<1024>& sem;
      ~SlotGuard() { sem.release(); }
    } guard{turn_slots_};

    state.append_user(text);
    // The critic classifies the human message before any planning.
    state = env.assess_user_turn(state, rng).state;
    if (state.ongoing()) {
      auto observer = [&](int level, int iteration, const RolloutResult& best, const Policy&) {
        std::lock_guard lock(s->mu);
        s->progress = {{"level", level}, {"iteration", iteration}, {"best_score", best.score}};
      };
      PlanResult plan = plan_next_act(state, env, params, reward_, rng, observer);
      const DialogueAct& act = state.scenario().action_space->act(plan.act_id);
      state = env.system_turn(state, act, rng);
      turn_stats = plan.search.stats;
      bundle["act"] = {{"id", act.id}, {"label", act.label}};
      bundle["system"] = state.history().back().text;
      bundle["stats"] = plan.search.stats.to_json();
    } else {
      bundle["act"] = nullptr;
      bundle["system"] = nullptr;
      bundle["stats"] = nullptr;
    }
  } catch (const EnvironmentError& e) {
    release();
    spdlog::warn("session {}: environment failure, turn discarded: {}", id, e.what());
    throw ServiceError(502, std::string("environment failure: ") + e.what());
  } catch (...) {
    release();
    throw;
  }

  bundle["session_id"] = id;
  bundle["terminal"] = to_string(state.terminal());
  bundle["done"] = !state.ongoing();
  bundle["turn_count"] = state.turn_count();
  bundle["reward"] = state.ongoing() ? nlohmann::json(nullptr) : nlohmann::json(reward_.evaluate(state));
  bundle["duplicate"] = false;

  {
    std::lock_guard lock(s->mu);
    s->state = state;
    s->params = params;
    s->rng = rng;
    if (turn_stats) s->stats.push_back(std::move(*turn_stats));
    if (!nonce.empty()) s->nonce_results[nonce] = bundle;
    s->updated_at = now_seconds();
    s->in_flight = false;
    s->progress = nullptr;
  }
  persist(*s);
  return bundle;
}

nlohmann::json SessionService::get_session(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  nlohmann::json stats = nlohmann::json::array();
  for (const auto& st : s->stats) stats.push_back(st.to_json());
  return {{"id", s->id},
          {"scenario_id", s->entry.scenario->id},
          {"dataset", to_string(s->entry.scenario->dataset)},
          {"params", s->params.to_json()},
          {"status", s->state.ongoing() ? "ongoing" : "ended"},
          {"terminal", to_string(s->state.terminal())},
          {"turn_count", s->state.turn_count()},
          {"max_turns", s->entry.scenario->max_turns},
          {"reward", s->state.ongoing() ? nlohmann::json(nullptr) : nlohmann::json(reward_.evaluate(s->state))},
          {"history", history_json(s->state)},
          {"stats", std::move(stats)},
          {"in_flight", s->in_flight},
          {"created_at", s->created_at},
          {"updated_at", s->updated_at}};
}

nlohmann::json SessionService::get_stats(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& st : s->stats) turns.push_back(st.to_json());
  return {{"id", s->id},
          {"in_flight", s->in_flight},
          {"progress", s->progress},
          {"params", s->params.to_json()},
          {"turns", std::move(turns)}};
}

nlohmann::json SessionService::list_scenarios() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : catalog_) {
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& a : e.scenario->action_space->acts()) acts.push_back({{"id", a.id}, {"label", a.label}});
    out.push_back({{"scenario_id", e.scenario->id},
                   {"dataset", to_string(e.scenario->dataset)},
                   {"max_turns", e.scenario->max_turns},
                   {"acts", std::move(acts)}});
  }
  return out;
}

namespace {

EpisodeRecord to_record(const Session& s, const RewardSpec& reward) {
  EpisodeRecord r;
  const auto& sc = s.state.scenario();
  r.scenario_id = sc.id;
  r.dataset = sc.dataset;
  r.params = s.params;
  r.reward_spec = reward;
  r.rng_seed = s.params.rng_seed;
  const auto& h = s.state.history();
  std::size_t i = 0;
  if (i < h.size() && h[i].speaker == Speaker::System) r.opening_system = h[i++].text;
  if (i < h.size() && h[i].speaker == Speaker::User) r.opening_user = h[i++].text;
  std::size_t k = 0;
  for (; i < h.size(); ++i) {
    if (h[i].speaker == Speaker::System) {
      TurnEntry t;
      t.act = h[i].act.value_or("");
      t.system_text = h[i].text;
      if (k < s.stats.size()) t.stats = s.stats[k];
      ++k;
      r.turns.push_back(std::move(t));
    } else if (!r.turns.empty()) {
      r.turns.back().user_text = h[i].text;
    }
  }
  r.terminal = s.state.terminal();
  r.turns_used = s.state.turn_count();
  r.reward = s.state.ongoing() ? 0.0 : reward.evaluate(s.state);
  r.deal_price = s.state.deal_price();
  r.deal_price_invalid = s.state.deal_price_invalid();
  if (sc.dataset == Dataset::CraigslistBargain) {
    auto num = [&](const char* name) -> std::optional<double> {
      auto it = sc.slots.find(name);
      if (it == sc.slots.end()) return std::nullopt;
      try {
        return std::stod(it->second);
      } catch (const std::exception&) {
        return std::nullopt;
      }
    };
    r.buyer_target_price = num("buyer_target_price");
    r.seller_target_price = num("seller_target_price");
  }
  return r;
}

}  // namespace

EpisodeRecord SessionService::record(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mu);
  return to_record(*s, reward_);
}

void SessionService::persist(const Session& s) const {
  nlohmann::json j;
  {
    std::lock_guard lock(s.mu);
    j = to_record(s, reward_).to_json();
  }
  const auto path = cfg_.sessions_dir / (s.id + ".json");
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) {
      spdlog::error("cannot write {}", tmp);
      return;
    }
    out << j.dump() << '\n';
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) spdlog::error("cannot persist session {}: {}", s.id, ec.message());
}

void SessionService::flush() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : sessions_) all.push_back(s);
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return std::stol(a->id.substr(1)) < std::stol(b->id.substr(1));
  });
  std::ofstream out(cfg_.sessions_dir / "episodes.jsonl", std::ios::trunc);
  for (const auto& s : all) {
    persist(*s);
    std::lock_guard lock(s->mu);
    out << to_record(*s, reward_).to_json().dump() << '\n';
  }
}

// ---------------------------------------------------------------------------

std::pair<std::string, int> parse_bind_address(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == bind.size()) {
    throw ConfigError("bind address must look like host:port, got '" + bind + "'");
  }
  const std::string host = bind.substr(0, colon);
  const std::string port_s = bind.substr(colon + 1);
  if (port_s.find_first_not_of("0123456789") != std::string::npos || port_s.size() > 5) {
    throw ConfigError("bad port in bind address '" + bind + "'");
  }
  const int port = std::stoi(port_s);
  if (port > 65535) throw ConfigError("bad port in bind address '" + bind + "'");
  return {host, port};
}

struct HttpServer::Impl {
  std::shared_ptr<SessionService> service;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    reply(res, 200, f());
  } catch (const ServiceError& e) {
    reply(res, e.status(), {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
  } catch (const ConfigError& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const PreconditionError& e) {
    reply(res, 409, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

nlohmann::json body_json(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<SessionService> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto& srv = impl_->server;
  auto svc = impl_->service;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  });
  srv.Get("/scenarios", [svc](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { return svc->list_scenarios(); });
  });
  srv.Post("/sessions", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->create_session(body_json(req)); });
  });
  srv.Post(R"(/sessions/([^/]+)/message)", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->post_message(req.matches[1], body_json(req)); });
  });
  srv.Get(R"(/sessions/([^/]+)/stats)", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->get_stats(req.matches[1]); });
  });
  srv.Get(R"(/sessions/([^/]+))", [svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return svc->get_session(req.matches[1]); });
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = impl_->server.bind_to_any_port(host);
    if (p < 0) throw ConfigError("cannot bind " + host);
    return p;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

// ---------------------------------------------------------------------------

namespace {
std::atomic<bool> g_stop_requested{false};
extern "C" void on_stop_signal(int) { g_stop_requested = true; }
}  // namespace

int cmd_serve(const RunConfig& cfg, const std::string& bind_override, std::ostream& out) {
  std::string host;
  int port = 0;
  try {
    std::tie(host, port) = parse_bind_address(bind_override.empty() ? cfg.service.bind : bind_override);
  } catch (const ConfigError& e) {
    out << "error: " << e.what() << '\n';
    return 2;
  }
  if (cfg.mode == RunMode::Replay) {
    out << "error: serve needs mode scripted or llm\n";
    return 2;
  }
  Workbench wb = Workbench::build(cfg);
  auto service = std::make_shared<SessionService>(wb.scenarios, cfg.nrpa, cfg.reward, cfg.service);
  HttpServer server(service);
  try {
    port = server.bind(host, port);
  } catch (const ConfigError& e) {
    out << "error: " << e.what() << '\n';
    return 2;
  }

  g_stop_requested = false;
  auto prev_int = std::signal(SIGINT, on_stop_signal);
  auto prev_term = std::signal(SIGTERM, on_stop_signal);
  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done) {
      if (g_stop_requested) {
        server.stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  });

  out << "serving on http://" << host << ":" << port << '\n' << std::flush;
  server.listen();
  done = true;
  watcher.join();
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);

  service->flush();
  out << "shutting down, sessions written to " << cfg.service.sessions_dir.string() << '\n';
  return 0;
}

}  // namespace nrpa_gd

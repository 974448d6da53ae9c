#include "nrpa_gd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

namespace {

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

std::optional<double> slot_number(const ScenarioConfig& s, const char* name) {
  auto it = s.slots.find(name);
  if (it == s.slots.end()) return std::nullopt;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  const double n = static_cast<double>(xs.size());
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------

nlohmann::json EpisodeRecord::to_json() const {
  nlohmann::json turns_j = nlohmann::json::array();
  for (std::size_t i = 0; i < turns.size(); ++i) {
    turns_j.push_back({{"turn", i + 1},
                       {"act", turns[i].act},
                       {"system", turns[i].system_text},
                       {"user", turns[i].user_text},
                       {"stats", turns[i].stats.to_json()}});
  }
  return {{"scenario_id", scenario_id},
          {"dataset", std::string(to_string(dataset))},
          {"params", params.to_json()},
          {"reward_spec", reward_spec.to_json()},
          {"rng_seed", rng_seed},
          {"opening", {{"system", opening_system}, {"user", opening_user}}},
          {"turns", std::move(turns_j)},
          {"terminal", std::string(to_string(terminal))},
          {"turns_used", turns_used},
          {"reward", reward},
          {"deal_price", opt_json(deal_price)},
          {"deal_price_invalid", deal_price_invalid},
          {"buyer_target_price", opt_json(buyer_target_price)},
          {"seller_target_price", opt_json(seller_target_price)},
          {"aborted", aborted},
          {"abort_reason", abort_reason}};
}

EpisodeRecord EpisodeRecord::from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  try {
    r.scenario_id = j.at("scenario_id").get<std::string>();
    r.dataset = parse_dataset(j.at("dataset").get<std::string>());
    r.params = NrpaParams::from_json(j.value("params", nlohmann::json::object()));
    r.reward_spec = RewardSpec::from_json(j.value("reward_spec", nlohmann::json::object()));
    r.rng_seed = j.value("rng_seed", std::uint64_t{0});
    if (j.contains("opening")) {
      r.opening_system = j["opening"].value("system", "");
      r.opening_user = j["opening"].value("user", "");
    }
    for (const auto& t : j.at("turns")) {
      TurnEntry e;
      e.act = t.at("act").get<std::string>();
      e.system_text = t.value("system", "");
      e.user_text = t.value("user", "");
      if (t.contains("stats")) e.stats = SearchStats::from_json(t.at("stats"));
      r.turns.push_back(std::move(e));
    }
    r.terminal = parse_terminal(j.at("terminal").get<std::string>());
    r.turns_used = j.at("turns_used").get<int>();
    r.reward = j.at("reward").get<double>();
    r.deal_price = opt_double(j, "deal_price");
    r.deal_price_invalid = j.value("deal_price_invalid", false);
    r.buyer_target_price = opt_double(j, "buyer_target_price");
    r.seller_target_price = opt_double(j, "seller_target_price");
    r.aborted = j.value("aborted", false);
    r.abort_reason = j.value("abort_reason", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed episode record: ") + e.what());
  }
  return r;
}

double EpisodeRecord::recomputed_reward() const { return reward_spec.evaluate(terminal, turns_used); }

nlohmann::json MetricsSummary::to_json() const {
  return {{"AT", average_turns},
          {"AT_std", average_turns_std},
          {"SR", success_rate},
          {"SR_std", success_rate_std},
          {"SL", opt_json(sale_to_list)},
          {"SL_std", opt_json(sale_to_list_std)},
          {"n_episodes", n_episodes},
          {"n_aborted", n_aborted},
          {"n_sl_invalid", n_sl_invalid}};
}

// ---------------------------------------------------------------------------

std::uint64_t episode_seed(std::uint64_t run_seed, std::size_t index) {
  return splitmix64(run_seed ^ splitmix64(static_cast<std::uint64_t>(index)));
}

EpisodeRecord run_episode(const DialogueState& initial, const Environment& env,
                          const NrpaParams& params, const RewardSpec& reward, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioConfig& sc = initial.scenario();

  EpisodeRecord rec;
  rec.scenario_id = sc.id;
  rec.dataset = sc.dataset;
  rec.params = params;
  rec.reward_spec = reward;
  rec.rng_seed = seed;
  for (const auto& u : initial.history()) {
    (u.speaker == Speaker::System ? rec.opening_system : rec.opening_user) = u.text;
  }
  if (sc.dataset == Dataset::CraigslistBargain) {
    rec.buyer_target_price = slot_number(sc, "buyer_target_price");
    rec.seller_target_price = slot_number(sc, "seller_target_price");
  }

  Rng rng(seed);
  DialogueState state = initial;
  try {
    while (state.ongoing()) {
      PlanResult plan = plan_next_act(state, env, params, reward, rng);
      const DialogueAct& act = sc.action_space->act(plan.act_id);
      StepOutcome out = env.step(state, act, rng);

      TurnEntry entry;
      entry.act = act.id;
      entry.stats = std::move(plan.search.stats);
      const auto& hist = out.state.history();
      for (std::size_t i = state.history().size(); i < hist.size(); ++i) {
        (hist[i].speaker == Speaker::System ? entry.system_text : entry.user_text) = hist[i].text;
      }
      rec.turns.push_back(std::move(entry));
      state = std::move(out.state);
    }
  } catch (const SearchAborted& e) {
    rec.aborted = true;
    rec.abort_reason = e.what();
  } catch (const EnvironmentError& e) {
    rec.aborted = true;
    rec.abort_reason = e.what();
  }

  rec.terminal = state.terminal();
  rec.turns_used = state.turn_count();
  rec.deal_price = state.deal_price();
  rec.deal_price_invalid = state.deal_price_invalid();
  rec.reward = rec.aborted ? 0.0 : reward.evaluate(state);
  if (rec.aborted) spdlog::warn("episode {} aborted: {}", rec.scenario_id, rec.abort_reason);
  rec.wall_clock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<EpisodeRecord> run_episodes(const std::vector<DialogueState>& initials,
                                        const std::function<const Environment&(std::size_t)>& env_for,
                                        const NrpaParams& params, const RewardSpec& reward,
                                        int workers) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  std::vector<std::optional<EpisodeRecord>> slots(initials.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= initials.size()) return;
      try {
        slots[i] = run_episode(initials[i], env_for(i), params, reward,
                               episode_seed(params.rng_seed, i));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = initials.size();
      }
    }
  };

  const int n = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(initials.size(), 1)));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < n; ++k) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<EpisodeRecord> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

double compute_sl(std::optional<double> deal_price, double seller_target, double buyer_target) {
  if (buyer_target == seller_target) {
    throw ConfigError("sale-to-list ratio undefined when buyer and seller targets coincide");
  }
  if (!deal_price) return 0.0;
  return (*deal_price - seller_target) / (buyer_target - seller_target);
}

MetricsSummary summarize(std::span<const EpisodeRecord> records) {
  MetricsSummary s;
  std::vector<double> turns, success, sl;
  for (const auto& r : records) {
    if (r.aborted) {
      ++s.n_aborted;
      continue;
    }
    turns.push_back(r.turns_used);
    success.push_back(r.terminal == Terminal::Solved ? 1.0 : 0.0);
    if (r.dataset != Dataset::CraigslistBargain) continue;
    if (r.deal_price_invalid || !r.buyer_target_price || !r.seller_target_price) {
      ++s.n_sl_invalid;
      continue;
    }
    const std::optional<double> deal =
        r.terminal == Terminal::Solved ? r.deal_price : std::nullopt;
    sl.push_back(compute_sl(deal, *r.seller_target_price, *r.buyer_target_price));
  }
  if (turns.empty()) throw PreconditionError("no completed episodes to summarize");
  s.n_episodes = static_cast<int>(turns.size());
  const auto at = mean_std(turns);
  const auto sr = mean_std(success);
  s.average_turns = at.mean;
  s.average_turns_std = at.std;
  s.success_rate = sr.mean;
  s.success_rate_std = sr.std;
  if (!sl.empty()) {
    const auto m = mean_std(sl);
    s.sale_to_list = m.mean;
    s.sale_to_list_std = m.std;
  }
  return s;
}

// ---------------------------------------------------------------------------

std::string_view to_string(DuelVerdict v) {
  switch (v) {
    case DuelVerdict::A: return "A";
    case DuelVerdict::B: return "B";
    case DuelVerdict::Tie: return "Tie";
  }
  return "?";
}

std::optional<char> parse_judge_letter(const std::string& text) {
  static const std::regex kLetter(R"((?:^|[^A-Za-z0-9])([ABC])(?=$|[^A-Za-z0-9]))");
  std::smatch m;
  if (!std::regex_search(text, m, kLetter)) return std::nullopt;
  return m[1].str()[0];
}

DuelVerdict tally_votes(int a, int b, int tie) {
  if (tie > std::max(a, b)) return DuelVerdict::Tie;
  if (a > b) return DuelVerdict::A;
  if (b > a) return DuelVerdict::B;
  return DuelVerdict::Tie;
}

DuelResult static_duel(const std::string& context, const std::string& resp_a,
                       const std::string& resp_b, const PromptSet& prompts,
                       const JudgeConfig& cfg, LlmClient& client, std::int64_t seed_base) {
  if (cfg.samples < 1) throw ConfigError("judge samples must be >= 1");
  DuelResult res;
  for (int i = 0; i < cfg.samples; ++i) {
    const bool swapped = i % 2 == 1;
    ChatRequest req;
    req.model = cfg.model;
    req.temperature = cfg.temperature;
    req.max_tokens = cfg.max_tokens;
    req.seed = seed_base + i;
    req.messages = swapped ? render_judge(prompts, context, resp_b, resp_a)
                           : render_judge(prompts, context, resp_a, resp_b);
    const auto letter = parse_judge_letter(client.complete(req).text);
    if (!letter) {
      ++res.unparsed;
      ++res.votes_tie;
      continue;
    }
    char c = *letter;
    if (swapped && c != 'C') c = c == 'A' ? 'B' : 'A';
    if (c == 'A') ++res.votes_a;
    else if (c == 'B') ++res.votes_b;
    else ++res.votes_tie;
  }
  if (res.unparsed == cfg.samples) spdlog::warn("judge answers were all unparseable, scoring a tie");
  res.verdict = tally_votes(res.votes_a, res.votes_b, res.votes_tie);
  return res;
}

nlohmann::json WinRate::to_json() const {
  return {{"win_rate", mean},
          {"win_rate_std", std},
          {"win_rate_excluding_ties", mean_excluding_ties},
          {"win_rate_excluding_ties_std", std_excluding_ties},
          {"per_run", per_run}};
}

WinRate win_rate(std::span<const DuelVerdict> duels, int runs) {
  if (runs < 1) throw PreconditionError("win rate needs at least one run");
  if (duels.empty() || duels.size() % static_cast<std::size_t>(runs) != 0) {
    throw PreconditionError("duel verdicts must split into equal nonempty runs");
  }
  const std::size_t per = duels.size() / static_cast<std::size_t>(runs);
  std::vector<double> with_ties, without_ties;
  for (int r = 0; r < runs; ++r) {
    int wins = 0, losses = 0;
    for (std::size_t k = 0; k < per; ++k) {
      const auto v = duels[r * per + k];
      wins += v == DuelVerdict::A;
      losses += v == DuelVerdict::B;
    }
    with_ties.push_back(static_cast<double>(wins) / static_cast<double>(per));
    without_ties.push_back(wins + losses ? static_cast<double>(wins) / (wins + losses) : 0.0);
  }
  WinRate w;
  const auto a = mean_std(with_ties);
  const auto b = mean_std(without_ties);
  w.mean = a.mean;
  w.std = a.std;
  w.mean_excluding_ties = b.mean;
  w.std_excluding_ties = b.std;
  w.per_run = std::move(with_ties);
  return w;
}

// ---------------------------------------------------------------------------

void write_run(const std::filesystem::path& run_dir, const nlohmann::json& config,
               std::span<const EpisodeRecord> records, const MetricsSummary& summary) {
  std::error_code ec;
  std::filesystem::create_directories(run_dir, ec);
  if (ec) throw ConfigError("cannot create " + run_dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream out(run_dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + (run_dir / name).string());
    return out;
  };
  open("config.json") << config.dump(2) << '\n';
  {
    auto out = open("episodes.jsonl");
    for (const auto& r : records) out << r.to_json().dump() << '\n';
  }
  {
    auto out = open("timings.jsonl");
    for (const auto& r : records) {
      out << nlohmann::json{{"scenario_id", r.scenario_id}, {"wall_clock_ms", r.wall_clock_ms}}.dump()
          << '\n';
    }
  }
  open("summary.json") << summary.to_json().dump(2) << '\n';
}

std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& episodes_jsonl) {
  std::ifstream in(episodes_jsonl);
  if (!in) throw ConfigError("cannot open " + episodes_jsonl.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(EpisodeRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(episodes_jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace nrpa_gd

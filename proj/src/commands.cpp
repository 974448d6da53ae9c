#include "nrpa_gd/commands.hpp"

#include <cstdio>
#include <fstream>

#include "nrpa_gd/errors.hpp"

namespace nrpa_gd {

namespace {

std::string fmt_pm(double mean, double sd, double scale = 1.0, const char* unit = "") {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.3f%s ± %.3f%s", mean * scale, unit, sd * scale, unit);
  return buf;
}

void print_summary(const MetricsSummary& s, std::ostream& out) {
  out << "AT " << fmt_pm(s.average_turns, s.average_turns_std) << '\n'
      << "SR " << fmt_pm(s.success_rate, s.success_rate_std) << '\n'
      << "SL "
      << (s.sale_to_list ? fmt_pm(*s.sale_to_list, *s.sale_to_list_std) : std::string("n/a")) << '\n'
      << "episodes " << s.n_episodes << " (aborted " << s.n_aborted << ", invalid deal prices "
      << s.n_sl_invalid << ")\n";
}

}  // namespace

RunOutput cmd_run(const RunConfig& cfg, std::ostream& out) {
  RunOutput res;
  res.run_dir = cfg.out_dir / cfg.effective_run_id();

  if (cfg.mode == RunMode::Replay) {
    res.records = read_episodes(cfg.replay_episodes);
  } else {
    Workbench wb = Workbench::build(cfg);
    std::vector<DialogueState> initials;
    std::vector<const Environment*> envs;
    for (const auto& entry : wb.scenarios) {
      for (int k = 0; k < cfg.episodes_per_scenario; ++k) {
        initials.push_back(entry.script ? entry.script->initial_state()
                                        : DialogueState::open(entry.scenario));
        envs.push_back(entry.env.get());
      }
    }
    res.records = run_episodes(
        initials, [&](std::size_t i) -> const Environment& { return *envs[i]; }, cfg.nrpa,
        cfg.reward, cfg.workers);
    if (wb.client) {
      const auto u = wb.client->total_usage();
      out << "llm: " << wb.client->network_attempts() << " requests, " << wb.client->cache_hits()
          << " cache hits, " << u.prompt_tokens << "+" << u.completion_tokens << " tokens\n";
    }
  }

  res.summary = summarize(res.records);
  write_run(res.run_dir, cfg.to_json(), res.records, res.summary);
  print_summary(res.summary, out);
  out << "results: " << res.run_dir.string() << '\n';
  return res;
}

std::vector<DuelItem> read_duel_items(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("transcripts: file not found: " + path.string());
  std::vector<DuelItem> items;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      items.push_back({j.value("context", ""), j.at("response").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return items;
}

DuelOutput cmd_duel(const RunConfig& cfg, const std::filesystem::path& transcripts_a,
                    const std::filesystem::path& transcripts_b, std::ostream& out) {
  const auto a = read_duel_items(transcripts_a);
  const auto b = read_duel_items(transcripts_b);
  if (a.empty()) throw PreconditionError("duel: no response pairs");
  if (a.size() != b.size()) {
    throw PreconditionError("duel: transcripts are misaligned (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + " responses)");
  }
  if (!cfg.dataset) throw ConfigError("dataset: required for duels");
  if (cfg.prompts_dir.empty()) throw ConfigError("prompts_dir: required for duels");

  Workbench wb;
  wb.config = cfg;
  wb.prompts = std::make_shared<const PromptLibrary>(PromptLibrary::load(cfg.prompts_dir));
  const PromptSet& prompts = wb.prompts->get(*cfg.dataset);
  LlmClient& client = wb.llm_client();

  DuelOutput res;
  std::vector<DuelVerdict> verdicts;
  for (int r = 0; r < cfg.duel_runs; ++r) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string& context = a[i].context.empty() ? b[i].context : a[i].context;
      // Distinct seeds per run and pair keep cached samples apart.
      const std::int64_t seed = static_cast<std::int64_t>(cfg.nrpa.rng_seed % 1000003) * 1000000 +
                                static_cast<std::int64_t>(r) * 100000 +
                                static_cast<std::int64_t>(i) * 16;
      auto d = static_duel(context, a[i].response, b[i].response, prompts, cfg.judge, client, seed);
      verdicts.push_back(d.verdict);
      res.results.push_back(d);
    }
  }
  res.win_rate = win_rate(verdicts, cfg.duel_runs);
  res.run_dir = cfg.out_dir / (cfg.run_id.empty() ? "duel-seed" + std::to_string(cfg.nrpa.rng_seed)
                                                  : cfg.run_id);
  std::filesystem::create_directories(res.run_dir);
  {
    std::ofstream f(res.run_dir / "config.json", std::ios::trunc);
    f << cfg.to_json().dump(2) << '\n';
  }
  {
    nlohmann::json s = res.win_rate.to_json();
    s["n_pairs"] = a.size();
    s["runs"] = cfg.duel_runs;
    std::ofstream f(res.run_dir / "summary.json", std::ios::trunc);
    f << s.dump(2) << '\n';
  }
  out << "win rate " << fmt_pm(res.win_rate.mean, res.win_rate.std, 100.0, "%") << " over "
      << cfg.duel_runs << " runs of " << a.size() << " pairs\n"
      << "win rate excluding ties "
      << fmt_pm(res.win_rate.mean_excluding_ties, res.win_rate.std_excluding_ties, 100.0, "%") << '\n'
      << "results: " << res.run_dir.string() << '\n';
  return res;
}

}  // namespace nrpa_gd

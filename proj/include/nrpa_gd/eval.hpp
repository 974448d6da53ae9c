#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrpa_gd/core.hpp"
#include "nrpa_gd/env.hpp"
#include "nrpa_gd/llm_client.hpp"
#include "nrpa_gd/nrpa.hpp"
#include "nrpa_gd/prompts.hpp"
#include "nrpa_gd/reward.hpp"

namespace nrpa_gd {

struct TurnEntry {
  std::string act;
  std::string system_text;
  std::string user_text;
  SearchStats stats;
};

struct EpisodeRecord {
  std::string scenario_id;
  Dataset dataset = Dataset::ESConv;
  NrpaParams params;
  RewardSpec reward_spec;
  std::uint64_t rng_seed = 0;
  std::string opening_system;
  std::string opening_user;
  std::vector<TurnEntry> turns;
  Terminal terminal = Terminal::Ongoing;
  int turns_used = 0;
  double reward = 0.0;
  std::optional<double> deal_price;
  bool deal_price_invalid = false;
  std::optional<double> buyer_target_price;
  std::optional<double> seller_target_price;
  bool aborted = false;
  std::string abort_reason;
  double wall_clock_ms = 0.0;  // kept out of to_json so transcripts stay reproducible

  nlohmann::json to_json() const;
  static EpisodeRecord from_json(const nlohmann::json& j);

  // Recomputes the reward from terminal class and turns used.
  double recomputed_reward() const;
};

struct MetricsSummary {
  double average_turns = 0.0;
  double success_rate = 0.0;
  std::optional<double> sale_to_list;
  double average_turns_std = 0.0;
  double success_rate_std = 0.0;
  std::optional<double> sale_to_list_std;
  int n_episodes = 0;
  int n_aborted = 0;
  int n_sl_invalid = 0;

  nlohmann::json to_json() const;
};

// Plans with NRPA and commits the chosen act each real turn until the
// dialogue ends. Environment failures yield an aborted record.
EpisodeRecord run_episode(const DialogueState& initial, const Environment& env,
                          const NrpaParams& params, const RewardSpec& reward, std::uint64_t seed);

// Deterministic per-episode seed derived from the run seed.
std::uint64_t episode_seed(std::uint64_t run_seed, std::size_t index);

// Runs one episode per initial state on up to `workers` threads; records
// come back in input order.
std::vector<EpisodeRecord> run_episodes(const std::vector<DialogueState>& initials,
                                        const std::function<const Environment&(std::size_t)>& env_for,
                                        const NrpaParams& params, const RewardSpec& reward,
                                        int workers);

// (deal - seller) / (buyer - seller); 0 without a deal.
double compute_sl(std::optional<double> deal_price, double seller_target, double buyer_target);

// Aborted records are counted but excluded. Throws if nothing is left.
MetricsSummary summarize(std::span<const EpisodeRecord> records);

enum class DuelVerdict { A, B, Tie };
std::string_view to_string(DuelVerdict v);

struct JudgeConfig {
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.0;
  int samples = 5;
  int max_tokens = 16;
};

struct DuelResult {
  DuelVerdict verdict = DuelVerdict::Tie;
  int votes_a = 0;
  int votes_b = 0;
  int votes_tie = 0;
  int unparsed = 0;
};

// First standalone A, B or C in a judge answer.
std::optional<char> parse_judge_letter(const std::string& text);

// Counts per-sample votes into a verdict: the tie bucket (C answers and
// unparseable ones) wins only with strictly more votes than both A and B;
// otherwise the larger of A and B wins, and an A/B tie is a Tie.
DuelVerdict tally_votes(int a, int b, int tie);

// Samples the judge `cfg.samples` times; odd-numbered samples present the
// responses in swapped order and their letters are mapped back.
DuelResult static_duel(const std::string& context, const std::string& resp_a,
                       const std::string& resp_b, const PromptSet& prompts,
                       const JudgeConfig& cfg, LlmClient& client, std::int64_t seed_base = 0);

struct WinRate {
  double mean = 0.0;  // ties in the denominator
  double std = 0.0;   // population std over runs
  double mean_excluding_ties = 0.0;
  double std_excluding_ties = 0.0;
  std::vector<double> per_run;

  nlohmann::json to_json() const;
};

// `duels` holds `runs` equal, consecutive blocks of verdicts, one per run.
WinRate win_rate(std::span<const DuelVerdict> duels, int runs);

// runs/<run-id>/{config.json, episodes.jsonl, summary.json} plus timings.jsonl.
void write_run(const std::filesystem::path& run_dir, const nlohmann::json& config,
               std::span<const EpisodeRecord> records, const MetricsSummary& summary);
std::vector<EpisodeRecord> read_episodes(const std::filesystem::path& episodes_jsonl);

}  // namespace nrpa_gd

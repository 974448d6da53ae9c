#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "nrpa_gd/config.hpp"
#include "nrpa_gd/eval.hpp"

namespace nrpa_gd {

struct RunOutput {
  std::filesystem::path run_dir;
  std::vector<EpisodeRecord> records;
  MetricsSummary summary;
};

// Executes every scenario (or re-grades stored episodes in replay mode),
// writes the results directory and prints the summary to `out`.
RunOutput cmd_run(const RunConfig& cfg, std::ostream& out);

// One line per response: {"context": ..., "response": ...}.
struct DuelItem {
  std::string context;
  std::string response;
};
std::vector<DuelItem> read_duel_items(const std::filesystem::path& path);

struct DuelOutput {
  std::filesystem::path run_dir;
  WinRate win_rate;
  std::vector<DuelResult> results;  // runs x pairs, run-major
};

// A is the candidate: its wins count toward the win rate.
DuelOutput cmd_duel(const RunConfig& cfg, const std::filesystem::path& transcripts_a,
                    const std::filesystem::path& transcripts_b, std::ostream& out);

}  // namespace nrpa_gd

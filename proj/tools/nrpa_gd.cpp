// nrpa-gd: run planning episodes, duel transcripts, serve live sessions.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "nrpa_gd/commands.hpp"
#include "nrpa_gd/config.hpp"
#include "nrpa_gd/errors.hpp"
#include "nrpa_gd/service.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> level;
  std::optional<int> iterations;
  std::string log_level = "warn";
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("-c,--config", o.config, "JSON run configuration")->required();
  cmd->add_option("-o,--out", o.out, "results directory (overrides out_dir)");
  cmd->add_option("--seed", o.seed, "rng seed (overrides nrpa.rng_seed)");
  cmd->add_option("--level", o.level, "NRPA nesting level");
  cmd->add_option("--iterations", o.iterations, "iterations per level");
  cmd->add_option("--log-level", o.log_level, "trace|debug|info|warn|error|off");
}

nrpa_gd::RunConfig load(const Overrides& o) {
  auto cfg = nrpa_gd::RunConfig::load(o.config);
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.seed) cfg.nrpa.rng_seed = *o.seed;
  if (o.level) cfg.nrpa.level = *o.level;
  if (o.iterations) cfg.nrpa.iterations = *o.iterations;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NRPA dialogue policy planner"};
  app.require_subcommand(1);

  Overrides o;
  auto* run = app.add_subcommand("run", "run planning episodes (or replay stored ones)");
  add_common(run, o);

  std::string a_path, b_path;
  auto* duel = app.add_subcommand("duel", "judge A/B responses and report the win rate of A");
  add_common(duel, o);
  duel->add_option("transcripts_a", a_path, "JSONL responses of system A")->required();
  duel->add_option("transcripts_b", b_path, "JSONL responses of system B")->required();

  std::string bind;
  auto* serve = app.add_subcommand("serve", "serve the live session API");
  add_common(serve, o);
  serve->add_option("--bind", bind, "host:port (overrides service.bind)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  nrpa_gd::RunConfig cfg;
  try {
    cfg = load(o);
  } catch (const nrpa_gd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*run) {
      nrpa_gd::cmd_run(cfg, std::cout);
    } else if (*duel) {
      nrpa_gd::cmd_duel(cfg, a_path, b_path, std::cout);
    } else if (*serve) {
      return nrpa_gd::cmd_serve(cfg, bind, std::cout);
    }
  } catch (const nrpa_gd::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}

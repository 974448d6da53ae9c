#include "nrpa_gd/nrpa.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace nrpa_gd {

nlohmann::json SearchStats::to_json() const {
  nlohmann::json j = {
      {"level", level},
      {"playouts_executed", playouts_executed},
      {"best_sequence", best_sequence},
      {"iterations_run_per_level", iterations_run_per_level},
      {"early_stopped", early_stopped},
  };
  if (std::isfinite(best_score)) {
    j["best_score"] = best_score;
  } else {
    j["best_score"] = nullptr;
  }
  return j;
}

SearchStats SearchStats::from_json(const nlohmann::json& j) {
  SearchStats s;
  s.level = j.value("level", 0);
  s.playouts_executed = j.value("playouts_executed", 0L);
  if (j.contains("best_score") && !j.at("best_score").is_null()) {
    s.best_score = j.at("best_score").get<double>();
  }
  s.best_sequence = j.value("best_sequence", std::vector<std::string>{});
  s.iterations_run_per_level = j.value("iterations_run_per_level", std::vector<int>{});
  s.early_stopped = j.value("early_stopped", std::vector<bool>{});
  return s;
}

RolloutResult playout(const DialogueState& state, const Policy& policy, const Environment& env,
                      const NrpaParams& params, const RewardSpec& reward, Rng& rng) {
  if (!state.ongoing()) throw PreconditionError("playout from a terminal state");
  const ActionSpace& space = *state.scenario().action_space;

  DialogueState current = state;
  std::vector<std::string> sequence;
  for (int steps = 0; current.ongoing() && steps < params.max_playout_steps; ++steps) {
    const DialogueAct& act = sample_action(policy, space, rng);
    current = env.step(current, act, rng).state;
    sequence.push_back(act.id);
  }
  if (current.ongoing()) current.set_terminal(Terminal::TurnBudgetExhausted);

  const double score = reward.evaluate(current);
  return RolloutResult{score, std::move(sequence), std::move(current)};
}

Policy adapt(const Policy& policy, std::span<const std::string> sequence, double alpha,
             const ActionSpace& space, AdaptVariant variant, double clamp) {
  if (policy.size() != space.size()) throw PreconditionError("policy size does not match action space");

  std::vector<std::size_t> indices;
  indices.reserve(sequence.size());
  for (const auto& id : sequence) {
    auto i = space.index_of(id);
    if (!i) throw PreconditionError("adapt: act '" + id + "' is not in the action space");
    indices.push_back(*i);
  }

  Policy adapted = policy;
  const auto fixed_probs = softmax_probs(policy);
  for (std::size_t chosen : indices) {
    const auto probs = variant == AdaptVariant::FixedPolicy ? fixed_probs : softmax_probs(adapted);
    for (std::size_t k = 0; k < adapted.size(); ++k) adapted[k] -= alpha * probs[k];
    adapted[chosen] += alpha;
    for (std::size_t k = 0; k < adapted.size(); ++k) {
      adapted[k] = std::clamp(adapted[k], -clamp, clamp);
    }
  }
  return adapted;
}

Policy adapt(const Policy& policy, std::span<const std::string> sequence, double alpha,
             const DialogueState& start_state, AdaptVariant variant, double clamp) {
  return adapt(policy, sequence, alpha, *start_state.scenario().action_space, variant, clamp);
}

namespace {

struct LevelRun {
  RolloutResult best;
  Policy policy;
};

LevelRun run_level(int level, Policy policy, const DialogueState& state, const Environment& env,
                   const NrpaParams& params, const RewardSpec& reward, Rng& rng,
                   SearchStats& stats, const IterationObserver& observer) {
  if (level == 0) {
    auto result = playout(state, policy, env, params, reward, rng);
    ++stats.playouts_executed;
    return {std::move(result), std::move(policy)};
  }

  const ActionSpace& space = *state.scenario().action_space;
  std::optional<RolloutResult> best;
  int stale = 0;
  for (int iteration = 1; iteration <= params.iterations; ++iteration) {
    // The callee receives its own copy; only the adapt below changes ours.
    auto inner = run_level(level - 1, policy, state, env, params, reward, rng, stats, observer);
    const bool improved = !best || inner.best.score > best->score;
    if (improved) best = std::move(inner.best);
    policy = adapt(policy, best->sequence, params.alpha, space, params.adapt_variant,
                   params.weight_clamp);

    ++stats.iterations_run_per_level[level - 1];
    if (observer) observer(level, iteration, *best, policy);

    // The stagnation count only starts once the minimum iterations are done.
    if (iteration > params.min_iterations) stale = improved ? 0 : stale + 1;
    if (iteration >= params.min_iterations && iteration < params.iterations) {
      const bool stagnated = params.stop_on_stagnation && stale >= params.early_stopping;
      const bool solved =
          params.stop_on_solved && best->final_state.terminal() == Terminal::Solved;
      if (stagnated || solved) {
        stats.early_stopped[level - 1] = true;
        break;
      }
    }
  }
  return {std::move(*best), std::move(policy)};
}

}  // namespace

NrpaOutcome nrpa(int level, const Policy& policy, const DialogueState& state,
                 const Environment& env, const NrpaParams& params, const RewardSpec& reward,
                 Rng& rng, const IterationObserver& observer) {
  if (level < 0) throw PreconditionError("nrpa level must be >= 0");
  if (!state.ongoing()) throw PreconditionError("nrpa from a terminal state");

  SearchStats stats;
  stats.level = level;
  stats.iterations_run_per_level.assign(static_cast<std::size_t>(level), 0);
  stats.early_stopped.assign(static_cast<std::size_t>(level), false);

  try {
    auto run = run_level(level, policy, state, env, params, reward, rng, stats, observer);
    stats.best_score = run.best.score;
    stats.best_sequence = run.best.sequence;
    return NrpaOutcome{std::move(run.best), std::move(stats), std::move(run.policy)};
  } catch (const SearchAborted&) {
    throw;
  } catch (const EnvironmentError& e) {
    throw SearchAborted(std::string("search aborted: ") + e.what(), std::move(stats));
  }
}

PlanResult plan_next_act(const DialogueState& state, const Environment& env,
                         const NrpaParams& params, const RewardSpec& reward, Rng& rng,
                         const IterationObserver& observer) {
  if (!state.ongoing()) throw PreconditionError("cannot plan from a terminal state");
  const ActionSpace& space = *state.scenario().action_space;
  auto outcome = nrpa(params.level, uniform_policy(space), state, env, params, reward, rng, observer);
  if (outcome.best.sequence.empty()) throw PreconditionError("search produced an empty sequence");

  std::string act;
  if (params.root_selection == RootSelection::BestSequenceHead) {
    act = outcome.best.sequence.front();
  } else {
    const auto w = outcome.policy.weights();
    act = space.at(static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin())).id;
  }
  return PlanResult{std::move(act), std::move(outcome)};
}

}  // namespace nrpa_gd

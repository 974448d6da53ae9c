#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrpa_gd/core.hpp"
#include "nrpa_gd/env.hpp"
#include "nrpa_gd/errors.hpp"
#include "nrpa_gd/reward.hpp"

namespace nrpa_gd {

struct SearchStats {
  int level = 0;
  long playouts_executed = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<std::string> best_sequence;
  // Index k describes nesting level k + 1, summed over every invocation of
  // that level during the search.
  std::vector<int> iterations_run_per_level;
  std::vector<bool> early_stopped;

  nlohmann::json to_json() const;
  static SearchStats from_json(const nlohmann::json& j);
};

// An environment failure interrupted the search. Carries what was done.
class SearchAborted : public EnvironmentError {
 public:
  SearchAborted(const std::string& what, SearchStats stats)
      : EnvironmentError(what), stats_(std::move(stats)) {}
  const SearchStats& stats() const { return stats_; }

 private:
  SearchStats stats_;
};

// Called after every completed iteration of a level >= 1 loop, with the
// best result so far and the policy after that iteration's adaptation.
using IterationObserver =
    std::function<void(int level, int iteration, const RolloutResult& best, const Policy& policy)>;

// Samples acts from `policy` until the environment reports a terminal
// class or `params.max_playout_steps` system turns were simulated.
RolloutResult playout(const DialogueState& state, const Policy& policy, const Environment& env,
                      const NrpaParams& params, const RewardSpec& reward, Rng& rng);

// Shifts weight toward every act of `sequence`. For each step with act a,
// every act a' loses alpha * P(a') and a gains alpha. With the fixed-policy
// variant P comes from the incoming `policy` throughout; the classical
// variant recomputes P from the partially adapted copy. Weights are clamped
// to [-clamp, clamp] after each step.
Policy adapt(const Policy& policy, std::span<const std::string> sequence, double alpha,
             const ActionSpace& space, AdaptVariant variant = AdaptVariant::FixedPolicy,
             double clamp = 50.0);

// `start_state` only selects the action space: with a global policy vector
// the replayed state never influences the update.
Policy adapt(const Policy& policy, std::span<const std::string> sequence, double alpha,
             const DialogueState& start_state, AdaptVariant variant = AdaptVariant::FixedPolicy,
             double clamp = 50.0);

struct NrpaOutcome {
  RolloutResult best;
  SearchStats stats;
  Policy policy;  // the top level's policy after its final adaptation
};

// Nested rollout policy adaptation. Level 0 is a single playout; level L
// runs up to params.iterations calls of level L - 1, each on its own copy
// of the policy, keeping the strictly best result and adapting toward it.
NrpaOutcome nrpa(int level, const Policy& policy, const DialogueState& state,
                 const Environment& env, const NrpaParams& params, const RewardSpec& reward,
                 Rng& rng, const IterationObserver& observer = {});

struct PlanResult {
  std::string act_id;
  NrpaOutcome search;
};

// Fresh uniform policy, nrpa at params.level, then the root act chosen per
// params.root_selection.
PlanResult plan_next_act(const DialogueState& state, const Environment& env,
                         const NrpaParams& params, const RewardSpec& reward, Rng& rng,
                         const IterationObserver& observer = {});

}  // namespace nrpa_gd

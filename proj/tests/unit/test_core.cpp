#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "support.hpp"

using namespace nrpa_gd;
using namespace nrpa_gd::testing;

TEST(Uniform01, StaysInHalfOpenUnitInterval) {
  Rng rng(123);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  EXPECT_LT(lo, 1e-3);
  EXPECT_GT(hi, 1 - 1e-3);
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(Uniform01, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(uniform01(a), uniform01(b));
}

TEST(Dataset, NamesRoundTrip) {
  for (auto d : {Dataset::ESConv, Dataset::CIMA, Dataset::CraigslistBargain, Dataset::P4G}) {
    EXPECT_EQ(parse_dataset(to_string(d)), d);
  }
  EXPECT_THROW(parse_dataset("esconv-ish"), ConfigError);
}

TEST(ActionSpace, RejectsTooFewActs) {
  EXPECT_THROW(ActionSpace(Dataset::ESConv, {{"only", "Only", "x"}}), ConfigError);
}

TEST(ActionSpace, RejectsDuplicateIds) {
  EXPECT_THROW(ActionSpace(Dataset::ESConv, {{"a", "A", "x"}, {"a", "B", "y"}}), ConfigError);
}

TEST(ActionSpace, RejectsReservedOpeningId) {
  EXPECT_THROW(ActionSpace(Dataset::ESConv, {{"opening", "O", "x"}, {"b", "B", "y"}}), ConfigError);
}

TEST(ActionSpace, RejectsEmptyPromptText) {
  EXPECT_THROW(ActionSpace(Dataset::ESConv, {{"a", "A", ""}, {"b", "B", "y"}}), ConfigError);
}

TEST(ActionSpace, LookupAndJsonRoundTrip) {
  ActionSpace s(Dataset::CIMA, {{"hint", "Hint", "give a hint"}, {"other", "Others", "chat"}});
  EXPECT_EQ(s.index_of("other"), 1u);
  EXPECT_FALSE(s.index_of("nope").has_value());
  EXPECT_EQ(s.act("hint").label, "Hint");
  EXPECT_THROW(s.act("nope"), PreconditionError);
  const auto back = ActionSpace::from_json(s.to_json());
  EXPECT_EQ(back.dataset(), Dataset::CIMA);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.at(0).prompt_text, "give a hint");
}

TEST(ActionSpace, BundledSpacesHaveExpectedSizes) {
  EXPECT_EQ(ActionSpace::load((data_dir() / "action_spaces/esconv.json").string()).size(), 8u);
  EXPECT_EQ(ActionSpace::load((data_dir() / "action_spaces/cima.json").string()).size(), 5u);
  EXPECT_EQ(ActionSpace::load((data_dir() / "action_spaces/craigslist_bargain.json").string()).size(), 11u);
  EXPECT_EQ(ActionSpace::load((data_dir() / "action_spaces/p4g.json").string()).size(), 10u);
}

TEST(DialogueState, OpenSeedsOpeningExchange) {
  auto sc = tiny_scenario(3);
  auto s = DialogueState::open(sc);
  ASSERT_EQ(s.history().size(), 2u);
  EXPECT_EQ(s.history()[0].speaker, Speaker::System);
  EXPECT_EQ(s.history()[0].act, std::string(kOpeningAct));
  EXPECT_EQ(s.history()[0].turn_index, 0);
  EXPECT_EQ(s.history()[1].speaker, Speaker::User);
  EXPECT_EQ(s.history()[1].turn_index, 1);
  EXPECT_EQ(s.turn_count(), 0);
  EXPECT_TRUE(s.ongoing());
  EXPECT_TRUE(s.act_sequence().empty());

  auto live = DialogueState::open(sc, false);
  EXPECT_EQ(live.history().size(), 1u);
}

TEST(DialogueState, AppendKeepsAlternationAndCounts) {
  auto sc = tiny_scenario(3);
  auto s = DialogueState::open(sc);
  s.append_system(sc->action_space->at(1), "sys");
  EXPECT_EQ(s.turn_count(), 1);
  EXPECT_THROW(s.append_system(sc->action_space->at(0), "again"), PreconditionError);
  s.append_user("usr");
  EXPECT_THROW(s.append_user("again"), PreconditionError);
  s.append_system(sc->action_space->at(2), "sys2");
  EXPECT_EQ(s.turn_count(), 2);
  EXPECT_EQ(s.act_sequence(), (std::vector<std::string>{"a1", "a2"}));
  EXPECT_EQ(s.history().back().turn_index, 2);
}

TEST(DialogueState, TerminalIsFinal) {
  auto sc = tiny_scenario(2);
  auto s = DialogueState::open(sc);
  s.set_terminal(Terminal::Solved);
  EXPECT_FALSE(s.ongoing());
  EXPECT_THROW(s.set_terminal(Terminal::Failed), PreconditionError);
  EXPECT_THROW(s.append_system(sc->action_space->at(0), "x"), PreconditionError);
}

TEST(Terminal, NamesRoundTrip) {
  for (auto t : {Terminal::Ongoing, Terminal::Solved, Terminal::Failed, Terminal::TurnBudgetExhausted}) {
    EXPECT_EQ(parse_terminal(to_string(t)), t);
  }
}

TEST(Policy, RejectsNonFiniteWeights) {
  EXPECT_THROW(Policy({0.0, std::nan("")}), PreconditionError);
  EXPECT_THROW(Policy({INFINITY, 0.0}), PreconditionError);
}

TEST(Softmax, UniformForEqualWeights) {
  const auto p = softmax_probs(std::vector<double>{3.0, 3.0, 3.0, 3.0});
  for (double x : p) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(Softmax, MatchesDirectFormulaForSmallWeights) {
  const std::vector<double> w{0.1, -0.4, 1.3};
  const double z = std::exp(0.1) + std::exp(-0.4) + std::exp(1.3);
  const auto p = softmax_probs(w);
  EXPECT_NEAR(p[0], std::exp(0.1) / z, 1e-15);
  EXPECT_NEAR(p[1], std::exp(-0.4) / z, 1e-15);
  EXPECT_NEAR(p[2], std::exp(1.3) / z, 1e-15);
}

TEST(Softmax, StableForHugeWeights) {
  const auto p = softmax_probs(std::vector<double>{1e4, 1e4 - 1.0, -1e4});
  for (double x : p) EXPECT_TRUE(std::isfinite(x));
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Softmax, ShiftInvariantOnRandomVectors) {
  Rng rng(5);
  std::uniform_real_distribution<double> w(-30, 30), c(-1e3, 1e3);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(2 + trial % 10);
    for (auto& x : v) x = w(rng);
    std::vector<double> shifted = v;
    const double k = c(rng);
    for (auto& x : shifted) x += k;
    const auto p = softmax_probs(v), q = softmax_probs(shifted);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(p[i], q[i], 1e-9);
  }
}

TEST(Softmax, EmptyVectorIsAnError) {
  EXPECT_THROW(softmax_probs(std::vector<double>{}), PreconditionError);
}

TEST(Sampling, DominantWeightMatchesAnalyticProbability) {
  // P(a0) = 1 / (1 + e^-20): essentially always a0.
  Policy pi({20.0, 0.0});
  Rng rng(1);
  int zeros = 0;
  for (int i = 0; i < 10000; ++i) zeros += sample_index(pi, rng) == 0;
  EXPECT_EQ(zeros, 10000);
}

TEST(Sampling, FrequenciesTrackSoftmax) {
  Policy pi({1.0, 0.0, -1.0, 0.5});
  const auto p = softmax_probs(pi);
  Rng rng(42);
  std::vector<int> counts(4, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[sample_index(pi, rng)];
  for (std::size_t i = 0; i < 4; ++i) {
    const double sd = std::sqrt(p[i] * (1 - p[i]) / n);
    EXPECT_NEAR(static_cast<double>(counts[i]) / n, p[i], 5 * sd) << "act " << i;
  }
}

TEST(Sampling, SizeMismatchIsAnError) {
  auto sc = tiny_scenario(3);
  Rng rng(0);
  EXPECT_THROW(sample_action(Policy({0.0, 0.0}), *sc->action_space, rng), PreconditionError);
}

TEST(NrpaParams, DefaultsMirrorTable) {
  NrpaParams p;
  EXPECT_EQ(p.level, 1);
  EXPECT_EQ(p.iterations, 10);
  EXPECT_EQ(p.alpha, 1.0);
  EXPECT_EQ(p.early_stopping, 3);
  EXPECT_EQ(p.min_iterations, 3);
  EXPECT_EQ(p.max_playout_steps, 10);
  EXPECT_NO_THROW(p.validate());
}

TEST(NrpaParams, JsonRoundTrip) {
  NrpaParams p;
  p.level = 2;
  p.iterations = 7;
  p.alpha = 0.5;
  p.rng_seed = 1234567890123ULL;
  p.root_selection = RootSelection::PolicyArgmax;
  p.adapt_variant = AdaptVariant::Classical;
  p.stop_on_solved = false;
  const auto q = NrpaParams::from_json(p.to_json());
  EXPECT_EQ(q.to_json(), p.to_json());
}

TEST(NrpaParams, ValidationNamesTheField) {
  NrpaParams p;
  p.alpha = 0.0;
  try {
    p.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  p = {};
  p.min_iterations = 20;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_THROW(NrpaParams::from_json({{"root_selection", "sideways"}}), ConfigError);
}

#include "bitsearch/environment.hpp"
#include "bitsearch/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace bitsearch;
using namespace bitsearch::testing;

namespace {

NetworkSpec toy_spec(std::size_t layers) {
  std::vector<std::size_t> widths(layers, 6);
  widths.back() = 3;
  return build_spec(dense_arch(5, widths));
}

double toy_oracle(const QuantAssignment& a) {
  for (int b : a.bits)
    if (b < 4) return 0.3;
  return 1.0;
}

AgentArch small_agent() {
  AgentArch a;
  a.lstm_hidden = 8;
  a.policy_hidden1 = 16;
  a.policy_hidden2 = 16;
  a.value_hidden1 = 16;
  a.value_hidden2 = 8;
  return a;
}

AgentParams make_params(const AgentArch& arch, std::uint64_t seed) {
  Rng rng(seed);
  return AgentParams::initialized(arch, rng);
}

SearchConfig toy_search(int episodes, std::uint64_t seed) {
  SearchConfig cfg;
  cfg.arch = small_agent();
  cfg.ppo.episodes = episodes;
  cfg.ppo.seed = seed;
  return cfg;
}

}  // namespace

TEST(Reward, BelowThresholdIsMinusOne) {
  EXPECT_EQ(compute_reward(0.7, 0.39, RewardParams{}), -1.0);
}

TEST(Reward, FullPrecisionIsZero) {
  EXPECT_NEAR(compute_reward(1.0, 1.0, RewardParams{}), 0.0, 1e-12);
}

TEST(Reward, HalfQuantFullAccuracy) {
  const double expected = 1.0 - std::exp(0.2 * std::log(0.5));
  EXPECT_NEAR(compute_reward(0.5, 1.0, RewardParams{}), expected, 1e-9);
  EXPECT_NEAR(compute_reward(0.5, 1.0, RewardParams{}), 0.12944943670387588, 1e-9);
}

TEST(Reward, ThresholdIsInclusive) {
  RewardParams p;
  EXPECT_EQ(compute_reward(0.5, std::nextafter(0.4, 0.0), p), -1.0);
  EXPECT_GT(compute_reward(0.5, 0.4, p), -1.0);
}

TEST(Reward, MonotoneOnGrid) {
  RewardParams p;
  int violations = 0;
  for (int i = 1; i <= 100; ++i) {
    for (int j = 1; j <= 100; ++j) {
      const double q = i / 100.0;
      const double acc = j / 100.0;
      const double r = compute_reward(q, acc, p);
      if (i < 100 && compute_reward(q + 0.01, acc, p) > r) ++violations;
      if (j < 100 && compute_reward(q, acc + 0.01, p) < r) ++violations;
      if (r > 1.0 || r < -1.0) ++violations;
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(Reward, BelowThresholdWorseThanNoQuantization) {
  RewardParams p;
  for (int i = 1; i <= 100; ++i)
    EXPECT_LT(compute_reward(i / 100.0, 0.39, p), compute_reward(1.0, 1.0, p));
}

TEST(Reward, AlternativeFormulations) {
  RewardParams p;
  p.formulation = RewardFormulation::ratio;
  EXPECT_DOUBLE_EQ(compute_reward(0.5, 1.0, p), 2.0);
  p.formulation = RewardFormulation::difference;
  EXPECT_DOUBLE_EQ(compute_reward(0.5, 0.75, p), 0.25);
}

TEST(Reward, ParsingAndValidation) {
  EXPECT_EQ(parse_reward_formulation("ratio"), RewardFormulation::ratio);
  EXPECT_THROW(parse_reward_formulation("sum"), ConfigError);
  EXPECT_EQ(parse_reward_mode("deferred"), RewardMode::deferred);
  RewardParams bad;
  bad.th = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(QuantEnv, ResetState) {
  QuantEnv env(toy_spec(4), EnvConfig{}, toy_oracle);
  env.reset();
  EXPECT_EQ(env.state().cursor, 0u);
  EXPECT_EQ(env.state().quant_state, 1.0);
  EXPECT_EQ(env.state().acc_state, 1.0);
  EXPECT_EQ(env.state().assignment, QuantAssignment::uniform(4, 8));
  EXPECT_FALSE(env.done());
}

TEST(QuantEnv, FourLayersTakeFourSteps) {
  QuantEnv env(toy_spec(4), EnvConfig{}, toy_oracle);
  AgentParams params = make_params(small_agent(), 1);
  PolicyRunner runner(params);
  Rng rng(2);
  env.reset();
  runner.reset();
  for (int i = 0; i < 4; ++i) {
    ASSERT_FALSE(env.done());
    const auto rec = env.step(runner, &rng);
    EXPECT_EQ(rec.done, i == 3);
  }
  EXPECT_TRUE(env.done());
}

TEST(QuantEnv, DeferredRewardsOnlyAtTheEnd) {
  EnvConfig cfg;
  cfg.reward_mode = RewardMode::deferred;
  QuantEnv env(toy_spec(4), cfg, toy_oracle);
  AgentParams params = make_params(small_agent(), 3);
  PolicyRunner runner(params);
  Rng rng(4);
  env.reset();
  runner.reset();
  std::vector<double> rewards;
  while (!env.done()) rewards.push_back(env.step(runner, &rng).step.reward);
  ASSERT_EQ(rewards.size(), 4u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(rewards[i], 0.0);
  EXPECT_DOUBLE_EQ(rewards[3], compute_reward(env.state().quant_state, env.state().acc_state,
                                              cfg.reward));
}

TEST(QuantEnv, MaxBitsKeepQuantAtOne) {
  EnvConfig cfg;
  cfg.bitwidth_set = {8};
  QuantEnv env(toy_spec(3), cfg, toy_oracle);
  AgentArch arch = small_agent();
  arch.actions = 1;
  AgentParams params = make_params(arch, 5);
  PolicyRunner runner(params);
  Rng rng(6);
  env.reset();
  runner.reset();
  while (!env.done()) {
    const auto rec = env.step(runner, &rng);
    EXPECT_EQ(rec.bits, 8);
    EXPECT_EQ(env.state().quant_state, 1.0);
    EXPECT_NEAR(rec.step.reward, 0.0, 1e-12);
  }
}

TEST(QuantEnv, DivergenceEndsEpisodeWithPenalty) {
  AccuracyFn diverging = [](const QuantAssignment&) -> double {
    throw TrainingDivergedError(0, "loss is not finite");
  };
  QuantEnv env(toy_spec(3), EnvConfig{}, diverging);
  AgentParams params = make_params(small_agent(), 7);
  PolicyRunner runner(params);
  Rng rng(8);
  env.reset();
  runner.reset();
  const auto rec = env.step(runner, &rng);
  EXPECT_EQ(rec.step.reward, -1.0);
  EXPECT_TRUE(rec.done);
  EXPECT_TRUE(env.state().aborted);
  EXPECT_TRUE(env.done());
}

TEST(QuantEnv, RestrictedModeMovesOneStepFromAnchor) {
  EnvConfig cfg;
  cfg.action_mode = ActionMode::restricted;
  QuantEnv env(toy_spec(3), cfg, toy_oracle);
  AgentParams params = make_params(small_agent(), 9);
  PolicyRunner runner(params);
  Rng rng(10);
  for (int episode = 0; episode < 20; ++episode) {
    const QuantAssignment before = episode == 0 ? QuantAssignment::uniform(3, 8)
                                                : env.state().assignment;
    env.reset();
    runner.reset();
    while (!env.done()) env.step(runner, &rng);
    for (std::size_t l = 0; l < 3; ++l)
      EXPECT_LE(std::abs(env.state().assignment[l] - before[l]), 1);
    env.remember_episode(env.state().assignment);
  }
}

TEST(Search, ZeroEpisodesReturnsUniformEight) {
  const auto result = run_search(toy_spec(3), toy_oracle, toy_search(0, 1));
  EXPECT_EQ(result.best, QuantAssignment::uniform(3, 8));
  EXPECT_EQ(result.best_episode, -1);
  EXPECT_TRUE(result.episodes.empty());
}

TEST(Search, LogsEveryEpisodeAndCallsBack) {
  int calls = 0;
  const auto result = run_search(toy_spec(3), toy_oracle, toy_search(12, 3), {},
                                 [&](const EpisodeLog&) { ++calls; });
  EXPECT_EQ(calls, 12);
  ASSERT_EQ(result.episodes.size(), 12u);
  for (std::size_t i = 0; i < result.episodes.size(); ++i) {
    const auto& log = result.episodes[i];
    EXPECT_EQ(log.episode, static_cast<int>(i));
    EXPECT_EQ(log.bits.size(), 3u);
    EXPECT_EQ(log.probs.size(), 3u);
    EXPECT_NEAR(log.mean_reward * 3.0, log.total_reward, 1e-12);
  }
}

TEST(Search, BestIsTheHighestRewardSeen) {
  const auto result = run_search(toy_spec(3), toy_oracle, toy_search(40, 4));
  const EnvConfig env;
  double best = 0.0;
  for (const auto& log : result.episodes)
    best = std::max(best, compute_reward(log.quant_state, log.acc_state, env.reward));
  EXPECT_DOUBLE_EQ(result.best_reward, best);
  if (result.best_episode >= 0) {
    EXPECT_EQ(result.best, result.episodes[static_cast<std::size_t>(result.best_episode)].bits);
  }
}

TEST(Search, SameSeedSameTrajectory) {
  const auto a = run_search(toy_spec(3), toy_oracle, toy_search(15, 9));
  const auto b = run_search(toy_spec(3), toy_oracle, toy_search(15, 9));
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].bits, b.episodes[i].bits);
    EXPECT_EQ(a.episodes[i].total_reward, b.episodes[i].total_reward);
  }
  EXPECT_TRUE(a.agent == b.agent);
}

TEST(Search, LongRetrainProducesFinalAccuracy) {
  QuantAssignment seen;
  const auto result = run_search(toy_spec(3), toy_oracle, toy_search(5, 2),
                                 [&](const QuantAssignment& a) {
                                   seen = a;
                                   return 0.75;
                                 });
  EXPECT_EQ(seen, result.best);
  ASSERT_TRUE(result.final_accuracy.has_value());
  EXPECT_EQ(*result.final_accuracy, 0.75);
}

TEST(Search, RewardImprovesOnToyProblem) {
  SearchConfig cfg;
  cfg.ppo.episodes = 400;
  cfg.ppo.seed = 21;
  const auto result = run_search(toy_spec(3), toy_oracle, cfg);
  const std::size_t q = result.episodes.size() / 4;
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    first += result.episodes[i].total_reward;
    last += result.episodes[result.episodes.size() - q + i].total_reward;
  }
  EXPECT_GT(last / q, first / q);
}

TEST(EpisodesToThreshold, TrailingWindow) {
  std::vector<EpisodeLog> logs(6);
  const double acc[] = {0.3, 1.0, 1.0, 0.3, 1.0, 1.0};
  for (std::size_t i = 0; i < logs.size(); ++i) {
    logs[i].episode = static_cast<int>(i);
    logs[i].acc_state = acc[i];
  }
  EXPECT_EQ(episodes_to_threshold(logs, 0.95, 2), 2);
  EXPECT_EQ(episodes_to_threshold(logs, 0.95, 1), 1);
  EXPECT_FALSE(episodes_to_threshold(logs, 0.95, 3).has_value());
  EXPECT_FALSE(episodes_to_threshold({}, 0.5, 2).has_value());
}

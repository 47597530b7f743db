#include "bitsearch/agent.hpp"
#include "bitsearch/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace bitsearch;
using namespace bitsearch::testing;
namespace fs = std::filesystem;

namespace {

AgentArch small_arch(bool recurrent = true) {
  AgentArch a;
  a.lstm_hidden = 4;
  a.policy_hidden1 = 5;
  a.policy_hidden2 = 5;
  a.value_hidden1 = 5;
  a.value_hidden2 = 3;
  a.actions = 3;
  a.recurrent = recurrent;
  return a;
}

StateEmbedding random_embedding(Rng& rng) {
  StateEmbedding e;
  for (auto& v : e.values) v = rng.uniform(0.0, 1.0);
  return e;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

void check_sequence_gradients(bool recurrent, std::uint64_t seed) {
  Rng rng(seed);
  const AgentParams base = AgentParams::initialized(small_arch(recurrent), rng);
  AgentParams params = base;
  // Larger output weights than the near-uniform initialization so that
  // every block carries a visible gradient.
  for (auto& v : params.block(params.layout().policy_out.weight)) v = rng.uniform(-0.5, 0.5);
  for (auto& v : params.flat()) v += rng.uniform(-0.05, 0.05);

  std::vector<StateEmbedding> seq{random_embedding(rng), random_embedding(rng)};
  std::vector<std::vector<double>> dlogits(2, std::vector<double>(3));
  std::vector<double> dvalues(2);
  for (auto& row : dlogits) {
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
  }
  for (auto& v : dvalues) v = rng.uniform(-1.0, 1.0);

  // Scalar whose derivative with respect to logits and values is exactly
  // (dlogits, dvalues).
  auto objective = [&] {
    SequenceEvaluator ev(params);
    const auto f = ev.forward(seq);
    double total = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
      for (std::size_t a = 0; a < 3; ++a) total += dlogits[t][a] * f.logits[t][a];
      total += dvalues[t] * f.values[t];
    }
    return total;
  };

  std::vector<double> grad(params.flat().size(), 0.0);
  SequenceEvaluator ev(params);
  ev.forward(seq);
  ev.backward(dlogits, dvalues, grad);
  const auto numeric = numeric_gradient(params.flat(), objective);
  EXPECT_LT(max_relative_error(grad, numeric), 1e-4) << "seed " << seed;
}

}  // namespace

TEST(EmbedState, FreshEpisodeFirstLayer) {
  LayerSpec l;
  l.index = 0;
  l.n_weights = 100;
  l.n_macc = 6400;
  l.weight_std = 0.25;
  const auto e = embed_state(l, 8, 1.0, 1.0, 4, 8);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_DOUBLE_EQ(e[1], 2.0 / 7.0);
  EXPECT_DOUBLE_EQ(e[2], std::log10(6400.0) / 7.0);
  EXPECT_EQ(e[3], 0.25);
  EXPECT_EQ(e[4], 1.0);
  EXPECT_EQ(e[5], 1.0);
  EXPECT_EQ(e[6], 1.0);
}

TEST(EmbedState, LastLayerIndexAndClamp) {
  LayerSpec l;
  l.index = 3;
  l.n_weights = 1;
  l.n_macc = 100000000000ULL;  // 1e11 -> 11/7, clamped
  const auto e = embed_state(l, 2, 0.4, 0.9, 4, 8);
  EXPECT_EQ(e[0], 0.75);
  EXPECT_EQ(e[1], 0.0);
  EXPECT_EQ(e[2], 1.2);
  EXPECT_EQ(e[4], 0.25);
}

TEST(EmbedState, LenetSecondLayerGolden) {
  // conv 8x4x3x3 on 4x8x8: 288 weights, 10368 MAccs.
  LayerSpec l;
  l.index = 1;
  l.n_weights = 288;
  l.n_macc = 10368;
  l.weight_std = 0.1375;
  const auto e = embed_state(l, 4, 0.6, 0.97, 4, 8);
  const std::array<double, 7> golden{0.25, 0.35134178396560445, 0.5736707126466455, 0.1375, 0.5, 0.6, 0.97};
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(e[i], golden[i], 1e-14) << i;
}

TEST(Softmax, ValidDistributionForExtremeLogits) {
  const std::vector<double> logits{1000.0, -1000.0, 3.0, 999.0};
  const auto p = softmax(logits);
  EXPECT_NEAR(sum(p), 1.0, 1e-12);
  for (double v : p) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(p[0], p[3]);
}

TEST(Softmax, MaskedEntriesGetZero) {
  const std::vector<double> logits{1.0, 2.0, 3.0};
  const auto p = softmax(logits, ActionMask{1, 0, 1});
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0] + p[2], 1.0, 1e-15);
}

TEST(PolicyForward, DistributionSumsToOne) {
  Rng rng(1);
  const AgentParams params = AgentParams::initialized(AgentArch{}, rng);
  LstmState h = LstmState::zeros(64);
  for (int t = 0; t < 10; ++t) {
    auto out = policy_forward(params, random_embedding(rng), h);
    EXPECT_NEAR(sum(out.probs), 1.0, 1e-9);
    EXPECT_EQ(out.probs.size(), 7u);
    h = out.hidden;
  }
}

TEST(PolicyForward, ZeroWeightsGiveUniform) {
  const AgentParams params(AgentArch{});
  Rng rng(2);
  const auto out = policy_forward(params, random_embedding(rng), LstmState::zeros(64));
  for (double p : out.probs) EXPECT_NEAR(p, 1.0 / 7.0, 1e-15);
}

TEST(PolicyForward, GoldenDistribution) {
  Rng rng(2024);
  const AgentParams params = AgentParams::initialized(small_arch(), rng);
  StateEmbedding e;
  e.values = {0.25, 0.35, 0.57, 0.14, 0.5, 0.6, 0.97};
  const std::vector<StateEmbedding> seq{e, e};
  const auto dists = policy_forward(params, seq);
  ASSERT_EQ(dists.size(), 2u);
  const std::array<double, 3> golden{0.33348476152717993, 0.33361689211659179, 0.33289834635622828};
  for (std::size_t a = 0; a < 3; ++a) EXPECT_NEAR(dists[1][a], golden[a], 1e-12);
}

TEST(PolicyForward, SequenceMatchesStepwise) {
  Rng rng(3);
  const AgentParams params = AgentParams::initialized(small_arch(), rng);
  std::vector<StateEmbedding> seq{random_embedding(rng), random_embedding(rng), random_embedding(rng)};
  const auto dists = policy_forward(params, seq);
  LstmState h = LstmState::zeros(4);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    auto out = policy_forward(params, seq[t], h);
    EXPECT_EQ(out.probs, dists[t]);
    h = out.hidden;
  }
}

TEST(SampleAction, DegenerateDistribution) {
  Rng rng(4);
  const std::vector<double> d{1.0, 0.0, 0.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_action(d, rng), 0u);
}

TEST(SampleAction, UniformFrequencies) {
  Rng rng(5);
  const std::vector<double> d(7, 1.0 / 7.0);
  std::vector<int> counts(7, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[sample_action(d, rng)];
  double chi2 = 0.0;
  for (int c : counts) {
    EXPECT_NEAR(static_cast<double>(c) / n, 1.0 / 7.0, 0.01);
    chi2 += std::pow(c - n / 7.0, 2) / (n / 7.0);
  }
  EXPECT_LT(chi2, 22.46);  // 6 degrees of freedom, p = 0.001
}

TEST(SampleAction, ReproducibleUnderSeed) {
  const std::vector<double> d{0.2, 0.5, 0.3};
  Rng a(6), b(6);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sample_action(d, a), sample_action(d, b));
}

TEST(RestrictActions, FlexibleIsIdentity) {
  const std::vector<double> d{0.1, 0.2, 0.3, 0.4};
  EXPECT_EQ(restrict_actions(d, 2, ActionMode::flexible), d);
}

TEST(RestrictActions, LowerBoundaryKeepsTwoActions) {
  const std::vector<double> d(7, 1.0 / 7.0);
  const auto r = restrict_actions(d, 0, ActionMode::restricted);
  EXPECT_NEAR(r[0], 0.5, 1e-15);
  EXPECT_NEAR(r[1], 0.5, 1e-15);
  for (std::size_t a = 2; a < 7; ++a) EXPECT_EQ(r[a], 0.0);
}

TEST(RestrictActions, InteriorKeepsNeighbourhood) {
  const std::vector<double> d(7, 1.0 / 7.0);
  // Bitwidth 5 is index 3 of {2..8}.
  const auto r = restrict_actions(d, 3, ActionMode::restricted);
  for (std::size_t a = 0; a < 7; ++a) EXPECT_NEAR(r[a], (a >= 2 && a <= 4) ? 1.0 / 3.0 : 0.0, 1e-15);
}

TEST(RestrictActions, NeverLeavesNeighbourhood) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> d(7);
    for (auto& v : d) v = rng.uniform();
    const std::size_t cur = rng.below(7);
    const auto r = restrict_actions(d, cur, ActionMode::restricted);
    for (std::size_t a = 0; a < 7; ++a) {
      if (a + 1 < cur || a > cur + 1) {
        EXPECT_EQ(r[a], 0.0);
      }
    }
    EXPECT_NEAR(sum(r), 1.0, 1e-12);
  }
}

TEST(MaskedPolicy, MatchesRestrictedRenormalization) {
  Rng rng(8);
  const AgentParams params = AgentParams::initialized(AgentArch{}, rng);
  const auto e = random_embedding(rng);
  const auto full = policy_forward(params, e, LstmState::zeros(64));
  const auto masked = policy_forward(params, e, LstmState::zeros(64), action_mask(7, 4, ActionMode::restricted));
  const auto expected = restrict_actions(full.probs, 4, ActionMode::restricted);
  for (std::size_t a = 0; a < 7; ++a) EXPECT_NEAR(masked.probs[a], expected[a], 1e-12);
}

TEST(SequenceGradient, LstmAgentMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) check_sequence_gradients(true, seed);
}

TEST(SequenceGradient, FeedForwardAgentMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) check_sequence_gradients(false, seed);
}

TEST(PolicyRunner, GreedyIsDeterministicAndResetRestartsState) {
  Rng rng(9);
  const AgentParams params = AgentParams::initialized(small_arch(), rng);
  const auto e = random_embedding(rng);
  PolicyRunner runner(params);
  const auto first = runner.act(e, {}, nullptr);
  runner.act(e, {}, nullptr);
  runner.reset();
  const auto again = runner.act(e, {}, nullptr);
  EXPECT_EQ(first.probs, again.probs);
  EXPECT_EQ(first.action, again.action);
  EXPECT_EQ(first.value, again.value);
  EXPECT_NEAR(first.log_prob, std::log(first.probs[first.action]), 1e-15);
}

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("bitsearch_agent_" + name); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(10);
  const AgentParams params = AgentParams::initialized(small_arch(false), rng);
  const auto path = temp_file("roundtrip");
  save_checkpoint(params, path);
  EXPECT_EQ(load_checkpoint(path), params);
  EXPECT_EQ(slurp(path).substr(0, 4), "QFAG");
  fs::remove(path);
}

TEST(Checkpoint, TruncatedFileIsCorrupt) {
  Rng rng(11);
  const auto path = temp_file("truncated");
  save_checkpoint(AgentParams::initialized(small_arch(), rng), path);
  const std::string bytes = slurp(path);
  spit(path, bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(path), CorruptCheckpointError);
  fs::remove(path);
}

TEST(Checkpoint, WrongMagicIsAVersionError) {
  Rng rng(12);
  const auto path = temp_file("magic");
  save_checkpoint(AgentParams::initialized(small_arch(), rng), path);
  std::string bytes = slurp(path);
  bytes.replace(0, 4, "QFWT");
  spit(path, bytes);
  EXPECT_THROW(load_checkpoint(path), CheckpointVersionError);
  fs::remove(path);
}

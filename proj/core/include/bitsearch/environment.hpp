#pragma once

#include "bitsearch/agent.hpp"
#include "bitsearch/assignment.hpp"
#include "bitsearch/cost_model.hpp"
#include "bitsearch/network.hpp"
#include "bitsearch/ppo.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bitsearch {

enum class RewardFormulation { shaped, ratio, difference };

std::string to_string(RewardFormulation f);
RewardFormulation parse_reward_formulation(const std::string& text);

struct RewardParams {
  double a = 0.2;
  double b = 0.4;
  double th = 0.4;
  RewardFormulation formulation = RewardFormulation::shaped;

  void validate() const;
};

/// shaped: -1 below the accuracy threshold, otherwise
///   (1 - quant^a) * max(acc, th)^(b / max(acc, th));
/// ratio: acc / quant; difference: acc - quant.
double compute_reward(double quant_state, double acc_state, const RewardParams& p);

enum class RewardMode { per_step, deferred };

std::string to_string(RewardMode m);
RewardMode parse_reward_mode(const std::string& text);

/// Relative accuracy (current over full precision) reached by an
/// assignment. May throw TrainingDivergedError.
using AccuracyFn = std::function<double(const QuantAssignment&)>;

struct EnvConfig {
  std::vector<int> bitwidth_set{2, 3, 4, 5, 6, 7, 8};
  CostParams cost;
  RewardParams reward;
  RewardMode reward_mode = RewardMode::per_step;
  ActionMode action_mode = ActionMode::flexible;

  void validate() const;
};

struct EnvState {
  std::size_t cursor = 0;
  QuantAssignment assignment;
  double quant_state = 1.0;
  double acc_state = 1.0;
  bool aborted = false;
};

struct StepRecord {
  TrajectoryStep step;
  std::vector<double> probs;  // distribution the action was drawn from
  int bits = 0;
  bool done = false;
};

/// Layer-by-layer quantization environment. Every episode starts from all
/// layers at max_bits.
class QuantEnv {
 public:
  QuantEnv(NetworkSpec spec, EnvConfig cfg, AccuracyFn oracle);

  void reset();
  const EnvState& state() const noexcept { return state_; }
  bool done() const noexcept { return state_.cursor >= spec_.layer_count(); }
  const NetworkSpec& spec() const noexcept { return spec_; }
  const EnvConfig& config() const noexcept { return cfg_; }

  /// Observation for the layer under the cursor.
  StateEmbedding observe() const;
  ActionMask current_mask() const;

  /// Embeds the current layer, lets the agent choose a bitwidth, applies it,
  /// and computes the reward for the configured mode. `rng == nullptr` acts
  /// greedily. Divergence of the accuracy estimate ends the episode with
  /// reward -1.
  StepRecord step(PolicyRunner& agent, Rng* rng);

  /// In restricted mode, moves are relative to the previous episode's
  /// bitwidths; this records them. No effect in flexible mode.
  void remember_episode(const QuantAssignment& chosen);

 private:
  std::size_t bit_index(int bits) const;
  int anchor_bits(std::size_t layer) const;

  NetworkSpec spec_;
  EnvConfig cfg_;
  AccuracyFn oracle_;
  EnvState state_;
  QuantAssignment anchor_;
};

struct EpisodeLog {
  int episode = 0;
  double mean_reward = 0.0;
  double total_reward = 0.0;
  double terminal_reward = 0.0;
  double quant_state = 1.0;
  double acc_state = 1.0;
  bool aborted = false;
  QuantAssignment bits;
  std::vector<std::vector<double>> probs;  // [layer][action]
};

struct SearchConfig {
  EnvConfig env;
  PPOConfig ppo;
  AgentArch arch;  // `actions` is overwritten with the bitwidth set size
  double convergence_threshold = 0.95;
  std::size_t convergence_window = 20;
};

struct SearchResult {
  QuantAssignment best;
  double best_reward = 0.0;  // shaped reward of the final state
  double best_quant = 1.0;
  double best_acc = 1.0;
  int best_episode = -1;
  QuantAssignment greedy;  // most likely action per layer after training
  std::vector<EpisodeLog> episodes;
  std::optional<int> episodes_to_threshold;
  std::optional<double> final_accuracy;
  std::optional<AgentParams> agent;
  double elapsed_seconds = 0.0;
};

using EpisodeCallback = std::function<void(const EpisodeLog&)>;
using RetrainFn = std::function<double(const QuantAssignment&)>;

/// First episode at which the trailing `window` mean of acc_state reaches
/// `threshold`.
std::optional<int> episodes_to_threshold(const std::vector<EpisodeLog>& logs, double threshold,
                                         std::size_t window);

/// Runs ppo.episodes episodes with a PPO update after every
/// ppo.episodes_per_update of them. The best solution is the highest shaped
/// reward of an episode's final state, ties to lower quantization state and
/// then the earlier episode. `long_retrain`, when set, produces the final
/// accuracy of the best assignment.
SearchResult run_search(const NetworkSpec& spec, const AccuracyFn& oracle,
                        const SearchConfig& cfg, const RetrainFn& long_retrain = {},
                        const EpisodeCallback& on_episode = {});

}  // namespace bitsearch

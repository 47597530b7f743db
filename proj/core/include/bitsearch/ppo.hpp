#pragma once

#include "bitsearch/agent.hpp"

#include <cstdint>
#include <vector>

namespace bitsearch {

struct PPOConfig {
  double adam_step_size = 1e-4;
  double gae_parameter = 0.99;
  double discount_gamma = 0.99;
  int update_epochs = 3;
  double clip_epsilon = 0.1;
  double entropy_coeff = 0.01;
  double value_coeff = 0.5;
  int episodes = 500;
  /// Trajectories collected before each update.
  int episodes_per_update = 1;
  bool normalize_advantages = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrajectoryStep {
  StateEmbedding embedding;
  ActionMask mask;  // empty when all actions were available
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  bool terminal = true;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// A_t = delta_t + gamma * lambda * A_{t+1}, delta_t = r_t + gamma V_{t+1} - V_t,
/// with V = 0 past a terminal step. returns = advantages + values.
Advantages gae_advantages(const Trajectory& traj, double gamma, double lambda);

/// Clipped surrogate term min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double epsilon);

struct PpoLossParts {
  double total = 0.0;
  double surrogate = 0.0;  // mean clipped surrogate (maximized)
  double value_loss = 0.0;
  double entropy = 0.0;
};

/// Loss minimized by one update pass:
///   -surrogate - entropy_coeff * entropy + value_coeff * mse(values, returns)
/// averaged over all steps of the batch. Accumulates its gradient into
/// `grad` when non-empty. Advantages are used as given.
PpoLossParts ppo_loss(const AgentParams& params, std::span<const Trajectory> batch,
                      std::span<const Advantages> targets, const PPOConfig& cfg,
                      std::span<double> grad);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_step(std::span<double> params, std::span<const double> grad, double step_size,
               AdamState& state);

/// update_epochs full-batch Adam steps on the PPO loss. Advantages are
/// normalized to zero mean and unit variance across the batch when the batch
/// holds at least two steps. Throws UpdateDivergedError on a non-finite loss.
PpoLossParts ppo_update(AgentParams& params, std::span<const Trajectory> batch,
                        const PPOConfig& cfg, AdamState& adam);

}  // namespace bitsearch

#include "bitsearch/ppo.hpp"

#include "bitsearch/error.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace bitsearch {

void PPOConfig::validate() const {
  if (!(adam_step_size > 0.0)) throw ConfigError("ppo.adam_step_size must be positive");
  if (gae_parameter < 0.0 || gae_parameter > 1.0) throw ConfigError("ppo.gae_parameter must lie in [0, 1]");
  if (discount_gamma < 0.0 || discount_gamma > 1.0) throw ConfigError("ppo.discount_gamma must lie in [0, 1]");
  if (update_epochs < 1) throw ConfigError("ppo.update_epochs must be at least 1");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw ConfigError("ppo.clip_epsilon must lie in (0, 1)");
  if (entropy_coeff < 0.0) throw ConfigError("ppo.entropy_coeff must be non-negative");
  if (value_coeff < 0.0) throw ConfigError("ppo.value_coeff must be non-negative");
  if (episodes < 0) throw ConfigError("ppo.episodes must be non-negative");
  if (episodes_per_update < 1) throw ConfigError("ppo.episodes_per_update must be at least 1");
}

Advantages gae_advantages(const Trajectory& traj, double gamma, double lambda) {
  const std::size_t n = traj.steps.size();
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const bool last = t + 1 == n;
    // A truncated (non-terminal) trajectory bootstraps from its last value.
    const double next_value = last ? (traj.terminal ? 0.0 : traj.steps[t].value) : traj.steps[t + 1].value;
    const double delta = traj.steps[t].reward + gamma * next_value - traj.steps[t].value;
    next_adv = delta + (last ? 0.0 : gamma * lambda * next_adv);
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + traj.steps[t].value;
  }
  return out;
}

double clipped_surrogate(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

PpoLossParts ppo_loss(const AgentParams& params, std::span<const Trajectory> batch,
                      std::span<const Advantages> targets, const PPOConfig& cfg, std::span<double> grad) {
  if (batch.size() != targets.size()) throw DimensionError("one advantage set per trajectory expected");
  std::size_t total_steps = 0;
  for (const auto& t : batch) total_steps += t.steps.size();
  PpoLossParts parts;
  if (total_steps == 0) return parts;
  const double inv_n = 1.0 / static_cast<double>(total_steps);
  const bool want_grad = !grad.empty();
  const std::size_t actions = params.arch().actions;

  SequenceEvaluator eval(params);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& traj = batch[k];
    const std::size_t steps = traj.steps.size();
    std::vector<StateEmbedding> inputs(steps);
    std::vector<ActionMask> masks(steps);
    bool any_mask = false;
    for (std::size_t t = 0; t < steps; ++t) {
      inputs[t] = traj.steps[t].embedding;
      masks[t] = traj.steps[t].mask;
      any_mask = any_mask || !masks[t].empty();
    }
    const auto fwd = eval.forward(inputs, any_mask ? std::span<const ActionMask>(masks) : std::span<const ActionMask>{});

    std::vector<std::vector<double>> dlogits(steps, std::vector<double>(actions, 0.0));
    std::vector<double> dvalues(steps, 0.0);
    for (std::size_t t = 0; t < steps; ++t) {
      const auto& step = traj.steps[t];
      const auto& p = fwd.probs[t];
      const double adv = targets[k].advantages[t];
      const double ret = targets[k].returns[t];
      const double logp = std::log(p[step.action]);
      const double ratio = std::exp(logp - step.log_prob);
      const double surr = clipped_surrogate(ratio, adv, cfg.clip_epsilon);

      double entropy = 0.0;
      for (double pj : p) {
        if (pj > 0.0) entropy -= pj * std::log(pj);
      }
      const double err = fwd.values[t] - ret;
      parts.surrogate += surr * inv_n;
      parts.entropy += entropy * inv_n;
      parts.value_loss += err * err * inv_n;

      if (!want_grad) continue;
      // The unclipped branch carries the gradient whenever min() selects it.
      const double dsurr_dlogp = (ratio * adv <= surr) ? ratio * adv : 0.0;
      for (std::size_t j = 0; j < actions; ++j) {
        if (p[j] <= 0.0) continue;
        const double dlogp = (j == step.action ? 1.0 : 0.0) - p[j];
        const double dentropy = -p[j] * (std::log(p[j]) + entropy);
        dlogits[t][j] = -inv_n * dsurr_dlogp * dlogp - cfg.entropy_coeff * inv_n * dentropy;
      }
      dvalues[t] = cfg.value_coeff * 2.0 * err * inv_n;
    }
    if (want_grad) eval.backward(dlogits, dvalues, grad);
  }
  parts.total = -parts.surrogate - cfg.entropy_coeff * parts.entropy + cfg.value_coeff * parts.value_loss;
  return parts;
}

void adam_step(std::span<double> params, std::span<const double> grad, double step_size, AdamState& state) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= step_size * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

PpoLossParts ppo_update(AgentParams& params, std::span<const Trajectory> batch, const PPOConfig& cfg,
                        AdamState& adam) {
  if (batch.empty()) throw Error("ppo_update needs at least one trajectory");
  std::vector<Advantages> targets;
  targets.reserve(batch.size());
  std::size_t steps = 0;
  for (const auto& traj : batch) {
    targets.push_back(gae_advantages(traj, cfg.discount_gamma, cfg.gae_parameter));
    steps += traj.steps.size();
  }
  if (cfg.normalize_advantages && steps >= 2) {
    double mean = 0.0;
    for (const auto& t : targets) {
      for (double a : t.advantages) mean += a;
    }
    mean /= static_cast<double>(steps);
    double var = 0.0;
    for (const auto& t : targets) {
      for (double a : t.advantages) var += (a - mean) * (a - mean);
    }
    const double stddev = std::sqrt(var / static_cast<double>(steps));
    for (auto& t : targets) {
      for (double& a : t.advantages) a = (a - mean) / (stddev + 1e-8);
    }
  }

  std::vector<double> grad(params.flat().size());
  PpoLossParts last;
  for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    std::fill(grad.begin(), grad.end(), 0.0);
    last = ppo_loss(params, batch, targets, cfg, grad);
    if (!std::isfinite(last.total)) {
      throw UpdateDivergedError(fmt::format("PPO loss is {} in update epoch {}", last.total, epoch));
    }
    adam_step(params.flat(), grad, cfg.adam_step_size, adam);
  }
  return last;
}

}  // namespace bitsearch

#include "bitsearch/environment.hpp"

#include "bitsearch/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>

namespace bitsearch {

std::string to_string(RewardFormulation f) {
  switch (f) {
    case RewardFormulation::shaped: return "shaped";
    case RewardFormulation::ratio: return "ratio";
    case RewardFormulation::difference: return "difference";
  }
  return "unknown";
}

RewardFormulation parse_reward_formulation(const std::string& text) {
  if (text == "shaped") return RewardFormulation::shaped;
  if (text == "ratio") return RewardFormulation::ratio;
  if (text == "difference") return RewardFormulation::difference;
  throw ConfigError(fmt::format("unknown reward formulation '{}' (expected shaped, ratio, or difference)", text));
}

void RewardParams::validate() const {
  if (!(a > 0.0)) throw ConfigError("reward.a must be positive");
  if (!(b > 0.0)) throw ConfigError("reward.b must be positive");
  if (!(th > 0.0 && th < 1.0)) throw ConfigError("reward.th must lie in (0, 1)");
}

double compute_reward(double quant_state, double acc_state, const RewardParams& p) {
  switch (p.formulation) {
    case RewardFormulation::ratio: return acc_state / quant_state;
    case RewardFormulation::difference: return acc_state - quant_state;
    case RewardFormulation::shaped: break;
  }
  if (acc_state < p.th) return -1.0;
  const double reward = 1.0 - std::pow(quant_state, p.a);
  const double acc = std::max(acc_state, p.th);
  return reward * std::pow(acc, p.b / acc);
}

std::string to_string(RewardMode m) { return m == RewardMode::per_step ? "per_step" : "deferred"; }

RewardMode parse_reward_mode(const std::string& text) {
  if (text == "per_step") return RewardMode::per_step;
  if (text == "deferred") return RewardMode::deferred;
  throw ConfigError(fmt::format("unknown reward mode '{}' (expected per_step or deferred)", text));
}

void EnvConfig::validate() const {
  cost.validate();
  reward.validate();
  validate_bitwidth_set(bitwidth_set, cost.max_bits);
}

QuantEnv::QuantEnv(NetworkSpec spec, EnvConfig cfg, AccuracyFn oracle)
    : spec_(std::move(spec)), cfg_(std::move(cfg)), oracle_(std::move(oracle)) {
  cfg_.validate();
  if (spec_.layers.empty()) throw DimensionError("environment needs at least one layer");
  if (!oracle_) throw Error("environment needs an accuracy oracle");
  anchor_ = QuantAssignment::uniform(spec_.layer_count(), cfg_.cost.max_bits);
  reset();
}

void QuantEnv::reset() {
  state_ = EnvState{};
  state_.assignment = QuantAssignment::uniform(spec_.layer_count(), cfg_.cost.max_bits);
  state_.quant_state = state_of_quantization(spec_, state_.assignment, cfg_.cost);
  state_.acc_state = 1.0;
}

std::size_t QuantEnv::bit_index(int bits) const {
  const auto& set = cfg_.bitwidth_set;
  const auto it = std::lower_bound(set.begin(), set.end(), bits);
  if (it == set.end()) return set.size() - 1;
  if (*it != bits && it != set.begin()) {
    // Snap to the nearest member of the set.
    const auto below = it - 1;
    return static_cast<std::size_t>((bits - *below <= *it - bits ? below : it) - set.begin());
  }
  return static_cast<std::size_t>(it - set.begin());
}

int QuantEnv::anchor_bits(std::size_t layer) const {
  return cfg_.action_mode == ActionMode::restricted ? anchor_[layer] : state_.assignment[layer];
}

StateEmbedding QuantEnv::observe() const {
  const std::size_t l = state_.cursor;
  if (l >= spec_.layer_count()) throw Error("episode is finished; call reset()");
  return embed_state(spec_.layers[l], anchor_bits(l), state_.quant_state, state_.acc_state, spec_.layer_count(),
                     cfg_.cost.max_bits);
}

ActionMask QuantEnv::current_mask() const {
  return action_mask(cfg_.bitwidth_set.size(), bit_index(anchor_bits(state_.cursor)), cfg_.action_mode);
}

StepRecord QuantEnv::step(PolicyRunner& agent, Rng* rng) {
  if (done()) throw Error("episode is finished; call reset()");
  StepRecord rec;
  rec.step.embedding = observe();
  rec.step.mask = current_mask();
  auto decision = agent.act(rec.step.embedding, rec.step.mask, rng);
  rec.step.action = decision.action;
  rec.step.log_prob = decision.log_prob;
  rec.step.value = decision.value;
  rec.probs = std::move(decision.probs);
  rec.bits = cfg_.bitwidth_set[decision.action];

  state_.assignment[state_.cursor] = rec.bits;
  state_.quant_state = state_of_quantization(spec_, state_.assignment, cfg_.cost);
  ++state_.cursor;

  const bool last = done();
  if (cfg_.reward_mode == RewardMode::per_step || last) {
    try {
      state_.acc_state = oracle_(state_.assignment);
      rec.step.reward = compute_reward(state_.quant_state, state_.acc_state, cfg_.reward);
    } catch (const TrainingDivergedError&) {
      // Treated as a collapse of accuracy; the episode stops here.
      state_.aborted = true;
      state_.acc_state = 0.0;
      state_.cursor = spec_.layer_count();
      rec.step.reward = -1.0;
    }
  } else {
    rec.step.reward = 0.0;
  }
  rec.done = done();
  return rec;
}

void QuantEnv::remember_episode(const QuantAssignment& chosen) {
  if (cfg_.action_mode == ActionMode::restricted) anchor_ = chosen;
}

std::optional<int> episodes_to_threshold(const std::vector<EpisodeLog>& logs, double threshold, std::size_t window) {
  if (window == 0) window = 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    sum += logs[i].acc_state;
    if (i >= window) sum -= logs[i - window].acc_state;
    if (i + 1 >= window && sum / static_cast<double>(window) >= threshold) return logs[i].episode;
  }
  return std::nullopt;
}

namespace {

bool better_solution(double reward, double quant, double best_reward, double best_quant) {
  if (reward != best_reward) return reward > best_reward;
  return quant < best_quant;
}

}  // namespace

SearchResult run_search(const NetworkSpec& spec, const AccuracyFn& oracle, const SearchConfig& cfg,
                        const RetrainFn& long_retrain, const EpisodeCallback& on_episode) {
  cfg.ppo.validate();
  const auto started = std::chrono::steady_clock::now();

  QuantEnv env(spec, cfg.env, oracle);
  AgentArch arch = cfg.arch;
  arch.actions = cfg.env.bitwidth_set.size();
  Rng init_rng(child_seed(cfg.ppo.seed, "agent-init"));
  Rng action_rng(child_seed(cfg.ppo.seed, "agent-actions"));
  AgentParams params = AgentParams::initialized(arch, init_rng);
  AdamState adam;

  RewardParams shaped = cfg.env.reward;
  shaped.formulation = RewardFormulation::shaped;

  SearchResult result;
  result.best = QuantAssignment::uniform(spec.layer_count(), cfg.env.cost.max_bits);
  result.best_quant = 1.0;
  result.best_acc = 1.0;
  result.best_reward = compute_reward(1.0, 1.0, shaped);

  std::vector<Trajectory> pending;
  for (int episode = 0; episode < cfg.ppo.episodes; ++episode) {
    env.reset();
    PolicyRunner runner(params);
    Trajectory traj;
    EpisodeLog log;
    log.episode = episode;
    while (!env.done()) {
      auto rec = env.step(runner, &action_rng);
      log.probs.push_back(std::move(rec.probs));
      traj.steps.push_back(std::move(rec.step));
    }
    const auto& st = env.state();
    log.bits = st.assignment;
    log.quant_state = st.quant_state;
    log.acc_state = st.acc_state;
    log.aborted = st.aborted;
    for (const auto& s : traj.steps) log.total_reward += s.reward;
    log.mean_reward = log.total_reward / static_cast<double>(traj.steps.size());
    log.terminal_reward = traj.steps.back().reward;
    // Layers skipped by an aborted episode keep no probabilities.
    log.probs.resize(spec.layer_count());

    const double final_reward = st.aborted ? -1.0 : compute_reward(st.quant_state, st.acc_state, shaped);
    if (!st.aborted && better_solution(final_reward, st.quant_state, result.best_reward, result.best_quant)) {
      result.best = st.assignment;
      result.best_reward = final_reward;
      result.best_quant = st.quant_state;
      result.best_acc = st.acc_state;
      result.best_episode = episode;
    }
    env.remember_episode(st.assignment);

    pending.push_back(std::move(traj));
    if (static_cast<int>(pending.size()) >= cfg.ppo.episodes_per_update) {
      ppo_update(params, pending, cfg.ppo, adam);
      pending.clear();
    }
    if (on_episode) on_episode(log);
    result.episodes.push_back(std::move(log));
  }
  if (!pending.empty()) ppo_update(params, pending, cfg.ppo, adam);

  // Most likely bitwidth per layer under the final policy.
  env.reset();
  {
    PolicyRunner runner(params);
    while (!env.done()) env.step(runner, nullptr);
    result.greedy = env.state().assignment;
  }

  result.episodes_to_threshold = episodes_to_threshold(result.episodes, cfg.convergence_threshold, cfg.convergence_window);
  if (long_retrain) result.final_accuracy = long_retrain(result.best);
  result.agent = std::move(params);
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace bitsearch

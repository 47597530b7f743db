#pragma once

#include "bitsearch/accuracy_oracle.hpp"
#include "bitsearch/cost_model.hpp"
#include "bitsearch/dataset.hpp"
#include "bitsearch/environment.hpp"
#include "bitsearch/network.hpp"
#include "bitsearch/ppo.hpp"
#include "bitsearch/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bitsearch::runner {

inline constexpr int kConfigSchemaVersion = 1;

enum class DatasetSource { idx, synthetic };

struct DatasetConfig {
  DatasetSource source = DatasetSource::synthetic;
  // idx
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  // synthetic
  SynthKind generator = SynthKind::glyphs;
  SynthOptions synth;
  std::size_t train_size = 4000;
  std::size_t test_size = 2000;
  /// Items held out for validation (taken from the end of the train source).
  std::size_t validation_size = 1000;
};

/// Training budgets for the three phases.
struct RetrainConfig {
  TrainConfig train;
  std::size_t train_subsample = 0;  // 0 = whole split
  std::size_t eval_subsample = 0;
};

enum class RewardModeChoice { automatic, per_step, deferred };

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  Architecture network;
  DatasetConfig dataset;
  std::vector<int> bitwidth_set{2, 3, 4, 5, 6, 7, 8};
  CostParams cost;
  RewardParams reward;
  PPOConfig ppo;
  bool ppo_seed_set = false;  // otherwise derived from the root seed
  TrainConfig baseline{.learning_rate = 0.05, .epochs = 10, .batch_size = 32};
  RetrainConfig short_retrain{TrainConfig{.learning_rate = 0.02, .epochs = 1, .batch_size = 32}, 1000, 1000};
  RetrainConfig long_retrain{TrainConfig{.learning_rate = 0.02, .epochs = 10, .batch_size = 32}, 0, 0};
  ActionMode action_mode = ActionMode::flexible;
  RewardModeChoice reward_mode = RewardModeChoice::automatic;
  std::size_t deferred_layer_threshold = 6;  // automatic: per-step up to this many layers
  std::size_t enumeration_cap = 10000;
  double eps_quant = 0.05;
  double eps_acc = 0.005;
  bool recurrent_agent = true;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "run";
  /// Directory relative paths in the file resolve against.
  std::filesystem::path base_dir = ".";

  RewardMode resolved_reward_mode() const;
  std::uint64_t agent_seed() const;
  EnvConfig env_config() const;
  SearchConfig search_config() const;
  FinetuneBudget short_budget() const;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses the JSON config schema: applies defaults, rejects unknown keys,
/// validates. Parse errors carry the line number.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

/// Serializes every field (defaults included); parse_config(emit_config(c))
/// reproduces c.
std::string emit_config(const RunConfig& cfg);

}  // namespace bitsearch::runner

#pragma once

#include "bitsearch/dataset.hpp"
#include "bitsearch/environment.hpp"
#include "bitsearch/network.hpp"
#include "bitsearch/pareto.hpp"
#include "bitsearch/runner/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bitsearch::runner {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 2,
  kExitRuntimeError = 3,
  kExitValidationFail = 4,
};

/// Command-line overrides applied on top of a loaded config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<ActionMode> action_mode;
  std::optional<RewardFormulation> reward;
  std::optional<double> clip_epsilon;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

struct DataSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Loads or generates the three splits. Throws ConfigError for unresolvable
/// paths.
DataSplits load_data(const RunConfig& cfg);

// Output file names inside the run directory.
inline constexpr const char* kWeightsFile = "weights.qfwt";
inline constexpr const char* kBaselineFile = "baseline.json";
inline constexpr const char* kEpisodesFile = "episodes.csv";
inline constexpr const char* kPolicyFile = "policy_evolution.csv";
inline constexpr const char* kSearchReportFile = "search_report.json";
inline constexpr const char* kAgentFile = "agent.qfag";
inline constexpr const char* kOracleFile = "oracle.csv";
inline constexpr const char* kFrontierFile = "frontier.csv";
inline constexpr const char* kValidationFile = "validation.json";

struct BaselineOutcome {
  NetworkSpec spec;  // with weight statistics and full-precision accuracy
  NetworkWeights weights;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<double> loss_curve;
};

/// Trains the full-precision network and writes the weight checkpoint,
/// baseline.json, and a manifest.
BaselineOutcome cmd_train_baseline(const RunConfig& cfg);

/// Reads the checkpoint and baseline record written by cmd_train_baseline.
BaselineOutcome load_baseline(const RunConfig& cfg);

struct SearchReport {
  QuantAssignment bits;
  double average_bitwidth = 0.0;
  double state_of_quantization = 1.0;
  double estimated_relative_accuracy = 1.0;  // short-retrain estimate
  double best_reward = 0.0;
  int best_episode = -1;
  QuantAssignment greedy;
  double full_precision_test_accuracy = 0.0;
  double final_test_accuracy = 0.0;  // after the long retrain
  double accuracy_loss = 0.0;        // full precision minus final, absolute
  double speedup_compute = 1.0;
  double speedup_full = 1.0;
  double energy_reduction = 1.0;
  std::optional<int> episodes_to_threshold;
  std::size_t finetunes = 0;
};

struct SearchOutcome {
  SearchResult result;
  SearchReport report;
};

/// Runs the agent against short-retrain accuracy estimates, long-retrains the
/// best assignment, and writes the episode CSV, policy-evolution CSV, report,
/// and agent checkpoint.
SearchOutcome cmd_search(const RunConfig& cfg);

std::string report_to_json(const SearchReport& r);
SearchReport report_from_json(const std::string& text);

/// Enumerates the whole assignment space, writing oracle.csv and frontier.csv.
std::vector<ParetoPoint> cmd_enumerate(const RunConfig& cfg, unsigned jobs = 1);

/// Checks the search report in `search_dir` (default: the output dir)
/// against the frontier of `oracle_csv` (default: output dir oracle.csv).
ValidationReport cmd_validate(const RunConfig& cfg, const std::optional<std::filesystem::path>& search_dir = {},
                              const std::optional<std::filesystem::path>& oracle_csv = {});

inline constexpr std::size_t kMovingAverageWindow = 50;

/// Plot-data bundle from one or more run directories: reward_curve.csv
/// (first run), action_probs.csv (first run), reward_comparison.csv (all).
void cmd_report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir);

}  // namespace bitsearch::runner

#include "bitsearch/error.hpp"
#include "bitsearch/runner/commands.hpp"
#include "bitsearch/runner/csv.hpp"
#include "bitsearch/runner/manifest.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace bitsearch;
using namespace bitsearch::runner;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("bitsearch-commands-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig blobs_config(const fs::path& out, int episodes) {
  RunConfig c = parse_config(R"({
    "seed": 11,
    "network": {"input": [4], "layers": [{"kind": "dense", "units": 16}, {"kind": "dense", "units": 3}]},
    "dataset": {"source": "synthetic", "generator": "blobs", "classes": 3, "dims": 4,
                "train_size": 400, "test_size": 200, "validation_size": 100},
    "bitwidth_set": [2, 4, 8],
    "baseline_training": {"learning_rate": 0.05, "epochs": 10, "batch_size": 16},
    "short_retrain": {"epochs": 1, "train_subsample": 100, "eval_subsample": 100},
    "long_retrain": {"epochs": 2},
    "agent": {"recurrent": true}
  })");
  c.output_dir = out;
  c.ppo.episodes = episodes;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST(TrainBaseline, BlobsReachHighAccuracyDeterministically) {
  const fs::path dir = scratch("baseline");
  const RunConfig cfg = blobs_config(dir, 0);
  const BaselineOutcome first = cmd_train_baseline(cfg);
  EXPECT_GE(first.validation_accuracy, 0.95);
  EXPECT_GE(first.test_accuracy, 0.95);
  ASSERT_TRUE(fs::exists(dir / kWeightsFile));
  ASSERT_TRUE(fs::exists(dir / "manifest-train-baseline.json"));
  EXPECT_NE(slurp(dir / "manifest-train-baseline.json").find("full_precision_accuracy"), std::string::npos);
  const std::string digest = file_sha256(dir / kWeightsFile);
  cmd_train_baseline(cfg);
  EXPECT_EQ(file_sha256(dir / kWeightsFile), digest);

  const BaselineOutcome loaded = load_baseline(cfg);
  EXPECT_EQ(loaded.spec.full_precision_accuracy, first.spec.full_precision_accuracy);
  EXPECT_EQ(loaded.test_accuracy, first.test_accuracy);
}

TEST(TrainBaseline, MissingDatasetPathIsConfigError) {
  const fs::path dir = scratch("missing");
  RunConfig cfg = blobs_config(dir, 0);
  cfg.dataset.source = DatasetSource::idx;
  cfg.dataset.train_images = dir / "nope-images.idx";
  cfg.dataset.train_labels = dir / "nope-labels.idx";
  cfg.dataset.test_images = dir / "nope-images.idx";
  cfg.dataset.test_labels = dir / "nope-labels.idx";
  try {
    cmd_train_baseline(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope-images.idx"), std::string::npos);
  }
}

TEST(Search, NeedsABaselineCheckpoint) {
  const fs::path dir = scratch("nocheckpoint");
  EXPECT_THROW(cmd_search(blobs_config(dir, 1)), CheckpointError);
}

TEST(Search, ZeroEpisodesReportsUniformEight) {
  const fs::path dir = scratch("zero");
  const RunConfig cfg = blobs_config(dir, 0);
  cmd_train_baseline(cfg);
  const SearchOutcome out = cmd_search(cfg);
  EXPECT_EQ(out.report.bits, QuantAssignment::uniform(2, 8));
  EXPECT_EQ(out.report.speedup_compute, 1.0);
  EXPECT_EQ(out.report.speedup_full, 1.0);
  EXPECT_EQ(out.report.average_bitwidth, 8.0);
  const SearchReport back = report_from_json(slurp(dir / kSearchReportFile));
  EXPECT_EQ(back.bits, out.report.bits);
  EXPECT_EQ(back.final_test_accuracy, out.report.final_test_accuracy);
}

TEST(Search, SameSeedGivesIdenticalOutputs) {
  const fs::path a = scratch("det-a");
  const fs::path b = scratch("det-b");
  for (const auto& dir : {a, b}) {
    const RunConfig cfg = blobs_config(dir, 8);
    cmd_train_baseline(cfg);
    const SearchOutcome out = cmd_search(cfg);
    EXPECT_DOUBLE_EQ(out.report.average_bitwidth, out.report.bits.average_bits());
  }
  for (const char* f : {kWeightsFile, kEpisodesFile, kPolicyFile, kAgentFile, kSearchReportFile})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const CsvTable episodes = read_csv(a / kEpisodesFile);
  EXPECT_EQ(episodes.rows.size(), 8u);
  EXPECT_EQ(read_csv(a / kPolicyFile).rows.size(), 8u * 2u * 3u);
}

TEST(Enumerate, WritesFullSpaceAndValidatesFrontierMember) {
  const fs::path dir = scratch("enumerate");
  const RunConfig cfg = blobs_config(dir, 0);
  cmd_train_baseline(cfg);
  const auto points = cmd_enumerate(cfg);
  EXPECT_EQ(points.size(), 9u);
  EXPECT_EQ(read_csv(dir / kOracleFile).rows.size(), 9u);
  const auto frontier = points_from_table(read_csv(dir / kFrontierFile));
  ASSERT_FALSE(frontier.empty());

  // Uniform 8 bits is dominated as soon as any cheaper point is as accurate.
  cmd_search(cfg);
  cmd_validate(cfg);
  bool dominated = false;
  for (const auto& p : points)
    dominated = dominated || (p.quant < 1.0 && p.acc >= points.back().acc);
  RunConfig strict = cfg;
  strict.eps_quant = 0.0;
  strict.eps_acc = 0.0;
  EXPECT_EQ(cmd_validate(strict).pass, !dominated);
  EXPECT_TRUE(fs::exists(dir / kValidationFile));
}

TEST(Enumerate, CapExceededIsReported) {
  const fs::path dir = scratch("cap");
  RunConfig cfg = blobs_config(dir, 0);
  cfg.enumeration_cap = 5;
  EXPECT_THROW(cmd_enumerate(cfg), SpaceTooLargeError);
}

TEST(Report, MovingAverageAndSingleSeries) {
  const fs::path run = scratch("report-run");
  const fs::path out = scratch("report-out");
  const std::vector<int> set{2, 8};
  CsvTable episodes;
  episodes.header = episode_csv_header(1, set);
  CsvTable policy;
  policy.header = {"episode", "layer", "bits", "probability"};
  for (int i = 0; i < 200; ++i) {
    EpisodeLog log;
    log.episode = i;
    log.mean_reward = i;
    log.total_reward = i;
    log.bits = QuantAssignment({2});
    log.probs = {{0.5, 0.5}};
    episodes.rows.push_back(episode_csv_row(log, set));
    for (auto& row : policy_csv_rows(log, set)) policy.rows.push_back(row);
  }
  write_csv(run / kEpisodesFile, episodes);
  write_csv(run / kPolicyFile, policy);

  cmd_report({run}, out);
  const CsvTable curve = read_csv(out / "reward_curve.csv");
  ASSERT_EQ(curve.rows.size(), 200u);
  const std::size_t ma = curve.column("moving_average");
  for (std::size_t i = 0; i < 49; ++i) EXPECT_TRUE(curve.rows[i][ma].empty()) << i;
  EXPECT_EQ(std::stod(curve.rows[49][ma]), 24.5);
  EXPECT_EQ(std::stod(curve.rows[199][ma]), 174.5);

  const CsvTable cmp = read_csv(out / "reward_comparison.csv");
  const std::size_t series = cmp.column("series");
  for (const auto& row : cmp.rows) EXPECT_EQ(row[series], cmp.rows.front()[series]);
  EXPECT_EQ(cmp.rows.size(), 200u);
  EXPECT_EQ(read_csv(out / "action_probs.csv").rows.size(), 400u);
}

TEST(Report, MalformedRowNamesTheLine) {
  const fs::path run = scratch("report-bad");
  write_file(run / kEpisodesFile, "episode,mean_reward\n0,1\n1,2,3\n");
  try {
    read_csv(run / kEpisodesFile);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Csv, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 123456789.0}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(0.5), "0.5");
}

TEST(Manifest, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Overrides, ApplyAndValidate) {
  RunConfig cfg = blobs_config("x", 0);
  Overrides o;
  o.seed = 42;
  o.clip_epsilon = 0.3;
  o.action_mode = ActionMode::restricted;
  apply_overrides(cfg, o);
  EXPECT_EQ(cfg.seed, 42u);
  EXPECT_EQ(cfg.ppo.clip_epsilon, 0.3);
  EXPECT_EQ(cfg.action_mode, ActionMode::restricted);
  o.clip_epsilon = -1.0;
  EXPECT_THROW(apply_overrides(cfg, o), ConfigError);
}

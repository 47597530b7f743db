#include "bitsearch/runner/commands.hpp"

#include "bitsearch/accuracy_oracle.hpp"
#include "bitsearch/agent.hpp"
#include "bitsearch/cost_model.hpp"
#include "bitsearch/error.hpp"
#include "bitsearch/rng.hpp"
#include "bitsearch/runner/csv.hpp"
#include "bitsearch/runner/manifest.hpp"
#include "bitsearch/training.hpp"
#include "bitsearch/weights_io.hpp"

#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace bitsearch::runner {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.action_mode) cfg.action_mode = *o.action_mode;
  if (o.reward) cfg.reward.formulation = *o.reward;
  if (o.clip_epsilon) cfg.ppo.clip_epsilon = *o.clip_epsilon;
  cfg.validate();
}

namespace {

fs::path resolve(const RunConfig& cfg, const fs::path& p) { return p.is_absolute() ? p : cfg.base_dir / p; }

fs::path existing(const RunConfig& cfg, const fs::path& p, const char* field) {
  const fs::path full = resolve(cfg, p);
  if (!fs::exists(full)) throw ConfigError(fmt::format("config field 'dataset.{}': path '{}' not found", field, full.string()));
  return full;
}

fs::path run_dir(const RunConfig& cfg) {
  const fs::path dir = resolve(cfg, cfg.output_dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

RunManifest start_manifest(const RunConfig& cfg, const std::string& command) {
  RunManifest m;
  m.command = command;
  m.config_hash = sha256_hex(emit_config(cfg));
  m.seed = cfg.seed;
  m.started_at = utc_now();
  return m;
}

void finish_manifest(const fs::path& dir, RunManifest& m) {
  m.finished_at = utc_now();
  write_manifest(dir, m);
}

std::string num(double v) { return format_number(v); }

FinetuneOracle make_oracle(const RunConfig& cfg, const BaselineOutcome& base, const DataSplits& data) {
  return FinetuneOracle(base.spec, base.weights, data.train, data.validation, cfg.short_budget(),
                        child_seed(cfg.seed, "env"));
}

}  // namespace

DataSplits load_data(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  DataSplits s;
  if (d.source == DatasetSource::idx) {
    const auto ti = existing(cfg, d.train_images, "train_images");
    const auto tl = existing(cfg, d.train_labels, "train_labels");
    const auto si = existing(cfg, d.test_images, "test_images");
    const auto sl = existing(cfg, d.test_labels, "test_labels");
    Dataset full = load_idx(ti, tl, Split::train);
    if (d.validation_size >= full.size()) {
      throw ConfigError(fmt::format("config field 'dataset.validation_size': {} leaves no training items", d.validation_size));
    }
    const std::size_t n_train = full.size() - d.validation_size;
    s.train = full.slice(0, n_train).with_split(Split::train);
    s.validation = full.slice(n_train, d.validation_size).with_split(Split::validation);
    s.test = load_idx(si, sl, Split::test);
  } else {
    const std::uint64_t root = child_seed(cfg.seed, "data");
    s.train = synth_dataset(d.generator, d.train_size, child_seed(root, "train"), d.synth, Split::train);
    s.validation = synth_dataset(d.generator, d.validation_size, child_seed(root, "validation"), d.synth, Split::validation);
    s.test = synth_dataset(d.generator, d.test_size, child_seed(root, "test"), d.synth, Split::test);
  }
  return s;
}

BaselineOutcome cmd_train_baseline(const RunConfig& cfg) {
  RunManifest manifest = start_manifest(cfg, "train-baseline");
  const DataSplits data = load_data(cfg);
  BaselineOutcome out;
  out.spec = build_spec(cfg.network);
  Rng init(child_seed(cfg.seed, "init"));
  TrainConfig tc = cfg.baseline;
  tc.seed = child_seed(cfg.seed, "baseline");
  TrainResult trained = train(out.spec, init_weights(out.spec, init), data.train, tc);
  out.weights = std::move(trained.weights);
  out.loss_curve = std::move(trained.loss_curve);
  record_weight_stats(out.spec, out.weights);
  out.validation_accuracy = evaluate_accuracy(out.spec, out.weights, data.validation);
  out.test_accuracy = evaluate_accuracy(out.spec, out.weights, data.test);
  out.spec.full_precision_accuracy = out.validation_accuracy;

  const fs::path dir = run_dir(cfg);
  save_weights(out.weights, dir / kWeightsFile);
  json b;
  b["validation_accuracy"] = out.validation_accuracy;
  b["test_accuracy"] = out.test_accuracy;
  b["loss_curve"] = out.loss_curve;
  json layers = json::array();
  for (const auto& l : out.spec.layers) {
    layers.push_back({{"kind", to_string(l.kind)}, {"n_weights", l.n_weights}, {"n_macc", l.n_macc},
                      {"weight_std", l.weight_std}});
  }
  b["layers"] = layers;
  write_text(dir / kBaselineFile, b.dump(2) + "\n");

  manifest.add_output(dir, kWeightsFile);
  manifest.add_output(dir, kBaselineFile);
  manifest.results = {{"full_precision_accuracy", num(out.validation_accuracy)},
                      {"test_accuracy", num(out.test_accuracy)}};
  finish_manifest(dir, manifest);
  return out;
}

BaselineOutcome load_baseline(const RunConfig& cfg) {
  const fs::path dir = resolve(cfg, cfg.output_dir);
  const fs::path weights_path = dir / kWeightsFile;
  const fs::path baseline_path = dir / kBaselineFile;
  if (!fs::exists(weights_path) || !fs::exists(baseline_path)) {
    throw CheckpointError(fmt::format("no baseline checkpoint in '{}'; run train-baseline first", dir.string()));
  }
  BaselineOutcome out;
  out.spec = build_spec(cfg.network);
  out.weights = load_weights(weights_path);
  check_weights(out.spec, out.weights);
  record_weight_stats(out.spec, out.weights);
  json b;
  try {
    b = json::parse(read_text(baseline_path));
    out.validation_accuracy = b.at("validation_accuracy").get<double>();
    out.test_accuracy = b.at("test_accuracy").get<double>();
    out.loss_curve = b.at("loss_curve").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw CheckpointError(fmt::format("'{}' is malformed: {}", baseline_path.string(), e.what()));
  }
  out.spec.full_precision_accuracy = out.validation_accuracy;
  return out;
}

std::string report_to_json(const SearchReport& r) {
  json j;
  j["bits"] = r.bits.bits;
  j["assignment"] = r.bits.to_string();
  j["average_bitwidth"] = r.average_bitwidth;
  j["state_of_quantization"] = r.state_of_quantization;
  j["estimated_relative_accuracy"] = r.estimated_relative_accuracy;
  j["best_reward"] = r.best_reward;
  j["best_episode"] = r.best_episode;
  j["greedy"] = r.greedy.bits;
  j["full_precision_test_accuracy"] = r.full_precision_test_accuracy;
  j["final_test_accuracy"] = r.final_test_accuracy;
  j["accuracy_loss"] = r.accuracy_loss;
  j["speedup_compute"] = r.speedup_compute;
  j["speedup_full"] = r.speedup_full;
  j["energy_reduction"] = r.energy_reduction;
  j["episodes_to_threshold"] = r.episodes_to_threshold ? json(*r.episodes_to_threshold) : json(nullptr);
  j["finetunes"] = r.finetunes;
  return j.dump(2) + "\n";
}

SearchReport report_from_json(const std::string& text) {
  SearchReport r;
  try {
    const json j = json::parse(text);
    r.bits = QuantAssignment(j.at("bits").get<std::vector<int>>());
    r.average_bitwidth = j.at("average_bitwidth").get<double>();
    r.state_of_quantization = j.at("state_of_quantization").get<double>();
    r.estimated_relative_accuracy = j.at("estimated_relative_accuracy").get<double>();
    r.best_reward = j.at("best_reward").get<double>();
    r.best_episode = j.at("best_episode").get<int>();
    r.greedy = QuantAssignment(j.at("greedy").get<std::vector<int>>());
    r.full_precision_test_accuracy = j.at("full_precision_test_accuracy").get<double>();
    r.final_test_accuracy = j.at("final_test_accuracy").get<double>();
    r.accuracy_loss = j.at("accuracy_loss").get<double>();
    r.speedup_compute = j.at("speedup_compute").get<double>();
    r.speedup_full = j.at("speedup_full").get<double>();
    r.energy_reduction = j.at("energy_reduction").get<double>();
    if (!j.at("episodes_to_threshold").is_null()) r.episodes_to_threshold = j["episodes_to_threshold"].get<int>();
    r.finetunes = j.at("finetunes").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(fmt::format("malformed search report: {}", e.what()));
  }
  return r;
}

SearchOutcome cmd_search(const RunConfig& cfg) {
  RunManifest manifest = start_manifest(cfg, "search");
  const BaselineOutcome base = load_baseline(cfg);
  const DataSplits data = load_data(cfg);
  FinetuneOracle oracle = make_oracle(cfg, base, data);

  TrainConfig long_cfg = cfg.long_retrain.train;
  long_cfg.seed = child_seed(cfg.seed, "long-retrain");
  RetrainFn long_retrain = [&](const QuantAssignment& a) {
    TrainResult r = train(base.spec, base.weights, data.train, long_cfg, a);
    return evaluate_accuracy(base.spec, r.weights, data.test, a);
  };

  const fs::path dir = run_dir(cfg);
  const auto& set = cfg.bitwidth_set;
  CsvStream episodes(dir / kEpisodesFile, episode_csv_header(base.spec.layer_count(), set));
  CsvStream policy(dir / kPolicyFile, {"episode", "layer", "bits", "probability"});
  const EpisodeCallback log_episode = [&](const EpisodeLog& log) {
    episodes.write(episode_csv_row(log, set));
    for (const auto& row : policy_csv_rows(log, set)) policy.write(row);
  };

  SearchOutcome out;
  out.result = run_search(base.spec, oracle.relative_fn(), cfg.search_config(), long_retrain, log_episode);
  const SearchResult& res = out.result;

  SearchReport& rep = out.report;
  rep.bits = res.best;
  rep.average_bitwidth = res.best.average_bits();
  rep.state_of_quantization = state_of_quantization(base.spec, res.best, cfg.cost);
  rep.estimated_relative_accuracy = res.best_acc;
  rep.best_reward = res.best_reward;
  rep.best_episode = res.best_episode;
  rep.greedy = res.greedy;
  rep.full_precision_test_accuracy = base.test_accuracy;
  rep.final_test_accuracy = res.final_accuracy.value_or(0.0);
  rep.accuracy_loss = base.test_accuracy - rep.final_test_accuracy;
  rep.speedup_compute = speedup_estimate(base.spec, res.best, cfg.cost, SpeedupMode::compute_only);
  rep.speedup_full = speedup_estimate(base.spec, res.best, cfg.cost, SpeedupMode::full_cost);
  rep.energy_reduction = energy_estimate(base.spec, res.best, cfg.cost);
  rep.episodes_to_threshold = res.episodes_to_threshold;
  rep.finetunes = oracle.finetune_count();

  write_text(dir / kSearchReportFile, report_to_json(rep));
  manifest.add_output(dir, kEpisodesFile);
  manifest.add_output(dir, kPolicyFile);
  manifest.add_output(dir, kSearchReportFile);
  if (res.agent) {
    save_checkpoint(*res.agent, dir / kAgentFile);
    manifest.add_output(dir, kAgentFile);
  }
  manifest.results = {{"assignment", json(rep.bits.to_string()).dump()},
                      {"average_bitwidth", num(rep.average_bitwidth)},
                      {"accuracy_loss", num(rep.accuracy_loss)},
                      {"elapsed_seconds", num(res.elapsed_seconds)}};
  finish_manifest(dir, manifest);
  return out;
}

std::vector<ParetoPoint> cmd_enumerate(const RunConfig& cfg, unsigned jobs) {
  RunManifest manifest = start_manifest(cfg, "enumerate");
  const std::size_t n = space_size(cfg.network.layers.size(), cfg.bitwidth_set.size(), cfg.enumeration_cap);
  if (n > cfg.enumeration_cap) {
    throw SpaceTooLargeError(fmt::format("{} bitwidths over {} layers exceeds the enumeration cap of {}",
                                         cfg.bitwidth_set.size(), cfg.network.layers.size(), cfg.enumeration_cap));
  }
  const BaselineOutcome base = load_baseline(cfg);
  const DataSplits data = load_data(cfg);
  FinetuneOracle oracle = make_oracle(cfg, base, data);
  EnumerateOptions opts;
  opts.cap = cfg.enumeration_cap;
  opts.jobs = std::max(1u, jobs);
  std::vector<ParetoPoint> points = enumerate_space(base.spec, cfg.bitwidth_set, cfg.cost, oracle.relative_fn(), opts);

  const fs::path dir = run_dir(cfg);
  write_csv(dir / kOracleFile, points_table(points));
  write_csv(dir / kFrontierFile, points_table(pareto_frontier(points)));
  manifest.add_output(dir, kOracleFile);
  manifest.add_output(dir, kFrontierFile);
  manifest.results = {{"points", std::to_string(points.size())}};
  finish_manifest(dir, manifest);
  return points;
}

ValidationReport cmd_validate(const RunConfig& cfg, const std::optional<fs::path>& search_dir,
                              const std::optional<fs::path>& oracle_csv) {
  const fs::path dir = run_dir(cfg);
  const fs::path report_path = (search_dir ? resolve(cfg, *search_dir) : dir) / kSearchReportFile;
  const fs::path oracle_path = oracle_csv ? resolve(cfg, *oracle_csv) : dir / kOracleFile;
  if (!fs::exists(report_path)) throw Error(fmt::format("missing search report '{}'", report_path.string()));
  if (!fs::exists(oracle_path)) throw Error(fmt::format("missing oracle CSV '{}'", oracle_path.string()));

  RunManifest manifest = start_manifest(cfg, "validate");
  const SearchReport rep = report_from_json(read_text(report_path));
  ParetoPoint solution{rep.bits, rep.state_of_quantization, rep.estimated_relative_accuracy};
  const auto frontier = pareto_frontier(points_from_table(read_csv(oracle_path)));
  ValidationReport v = validate_solution(solution, frontier, cfg.eps_quant, cfg.eps_acc);

  json j;
  j["result"] = v.pass ? "PASS" : "FAIL";
  j["solution"] = {{"assignment", v.solution.assignment.to_string()}, {"quant", v.solution.quant}, {"acc", v.solution.acc}};
  j["nearest"] = {{"assignment", v.nearest.assignment.to_string()}, {"quant", v.nearest.quant}, {"acc", v.nearest.acc}};
  j["quant_gap"] = v.quant_gap;
  j["acc_gap"] = v.acc_gap;
  j["eps_quant"] = v.eps_quant;
  j["eps_acc"] = v.eps_acc;
  j["frontier_size"] = frontier.size();
  write_text(dir / kValidationFile, j.dump(2) + "\n");
  manifest.add_output(dir, kValidationFile);
  manifest.results = {{"pass", v.pass ? "true" : "false"}};
  finish_manifest(dir, manifest);
  return v;
}

namespace {

struct RewardSeries {
  std::vector<std::string> episodes;
  std::vector<double> rewards;
};

RewardSeries read_rewards(const fs::path& run) {
  const fs::path path = run / kEpisodesFile;
  if (!fs::exists(path)) throw Error(fmt::format("missing episode log '{}'", path.string()));
  const CsvTable t = read_csv(path);
  const std::size_t ce = t.column("episode");
  const std::size_t cr = t.column("mean_reward");
  RewardSeries s;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(t.rows[i][cr], &used);
      if (used != t.rows[i][cr].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error(fmt::format("{}: malformed row at line {}: bad mean_reward '{}'", path.string(), i + 2, t.rows[i][cr]));
    }
    s.episodes.push_back(t.rows[i][ce]);
    s.rewards.push_back(v);
  }
  return s;
}

// Trailing mean over kMovingAverageWindow rows; empty until the window fills.
std::vector<std::string> moving_average(const std::vector<double>& v) {
  std::vector<std::string> out(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= kMovingAverageWindow) sum -= v[i - kMovingAverageWindow];
    if (i + 1 >= kMovingAverageWindow) out[i] = format_number(sum / static_cast<double>(kMovingAverageWindow));
  }
  return out;
}

}  // namespace

void cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw Error("report needs at least one run directory");
  fs::create_directories(out_dir);

  CsvTable comparison;
  comparison.header = {"series", "episode", "mean_reward", "moving_average"};
  for (std::size_t r = 0; r < run_dirs.size(); ++r) {
    const RewardSeries s = read_rewards(run_dirs[r]);
    const auto ma = moving_average(s.rewards);
    std::string label = run_dirs[r].filename().string();
    if (label.empty()) label = run_dirs[r].parent_path().filename().string();
    if (r == 0) {
      CsvTable curve;
      curve.header = {"episode", "mean_reward", "moving_average"};
      for (std::size_t i = 0; i < s.rewards.size(); ++i) curve.rows.push_back({s.episodes[i], format_number(s.rewards[i]), ma[i]});
      write_csv(out_dir / "reward_curve.csv", curve);
    }
    for (std::size_t i = 0; i < s.rewards.size(); ++i) {
      comparison.rows.push_back({label, s.episodes[i], format_number(s.rewards[i]), ma[i]});
    }
  }
  write_csv(out_dir / "reward_comparison.csv", comparison);

  const fs::path policy = run_dirs.front() / kPolicyFile;
  if (!fs::exists(policy)) throw Error(fmt::format("missing policy log '{}'", policy.string()));
  CsvTable probs = read_csv(policy);
  for (const char* col : {"episode", "layer", "bits", "probability"}) probs.column(col);
  write_csv(out_dir / "action_probs.csv", probs);
}

}  // namespace bitsearch::runner

#include "bitsearch/error.hpp"
#include "bitsearch/runner/commands.hpp"
#include "bitsearch/runner/config.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <filesystem>

namespace fs = std::filesystem;
using namespace bitsearch;
using namespace bitsearch::runner;

namespace {

void print_report(const SearchReport& r) {
  fmt::print("assignment            {}\n", r.bits.to_string());
  fmt::print("average bitwidth      {:.4f}\n", r.average_bitwidth);
  fmt::print("state of quantization {:.4f}\n", r.state_of_quantization);
  fmt::print("estimated rel. acc.   {:.4f}\n", r.estimated_relative_accuracy);
  fmt::print("full precision acc.   {:.4f}\n", r.full_precision_test_accuracy);
  fmt::print("final acc.            {:.4f}\n", r.final_test_accuracy);
  fmt::print("accuracy loss         {:+.4f}\n", r.accuracy_loss);
  fmt::print("speedup (compute)     {:.3f}x\n", r.speedup_compute);
  fmt::print("speedup (full)        {:.3f}x\n", r.speedup_full);
  fmt::print("energy reduction      {:.3f}x\n", r.energy_reduction);
  fmt::print("finetunes             {}\n", r.finetunes);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-layer weight bitwidth search with a PPO agent"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> action_mode;
  std::optional<std::string> reward;
  std::optional<double> clip_epsilon;
  unsigned jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Root seed");
    sub->add_option("--out", out, "Output directory");
    sub->add_option("--action-mode", action_mode, "flexible or restricted")
        ->check(CLI::IsMember({"flexible", "restricted"}));
    sub->add_option("--reward", reward, "shaped, ratio, or difference")
        ->check(CLI::IsMember({"shaped", "ratio", "difference"}));
    sub->add_option("--clip-epsilon", clip_epsilon, "PPO clipping parameter");
  };

  auto* baseline = app.add_subcommand("train-baseline", "Train the full-precision network");
  add_common(baseline);
  auto* search = app.add_subcommand("search", "Search per-layer bitwidths");
  add_common(search);
  auto* enumerate = app.add_subcommand("enumerate", "Evaluate every assignment and extract the frontier");
  add_common(enumerate);
  enumerate->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  auto* validate = app.add_subcommand("validate", "Check a search result against the frontier");
  add_common(validate);
  std::optional<std::string> search_dir, oracle_csv;
  validate->add_option("--search-dir", search_dir, "Directory holding search_report.json");
  validate->add_option("--oracle", oracle_csv, "Oracle CSV from enumerate");
  auto* report = app.add_subcommand("report", "Emit plot-data CSVs from run directories");
  std::vector<std::string> runs;
  std::string report_out = "report";
  report->add_option("runs", runs, "Run directories")->required();
  report->add_option("--out", report_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (report->parsed()) {
      std::vector<fs::path> dirs(runs.begin(), runs.end());
      cmd_report(dirs, report_out);
      fmt::print("wrote plot data to {}\n", report_out);
      return kExitOk;
    }

    RunConfig cfg = load_config(config_path);
    Overrides o;
    o.seed = seed;
    if (out) o.out = fs::absolute(*out);
    if (action_mode) o.action_mode = parse_action_mode(*action_mode);
    if (reward) o.reward = parse_reward_formulation(*reward);
    o.clip_epsilon = clip_epsilon;
    apply_overrides(cfg, o);

    if (baseline->parsed()) {
      const auto b = cmd_train_baseline(cfg);
      fmt::print("full precision accuracy: validation {:.4f}, test {:.4f}\n", b.validation_accuracy,
                 b.test_accuracy);
    } else if (search->parsed()) {
      const auto s = cmd_search(cfg);
      print_report(s.report);
    } else if (enumerate->parsed()) {
      const auto points = cmd_enumerate(cfg, jobs);
      fmt::print("evaluated {} assignments\n", points.size());
    } else if (validate->parsed()) {
      std::optional<fs::path> sd, oc;
      if (search_dir) sd = fs::absolute(*search_dir);
      if (oracle_csv) oc = fs::absolute(*oracle_csv);
      const auto v = cmd_validate(cfg, sd, oc);
      fmt::print("{}: solution {} (quant {:.4f}, acc {:.4f}); nearest frontier point {} (quant {:.4f}, acc {:.4f})\n",
                 v.pass ? "PASS" : "FAIL", v.solution.assignment.to_string(), v.solution.quant, v.solution.acc,
                 v.nearest.assignment.to_string(), v.nearest.quant, v.nearest.acc);
      return v.pass ? kExitOk : kExitValidationFail;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfigError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitRuntimeError;
  }
}

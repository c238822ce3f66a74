// dora_cli: batch runner and report generator.
//
//   dora_cli bandit run  --config FILE [--agent A --runs N --seed S --backend B --out DIR --workers W]
//   dora_cli keymaze run --config FILE [same flags]
//   dora_cli report --in DIR --out DIR
//
// Exit codes: 0 ok, 1 config error, 2 backend error, 3 partial batch.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dora/harness/config.hpp"
#include "dora/harness/report.hpp"
#include "dora/harness/runner.hpp"

namespace {

using namespace dora::harness;

struct RunFlags {
  std::string config;
  std::optional<std::string> agent;
  std::optional<int> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<std::string> out;
  std::optional<int> workers;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "experiment JSON file");
  cmd->add_option("--agent", f.agent, "ucb|ts|greedy|eps_greedy|llm_temp|dora_scheduled|dora_auto");
  cmd->add_option("--runs", f.runs, "number of seeded runs");
  cmd->add_option("--seed", f.seed, "master seed; run i uses seed + i");
  cmd->add_option("--backend", f.backend, "mock:<script.json> or remote");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--workers", f.workers, "worker threads (0: all cores)");
}

ExperimentConfig resolve(const RunFlags& f, Suite suite) {
  ExperimentConfig cfg;
  cfg.suite = suite;
  if (!f.config.empty()) cfg = load_config(f.config, cfg);
  if (cfg.suite != suite) throw dora::ConfigError(std::string("config is for the ") + to_string(cfg.suite) + " suite");
  if (f.agent) cfg.agent = *f.agent;
  if (f.runs) cfg.runs = *f.runs;
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.backend) cfg.backend = *f.backend;
  if (f.out) cfg.output_dir = *f.out;
  if (f.workers) cfg.workers = *f.workers;
  return cfg;
}

void print_files(const ReportFiles& files, const std::string& only) {
  if (auto it = files.find(only); it != files.end()) std::cout << it->second;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DORA explorer experiments"};
  app.require_subcommand(1);

  RunFlags bandit_flags, keymaze_flags;
  auto* bandit = app.add_subcommand("bandit", "multi-armed bandit suite");
  bandit->require_subcommand(1);
  auto* bandit_run = bandit->add_subcommand("run", "run a bandit batch");
  add_run_flags(bandit_run, bandit_flags);

  auto* keymaze = app.add_subcommand("keymaze", "text-world suite");
  keymaze->require_subcommand(1);
  auto* keymaze_run = keymaze->add_subcommand("run", "run a KeyMaze batch");
  add_run_flags(keymaze_run, keymaze_flags);

  std::string report_in, report_out;
  auto* report = app.add_subcommand("report", "render CSV tables from run artifacts");
  report->add_option("--in", report_in, "directory with run_*.jsonl")->required();
  report->add_option("--out", report_out, "destination directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (report->parsed()) {
      const auto files = write_report(report_in, report_out);
      for (const auto& [name, content] : files) std::cerr << "wrote " << (std::filesystem::path(report_out) / name).string() << '\n';
      return kExitOk;
    }
    const bool is_bandit = bandit_run->parsed();
    const auto cfg = resolve(is_bandit ? bandit_flags : keymaze_flags, is_bandit ? Suite::Bandit : Suite::KeyMaze);
    const auto result = run_suite(cfg);
    print_files(result.report, is_bandit ? "summary.csv" : "keymaze_summary.csv");
    std::cerr << result.runs << " runs, " << result.failed_runs << " failed; artifacts in "
              << result.output_dir.string() << '\n';
    return result.exit_code();
  } catch (const dora::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dora::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const dora::BackendError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

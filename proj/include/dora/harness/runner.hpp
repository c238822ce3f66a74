#pragma once

// Batch execution: N seeded runs on a bounded worker pool, one JSONL file
// per run, then a single aggregation pass over the written files.
//
// Each run_NNNN.jsonl holds a run_header record, one step record per
// decision and a run_end record; every line carries schema_version.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dora/bandit.hpp"
#include "dora/bandit_agents.hpp"
#include "dora/episode.hpp"
#include "dora/errors.hpp"
#include "dora/harness/config.hpp"
#include "dora/harness/report.hpp"
#include "dora/keymaze.hpp"
#include "dora/mock_policy.hpp"
#include "dora/prompts.hpp"
#include "dora/remote_policy.hpp"

namespace dora::harness {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitBackend = 2, kExitPartial = 3 };

struct SuiteResult {
  std::filesystem::path output_dir;
  int runs = 0;
  int failed_runs = 0;
  // Failed runs in which every backend call failed.
  int backend_failed_runs = 0;
  ReportFiles report;

  int exit_code() const {
    if (failed_runs == 0) return kExitOk;
    if (backend_failed_runs == runs) return kExitBackend;
    return kExitPartial;
  }
};

using BackendFactory = std::function<std::shared_ptr<PolicyBackend>()>;

/// Mock scripts are loaded once; each run gets a fresh scripted backend so
/// runs never share script position. The remote backend is shared.
inline BackendFactory make_backend_factory(const ExperimentConfig& cfg) {
  if (!cfg.needs_backend()) return {};
  if (cfg.backend.starts_with("mock:")) {
    auto script = std::make_shared<const MockScript>(MockScript::load(cfg.backend.substr(5)));
    return [script] { return std::make_shared<ScriptedPolicy>(*script); };
  }
  auto remote = std::make_shared<RemotePolicy>(RemoteConfig::from_environment());
  return [remote] { return remote; };
}

inline DoraParams dora_params(const ExperimentConfig& cfg) {
  DoraParams p;
  p.n_candidates = cfg.dora.n_candidates;
  p.tau_decision = cfg.dora.tau_decision;
  p.tau_candidates = cfg.dora.tau_candidates;
  p.tau_lambda = cfg.dora.tau_lambda;
  p.score.alpha = cfg.dora.alpha;
  p.always_explore = cfg.dora.always_explore;
  return p;
}

inline LambdaSource lambda_source(const ExperimentConfig& cfg, int horizon) {
  if (cfg.agent == "dora_auto") return policy_sampled({cfg.dora.lambda_min, cfg.dora.lambda_max});
  return LambdaSchedule{cfg.dora.lambda_min, cfg.dora.lambda_max, cfg.dora.k, horizon};
}

inline std::unique_ptr<BanditAgent> make_bandit_agent(const ExperimentConfig& cfg,
                                                      const std::shared_ptr<PolicyBackend>& backend,
                                                      const std::shared_ptr<const PromptLibrary>& prompts) {
  const auto& b = cfg.bandit;
  if (cfg.agent == "ucb") return std::make_unique<UcbAgent>(b.ucb_c);
  if (cfg.agent == "ts") return std::make_unique<ThompsonAgent>();
  if (cfg.agent == "greedy") return std::make_unique<GreedyAgent>();
  if (cfg.agent == "eps_greedy") {
    return std::make_unique<EpsilonGreedyAgent>(b.epsilon, b.epsilon_decay, b.epsilon_sweep_first);
  }
  PolicyClient client(backend, prompts);
  if (cfg.agent == "llm_temp") {
    const auto& t = cfg.temperature;
    return std::make_unique<TemperatureBanditAgent>(
        std::move(client), TemperaturePlan{t.tau, t.schedule == "exp_decay", t.tau_max, t.tau_min, cfg.dora.k});
  }
  const auto mode = cfg.dora.score_mode == "empirical_mean" ? BanditScoreMode::EmpiricalMean : BanditScoreMode::Logprob;
  return std::make_unique<DoraBanditAgent>(std::move(client), lambda_source(cfg, b.horizon), dora_params(cfg), mode);
}

inline std::string run_file_name(int run) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "run_%04d.jsonl", run);
  return buf;
}

namespace detail {

inline nlohmann::json record(const char* type) { return {{"schema_version", kSchemaVersion}, {"type", type}}; }

inline void write_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines) {
  std::ofstream out(path, std::ios::binary);
  for (const auto& j : lines) out << j.dump() << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

struct RunOutcome {
  bool failed = false;
  bool backend_failed = false;
};

inline bool all_backend_errors(const std::vector<StepRecord>& decisions) {
  return !decisions.empty() && std::all_of(decisions.begin(), decisions.end(), [](const StepRecord& d) {
           return d.fallback_reason == FallbackReason::BackendError;
         });
}

inline RunOutcome run_bandit_once(const ExperimentConfig& cfg, int index, const BackendFactory& factory,
                                  const std::shared_ptr<const PromptLibrary>& prompts,
                                  const std::filesystem::path& dir) {
  const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(index);
  const auto instance = make_hard_instance(cfg.bandit.arms, cfg.bandit.gap, cfg.bandit.horizon, seed);
  std::vector<nlohmann::json> lines;
  auto header = record("run_header");
  header["suite"] = "bandit";
  header["agent"] = cfg.agent;
  header["run"] = index;
  header["seed"] = seed;
  header["arms"] = instance.num_arms();
  header["horizon"] = instance.horizon;
  header["gap"] = instance.gap;
  header["arm_means"] = instance.arm_means;
  header["best_arm"] = instance.best_arm;
  lines.push_back(std::move(header));

  RunOutcome outcome;
  auto end = record("run_end");
  try {
    auto agent = make_bandit_agent(cfg, factory ? factory() : nullptr, prompts);
    const auto run = run_bandit(*agent, instance, seed);
    std::vector<StepRecord> decisions;
    for (std::size_t t = 0; t < run.pulls.size(); ++t) {
      auto step = record("step");
      step["t"] = t;
      step["arm"] = run.pulls[t] == kInvalidArm ? nlohmann::json(nullptr) : nlohmann::json(run.pulls[t]);
      step["reward"] = run.rewards[t];
      if (t < run.decisions.size() && run.decisions[t]) {
        step["decision"] = to_json(*run.decisions[t]);
        decisions.push_back(*run.decisions[t]);
      }
      lines.push_back(std::move(step));
    }
    const auto m = compute_metrics(run, instance);
    outcome.failed = run.aborted;
    end["failed"] = run.aborted;
    end["abort_reason"] = run.abort_reason;
    end["metrics"] = {{"mean_avg_reward", m.mean_avg_reward},   {"cum_regret", m.cumulative_regret},
                      {"best_arm_frac", m.best_arm_fraction},   {"suffix_failure", m.suffix_failure},
                      {"invalid_count", m.invalid_count}};
    if (all_backend_errors(decisions) && decisions.size() == run.pulls.size()) {
      outcome.failed = outcome.backend_failed = true;
      end["failed"] = true;
      end["abort_reason"] = "every backend call failed";
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    outcome.failed = true;
    end["failed"] = true;
    end["abort_reason"] = e.what();
  }
  lines.push_back(std::move(end));
  write_lines(dir / run_file_name(index), lines);
  return outcome;
}

inline RunOutcome run_keymaze_once(const ExperimentConfig& cfg, int index, const BackendFactory& factory,
                                   const std::shared_ptr<const PromptLibrary>& prompts,
                                   const std::shared_ptr<const WorldDefinition>& world,
                                   const std::filesystem::path& dir) {
  const std::uint64_t seed = cfg.master_seed + static_cast<std::uint64_t>(index);
  std::vector<nlohmann::json> lines;
  auto header = record("run_header");
  header["suite"] = "keymaze";
  header["agent"] = cfg.agent;
  header["run"] = index;
  header["seed"] = seed;
  header["max_steps"] = cfg.keymaze.max_steps;
  lines.push_back(std::move(header));

  RunOutcome outcome;
  auto end = record("run_end");
  try {
    KeyMaze env(*world);
    PolicyClient client(factory(), prompts);
    auto rng = make_rng(seed, kAgentStream);
    const EpisodeParams params{cfg.keymaze.max_steps, cfg.keymaze.history_window};
    const auto system_prompt = prompts->get(prompt_names::kZeroShotSystem);
    EpisodeLog log;
    if (cfg.agent == "llm_temp") {
      TemperatureTextAgent agent(std::move(client), cfg.temperature.tau);
      log = run_episode(agent, env, params, seed, rng, system_prompt);
    } else {
      DoraAgent agent(std::move(client), lambda_source(cfg, cfg.keymaze.max_steps), dora_params(cfg));
      log = run_episode(agent, env, params, seed, rng, system_prompt);
    }
    std::vector<StepRecord> decisions;
    for (const auto& s : log.steps) {
      auto step = to_json(s);
      step["schema_version"] = kSchemaVersion;
      step["type"] = "step";
      lines.push_back(std::move(step));
      decisions.push_back(s.decision);
    }
    outcome.failed = log.aborted;
    end["failed"] = log.aborted;
    end["abort_reason"] = log.abort_reason;
    end["terminal"] = log.terminal;
    end["final_score"] = log.final_score;
    end["final_observation"] = log.final_observation;
    end["total_tokens"] = log.total_tokens;
    if (all_backend_errors(decisions)) {
      outcome.failed = outcome.backend_failed = true;
      end["failed"] = true;
      end["abort_reason"] = "every backend call failed";
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    outcome.failed = true;
    end["failed"] = true;
    end["abort_reason"] = e.what();
    end["terminal"] = false;
    end["final_score"] = 0.0;
    end["final_observation"] = "";
    end["total_tokens"] = 0;
  }
  lines.push_back(std::move(end));
  write_lines(dir / run_file_name(index), lines);
  return outcome;
}

}  // namespace detail

/// Runs the batch, writes artifacts to `cfg.output_dir` and the report
/// next to them. Configuration problems throw ConfigError before any run
/// starts (or from the first run that hits them).
inline SuiteResult run_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto factory = make_backend_factory(cfg);
  const auto prompts = std::make_shared<const PromptLibrary>(PromptLibrary::default_directory());
  std::shared_ptr<const WorldDefinition> world;
  if (cfg.suite == Suite::KeyMaze) {
    world = std::make_shared<const WorldDefinition>(cfg.keymaze.world.empty() ? keymaze_world()
                                                                              : WorldDefinition::load(cfg.keymaze.world));
    prompts->get(prompt_names::kZeroShotSystem);
  }
  if (cfg.needs_backend()) prompts->get(prompt_names::kMabSystem);

  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("run_") && e.path().extension() == ".jsonl") std::filesystem::remove(e.path());
  }

  std::vector<detail::RunOutcome> outcomes(static_cast<std::size_t>(cfg.runs));
  std::atomic<int> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto worker = [&] {
    for (int i = next++; i < cfg.runs; i = next++) {
      try {
        outcomes[static_cast<std::size_t>(i)] =
            cfg.suite == Suite::Bandit ? detail::run_bandit_once(cfg, i, factory, prompts, dir)
                                       : detail::run_keymaze_once(cfg, i, factory, prompts, world, dir);
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        next = cfg.runs;
      }
    }
  };
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int workers = std::min(cfg.runs, cfg.workers > 0 ? cfg.workers : hw);
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  SuiteResult result;
  result.output_dir = dir;
  result.runs = cfg.runs;
  for (const auto& o : outcomes) {
    result.failed_runs += o.failed ? 1 : 0;
    result.backend_failed_runs += o.backend_failed ? 1 : 0;
  }
  result.report = write_report(dir, dir);
  return result;
}

}  // namespace dora::harness

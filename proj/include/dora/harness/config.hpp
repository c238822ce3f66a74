#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "dora/errors.hpp"

namespace dora::harness {

enum class Suite { Bandit, KeyMaze };

inline const char* to_string(Suite s) { return s == Suite::Bandit ? "bandit" : "keymaze"; }

inline const std::set<std::string>& known_agents() {
  static const std::set<std::string> agents = {"ucb", "ts", "greedy", "eps_greedy", "llm_temp", "dora_scheduled",
                                               "dora_auto"};
  return agents;
}

inline bool is_classical(const std::string& agent) {
  return agent == "ucb" || agent == "ts" || agent == "greedy" || agent == "eps_greedy";
}

struct BanditSettings {
  int arms = 5;
  double gap = 0.2;
  int horizon = 200;
  double ucb_c = 1.0;
  double epsilon = 0.1;
  double epsilon_decay = 0.99;
  bool epsilon_sweep_first = false;
};

/// Defaults are the published DORA hyperparameters.
struct DoraSettings {
  int n_candidates = 20;
  double alpha = 0.8;
  double tau_decision = 0.2;
  double tau_candidates = 0.7;
  double tau_lambda = 0.2;
  double lambda_min = 0.0;
  double lambda_max = 40.0;
  double k = 5.0;
  bool always_explore = false;
  std::string score_mode = "logprob";  // or "empirical_mean" (bandit only)
};

struct TemperatureSettings {
  double tau = 0.0;
  std::string schedule = "fixed";  // or "exp_decay" (tau_max -> tau_min)
  double tau_max = 2.0;
  double tau_min = 0.0;
};

struct KeyMazeSettings {
  std::string world;  // empty: built-in world
  int max_steps = 100;
  int history_window = 20;
};

struct ExperimentConfig {
  Suite suite = Suite::Bandit;
  std::string agent = "ucb";
  int runs = 20;
  std::uint64_t master_seed = 0;
  BanditSettings bandit;
  DoraSettings dora;
  TemperatureSettings temperature;
  KeyMazeSettings keymaze;
  std::string backend;  // "", "remote" or "mock:<path>"
  std::string output_dir = "runs";
  int workers = 0;  // 0: hardware concurrency

  bool needs_backend() const { return !is_classical(agent); }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!known_agents().contains(agent)) fail("unknown agent '" + agent + "'");
    if (runs < 1) fail("runs must be >= 1");
    if (workers < 0) fail("workers must be >= 0");
    if (suite == Suite::KeyMaze && is_classical(agent)) fail("agent '" + agent + "' cannot play keymaze");
    if (bandit.arms < 2 || bandit.arms > 5) fail("bandit.arms must lie in [2, 5]");
    if (!(bandit.gap > 0.0 && bandit.gap < 1.0)) fail("bandit.gap must lie in (0, 1)");
    if (bandit.horizon < 1) fail("bandit.horizon must be >= 1");
    if (dora.n_candidates < 1) fail("dora.n_candidates must be >= 1");
    if (dora.alpha < 0.0 || dora.alpha > 1.0) fail("dora.alpha must lie in [0, 1]");
    if (dora.lambda_min < 0.0 || dora.lambda_min > dora.lambda_max) fail("dora lambda bounds out of order");
    if (dora.k <= 0.0) fail("dora.k must be > 0");
    if (dora.score_mode != "logprob" && dora.score_mode != "empirical_mean") fail("dora.score_mode unknown");
    if (temperature.schedule != "fixed" && temperature.schedule != "exp_decay") fail("temperature.schedule unknown");
    if (keymaze.max_steps < 1) fail("keymaze.max_steps must be >= 1");
    if (keymaze.history_window < 0) fail("keymaze.history_window must be >= 0");
    if (needs_backend()) {
      if (backend.empty()) fail("agent '" + agent + "' needs --backend mock:<script.json> or remote");
      if (backend != "remote" && !backend.starts_with("mock:")) fail("backend must be 'remote' or 'mock:<path>'");
    }
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

inline std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty() || base.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (base / path).lexically_normal().string();
}

}  // namespace detail

/// Overlays a JSON document on `cfg`. Relative paths inside the document
/// are resolved against `base_dir`.
inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::read;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  try {
    detail::reject_unknown(j, {"suite", "agent", "runs", "seed", "bandit", "dora", "temperature", "keymaze", "backend",
                               "output_dir", "workers"},
                           "config");
    if (auto it = j.find("suite"); it != j.end()) {
      const auto s = it->get<std::string>();
      if (s == "bandit") cfg.suite = Suite::Bandit;
      else if (s == "keymaze") cfg.suite = Suite::KeyMaze;
      else throw ConfigError("unknown suite '" + s + "'");
    }
    read(j, "agent", cfg.agent);
    read(j, "runs", cfg.runs);
    read(j, "seed", cfg.master_seed);
    read(j, "workers", cfg.workers);
    if (auto it = j.find("backend"); it != j.end()) {
      cfg.backend = it->get<std::string>();
      if (cfg.backend.starts_with("mock:")) cfg.backend = "mock:" + detail::resolve(cfg.backend.substr(5), base_dir);
    }
    if (auto it = j.find("output_dir"); it != j.end()) cfg.output_dir = it->get<std::string>();
    if (auto it = j.find("bandit"); it != j.end()) {
      detail::reject_unknown(*it, {"arms", "gap", "horizon", "ucb_c", "epsilon", "epsilon_decay", "epsilon_sweep_first"},
                             "bandit");
      auto& b = cfg.bandit;
      read(*it, "arms", b.arms);
      read(*it, "gap", b.gap);
      read(*it, "horizon", b.horizon);
      read(*it, "ucb_c", b.ucb_c);
      read(*it, "epsilon", b.epsilon);
      read(*it, "epsilon_decay", b.epsilon_decay);
      read(*it, "epsilon_sweep_first", b.epsilon_sweep_first);
    }
    if (auto it = j.find("dora"); it != j.end()) {
      detail::reject_unknown(*it, {"n_candidates", "alpha", "tau_decision", "tau_candidates", "tau_lambda", "lambda_min",
                                   "lambda_max", "k", "always_explore", "score_mode"},
                             "dora");
      auto& d = cfg.dora;
      read(*it, "n_candidates", d.n_candidates);
      read(*it, "alpha", d.alpha);
      read(*it, "tau_decision", d.tau_decision);
      read(*it, "tau_candidates", d.tau_candidates);
      read(*it, "tau_lambda", d.tau_lambda);
      read(*it, "lambda_min", d.lambda_min);
      read(*it, "lambda_max", d.lambda_max);
      read(*it, "k", d.k);
      read(*it, "always_explore", d.always_explore);
      read(*it, "score_mode", d.score_mode);
    }
    if (auto it = j.find("temperature"); it != j.end()) {
      detail::reject_unknown(*it, {"tau", "schedule", "tau_max", "tau_min"}, "temperature");
      read(*it, "tau", cfg.temperature.tau);
      read(*it, "schedule", cfg.temperature.schedule);
      read(*it, "tau_max", cfg.temperature.tau_max);
      read(*it, "tau_min", cfg.temperature.tau_min);
    }
    if (auto it = j.find("keymaze"); it != j.end()) {
      detail::reject_unknown(*it, {"world", "max_steps", "history_window"}, "keymaze");
      if (auto w = it->find("world"); w != it->end()) cfg.keymaze.world = detail::resolve(w->get<std::string>(), base_dir);
      read(*it, "max_steps", cfg.keymaze.max_steps);
      read(*it, "history_window", cfg.keymaze.history_window);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  apply_json(base, j, path.parent_path());
  return base;
}

}  // namespace dora::harness

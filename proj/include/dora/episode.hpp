#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "dora/agent.hpp"
#include "dora/errors.hpp"
#include "dora/prompts.hpp"
#include "dora/rng.hpp"
#include "dora/telemetry.hpp"
#include "dora/text_env.hpp"

namespace dora {

struct EpisodeStep {
  StepRecord decision;
  double reward = 0.0;
  double score = 0.0;
  bool valid_action = true;
  bool terminal = false;
};

struct EpisodeLog {
  std::string env_name;
  std::uint64_t seed = 0;
  std::vector<EpisodeStep> steps;
  std::string final_observation;
  double final_score = 0.0;
  bool terminal = false;
  bool aborted = false;
  std::string abort_reason;
  int total_tokens = 0;

  std::vector<std::string> observations(bool include_final = false) const {
    std::vector<std::string> out;
    for (const auto& s : steps) out.push_back(s.decision.observation);
    if (include_final && !final_observation.empty()) out.push_back(final_observation);
    return out;
  }

  std::vector<std::string> actions() const {
    std::vector<std::string> out;
    for (const auto& s : steps) out.push_back(s.decision.chosen_action);
    return out;
  }
};

inline int unique_states(const EpisodeLog& log) {
  require(!log.steps.empty(), "unique_states: empty episode");
  const auto obs = log.observations();
  return unique_states(obs);
}

inline LoopStats loop_stats(const EpisodeLog& log) {
  const auto obs = log.observations(/*include_final=*/true);
  const auto acts = log.actions();
  return loop_stats(obs, acts);
}

struct EpisodeParams {
  int max_steps = 100;
  /// Number of past (observation, action, reward) triples kept in context.
  int history_window = 20;
};

/// Renders past triples as alternating user/assistant turns.
inline std::vector<Message> render_history(const std::string& system_prompt,
                                           const std::deque<std::tuple<std::string, std::string, double>>& window) {
  std::vector<Message> out;
  out.push_back({"system", system_prompt});
  for (const auto& [obs, act, reward] : window) {
    out.push_back({"user", obs});
    out.push_back({"assistant", act});
    out.push_back({"user", "Reward: " + format_number(reward)});
  }
  return out;
}

/// Anything that can drive a text episode.
template <class A>
concept EpisodeAgent = requires(A a, const std::vector<Message>& h, std::string_view o, int t, Rng& rng) {
  { a.step(h, o, t, rng) } -> std::same_as<StepRecord>;
  a.reset();
};

/// Baseline without exploration machinery: one greedy-kind call per step at
/// a fixed temperature.
class TemperatureTextAgent {
 public:
  TemperatureTextAgent(PolicyClient client, double temperature, std::string invalid_action = "<invalid>")
      : client_(std::move(client)), temperature_(temperature), invalid_action_(std::move(invalid_action)) {}

  void reset() {}

  StepRecord step(const std::vector<Message>& history, std::string_view observation, int t, Rng&) {
    StepRecord rec;
    rec.step = t;
    rec.observation = std::string(observation);
    auto context = history;
    context.push_back({"user", std::string(observation)});
    try {
      const auto g = client_.greedy_action(context, PromptKind::GreedyAction, temperature_);
      rec.backend_calls = 1;
      rec.tokens = g.tokens;
      rec.chosen_action = g.action.text.empty() ? invalid_action_ : g.action.text;
      rec.chosen_raw = g.action.raw;
      if (g.action.text.empty()) rec.fallback_reason = FallbackReason::ParseFailure;
    } catch (const BackendError&) {
      rec.chosen_action = invalid_action_;
      rec.fallback_reason = FallbackReason::BackendError;
    }
    return rec;
  }

 private:
  PolicyClient client_;
  double temperature_;
  std::string invalid_action_;
};

/// Plays one episode: agent step, environment step, until terminal or
/// `params.max_steps`. Environment errors and an exhausted script end the
/// episode with `aborted` set.
template <EpisodeAgent Agent>
EpisodeLog run_episode(Agent& agent, TextEnv& env, const EpisodeParams& params, std::uint64_t seed, Rng& rng,
                       const std::string& system_prompt) {
  require(params.max_steps >= 1, "run_episode: max_steps must be >= 1");
  require(params.history_window >= 0, "run_episode: history_window must be >= 0");
  EpisodeLog log;
  log.env_name = env.name();
  log.seed = seed;
  agent.reset();

  std::string observation = env.reset(seed);
  std::deque<std::tuple<std::string, std::string, double>> window;
  for (int t = 0; t < params.max_steps; ++t) {
    const auto history = render_history(system_prompt, window);
    EpisodeStep step;
    try {
      step.decision = agent.step(history, observation, t, rng);
    } catch (const ScriptExhausted& e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    }
    log.total_tokens += step.decision.tokens;
    TextEnvStep result;
    try {
      result = env.step(step.decision.chosen_action);
    } catch (const std::exception& e) {
      log.steps.push_back(std::move(step));
      log.aborted = true;
      log.abort_reason = e.what();
      return log;
    }
    step.reward = result.reward;
    step.score = result.score;
    step.valid_action = result.valid_action;
    step.terminal = result.terminal;
    window.emplace_back(observation, step.decision.chosen_action, result.reward);
    while (static_cast<int>(window.size()) > params.history_window) window.pop_front();
    log.steps.push_back(std::move(step));
    observation = result.observation;
    log.final_score = result.score;
    if (result.terminal) {
      log.terminal = true;
      break;
    }
  }
  log.final_observation = observation;
  return log;
}

inline nlohmann::json to_json(const EpisodeStep& s) {
  auto j = to_json(s.decision);
  j["reward"] = s.reward;
  j["score"] = s.score;
  j["valid_action"] = s.valid_action;
  j["terminal"] = s.terminal;
  return j;
}

}  // namespace dora

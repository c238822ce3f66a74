#pragma once

// One decision step of the explore/greedy agent:
//   context -> mode -> (lambda, candidates, registry filter, scores,
//   lambda-softmax, sample) | greedy action -> registry insert.

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dora/errors.hpp"
#include "dora/lambda_control.hpp"
#include "dora/policy.hpp"
#include "dora/rng.hpp"
#include "dora/scoring.hpp"

namespace dora {

struct DoraParams {
  int n_candidates = 20;
  double tau_decision = 0.2;
  double tau_candidates = 0.7;
  double tau_lambda = 0.2;
  ScoreParams score{};
  /// Skip the mode call and always take the explore branch.
  bool always_explore = false;
  /// Action reported when no usable action could be obtained.
  std::string invalid_action = "<invalid>";
  /// Prompt kind for the greedy call (MabAnswer in the bandit adapter).
  PromptKind greedy_kind = PromptKind::GreedyAction;

  void validate() const {
    require(n_candidates >= 1, "DoraParams: n_candidates must be >= 1");
    require(score.alpha >= 0.0 && score.alpha <= 1.0, "DoraParams: alpha outside [0,1]");
    require(score.epsilon > 0.0, "DoraParams: epsilon must be > 0");
  }
};

/// Optional replacement for the log-probability scorer.
using CandidateScorer = std::function<std::vector<double>(std::span<const CandidateAction>)>;

/// Actions already taken, keyed by observation. Lives for one episode.
class UsedActionRegistry {
 public:
  /// Observation key: the observation with trailing whitespace removed.
  static std::string key(std::string_view observation) { return std::string(trim_right(observation)); }

  bool contains(std::string_view observation, std::string_view action) const {
    auto it = sets_.find(key(observation));
    return it != sets_.end() && it->second.contains(std::string(action));
  }

  void insert(std::string_view observation, std::string action) { sets_[key(observation)].insert(std::move(action)); }

  std::size_t size(std::string_view observation) const {
    auto it = sets_.find(key(observation));
    return it == sets_.end() ? 0 : it->second.size();
  }

  std::size_t observation_count() const { return sets_.size(); }
  void clear() { sets_.clear(); }

 private:
  std::map<std::string, std::set<std::string>> sets_;
};

enum class FallbackReason { EmptyCandidates, ParseFailure, BackendError };

inline const char* to_string(FallbackReason r) {
  switch (r) {
    case FallbackReason::EmptyCandidates: return "EmptyCandidates";
    case FallbackReason::ParseFailure: return "ParseFailure";
    case FallbackReason::BackendError: return "BackendError";
  }
  return "unknown";
}

struct ScoredCandidate {
  std::string action;
  double score = 0.0;
  double prob = 0.0;
  LogprobSource source = LogprobSource::None;
};

struct StepRecord {
  int step = 0;
  std::string observation;
  Mode mode = Mode::Greedy;  // branch actually executed
  bool mode_parsed = true;
  std::optional<double> lambda;
  std::optional<bool> lambda_parsed;  // policy-sampled lambda only
  std::vector<ScoredCandidate> candidates;
  std::vector<std::string> filtered_out;  // proposed but already used here
  std::string chosen_action;
  std::string chosen_raw;
  std::optional<FallbackReason> fallback_reason;
  int backend_calls = 0;
  int tokens = 0;
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["observation"] = r.observation;
  j["mode"] = to_string(r.mode);
  j["mode_parsed"] = r.mode_parsed;
  j["lambda"] = r.lambda ? nlohmann::json(*r.lambda) : nlohmann::json(nullptr);
  if (r.lambda_parsed) j["lambda_parsed"] = *r.lambda_parsed;
  auto cands = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    cands.push_back({{"action", c.action}, {"score", c.score}, {"prob", c.prob}, {"logprob_source", to_string(c.source)}});
  }
  j["candidates"] = std::move(cands);
  j["filtered_out"] = r.filtered_out;
  j["chosen_action"] = r.chosen_action;
  j["fallback_reason"] = r.fallback_reason ? nlohmann::json(to_string(*r.fallback_reason)) : nlohmann::json(nullptr);
  j["backend_calls"] = r.backend_calls;
  j["tokens"] = r.tokens;
  return j;
}

class DoraAgent {
 public:
  DoraAgent(PolicyClient client, LambdaSource lambda_source, DoraParams params, CandidateScorer scorer = {})
      : client_(std::move(client)),
        lambda_source_(std::move(lambda_source)),
        params_(std::move(params)),
        scorer_(std::move(scorer)) {
    params_.validate();
    if (const auto* s = std::get_if<LambdaSchedule>(&lambda_source_)) s->validate();
  }

  const DoraParams& params() const { return params_; }
  const LambdaSource& lambda_source() const { return lambda_source_; }
  UsedActionRegistry& registry() { return registry_; }
  const UsedActionRegistry& registry() const { return registry_; }
  const PolicyClient& client() const { return client_; }

  /// Clears per-episode state.
  void reset() { registry_.clear(); }

  /// One decision at step `t`. `history` is the context prefix (system
  /// prompt and rendered past interaction); the observation is appended.
  StepRecord step(const std::vector<Message>& history, std::string_view observation, int t, Rng& rng) {
    require(!trim(observation).empty(), "dora_step: empty observation");
    StepRecord rec;
    rec.step = t;
    rec.observation = std::string(observation);

    std::vector<Message> context = history;
    context.push_back({"user", std::string(observation)});

    try {
      Mode decided = Mode::Explore;
      if (!params_.always_explore) {
        const auto d = client_.decide_mode(context, params_.tau_decision);
        ++rec.backend_calls;
        rec.tokens += d.tokens;
        rec.mode_parsed = d.parsed;
        decided = d.mode;
        if (!d.parsed) rec.fallback_reason = FallbackReason::ParseFailure;
      }
      if (decided == Mode::Explore && explore(context, observation, t, rng, rec)) {
        registry_.insert(observation, rec.chosen_action);
        return rec;
      }
      greedy(context, rec);
      if (rec.chosen_action != params_.invalid_action) registry_.insert(observation, rec.chosen_action);
    } catch (const BackendError&) {
      rec.mode = Mode::Greedy;
      rec.lambda.reset();
      rec.lambda_parsed.reset();
      rec.candidates.clear();
      rec.chosen_action = params_.invalid_action;
      rec.chosen_raw.clear();
      rec.fallback_reason = FallbackReason::BackendError;
    }
    return rec;
  }

 private:
  // Returns false when no fresh candidate survived and the greedy branch
  // must run instead.
  bool explore(const std::vector<Message>& context, std::string_view observation, int t, Rng& rng,
               StepRecord& rec) {
    double lambda = 0.0;
    if (const auto* sched = std::get_if<LambdaSchedule>(&lambda_source_)) {
      lambda = lambda_exp(*sched, std::clamp(t, 0, sched->horizon));
    } else {
      const auto& sampled = std::get<PolicySampledLambda>(lambda_source_);
      const auto choice = client_.sample_lambda(context, sampled, params_.tau_lambda);
      rec.backend_calls += choice.attempts;
      rec.tokens += choice.tokens;
      rec.lambda_parsed = choice.parsed;
      lambda = choice.lambda;
    }

    auto list = client_.generate_candidates(context, params_.n_candidates, params_.tau_candidates);
    rec.backend_calls += 1 + list.rescore_calls;
    rec.tokens += list.tokens;

    std::vector<CandidateAction> retained;
    for (auto& c : list.candidates) {
      if (registry_.contains(observation, c.text)) {
        rec.filtered_out.push_back(c.text);
      } else {
        retained.push_back(std::move(c));
      }
    }
    if (retained.empty()) {
      rec.fallback_reason = FallbackReason::EmptyCandidates;
      rec.lambda_parsed.reset();
      return false;
    }

    const auto scores = scorer_ ? scorer_(retained) : score_candidates(retained, params_.score);
    require(scores.size() == retained.size(), "candidate scorer returned the wrong number of scores");
    const auto dist = lambda_probabilities(scores, lambda);
    const auto idx = sample_categorical(dist, rng);

    rec.mode = Mode::Explore;
    rec.lambda = lambda;
    for (std::size_t i = 0; i < retained.size(); ++i) {
      rec.candidates.push_back({retained[i].text, dist.scores[i], dist.probs[i], retained[i].source});
    }
    rec.chosen_action = retained[idx].text;
    rec.chosen_raw = retained[idx].raw;
    return true;
  }

  void greedy(const std::vector<Message>& context, StepRecord& rec) {
    rec.mode = Mode::Greedy;
    rec.lambda.reset();
    rec.candidates.clear();
    const auto g = client_.greedy_action(context, params_.greedy_kind);
    ++rec.backend_calls;
    rec.tokens += g.tokens;
    if (g.action.text.empty()) {
      rec.chosen_action = params_.invalid_action;
      rec.fallback_reason = FallbackReason::ParseFailure;
      return;
    }
    rec.chosen_action = g.action.text;
    rec.chosen_raw = g.action.raw;
  }

  PolicyClient client_;
  LambdaSource lambda_source_;
  DoraParams params_;
  CandidateScorer scorer_;
  UsedActionRegistry registry_;
};

}  // namespace dora

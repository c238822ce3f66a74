#pragma once

// Bandit agents driven by a policy backend through the button-pressing
// text interface: a fixed/decaying temperature baseline and the DORA agent.

#include <cctype>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dora/agent.hpp"
#include "dora/bandit.hpp"
#include "dora/lambda_control.hpp"
#include "dora/policy.hpp"
#include "dora/prompts.hpp"

namespace dora {

inline std::string render_mab_system(const PromptLibrary& prompts, int num_arms, int horizon) {
  return prompts.render(prompt_names::kMabSystem, {{"K", std::to_string(num_arms)}, {"T", std::to_string(horizon)}});
}

/// Summarized-history prompt; arms never pulled show no average.
inline std::string render_mab_history(const PromptLibrary& prompts, const ArmStats& stats, int t) {
  std::string summary;
  for (int a = 0; a < stats.num_arms(); ++a) {
    std::string color(kArmColors.at(static_cast<std::size_t>(a)));
    color[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(color[0])));
    const int n = stats.pulls[static_cast<std::size_t>(a)];
    if (a > 0) summary += '\n';
    summary += "- " + color + " button: pressed " + std::to_string(n) + " times";
    if (n > 0) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", stats.mean(a));
      summary += std::string(", average reward ") + buf;
    }
  }
  return prompts.render(prompt_names::kMabHistory, {{"t", std::to_string(t)}, {"summary", summary}});
}

/// Temperature at step t: fixed, or decaying from `tau_max` to `tau_min`
/// along the mirrored exponential schedule.
struct TemperaturePlan {
  double fixed = 0.0;
  bool decaying = false;
  double tau_max = 2.0;
  double tau_min = 0.0;
  double k = 5.0;

  double at(int t, int horizon) const {
    if (!decaying) return fixed;
    const LambdaSchedule grow{0.0, tau_max - tau_min, k, horizon};
    return tau_max - lambda_exp(grow, std::clamp(t, 0, horizon));
  }
};

/// Baseline: one sampled reply per step at the planned temperature.
class TemperatureBanditAgent final : public BanditAgent {
 public:
  TemperatureBanditAgent(PolicyClient client, TemperaturePlan plan) : client_(std::move(client)), plan_(plan) {}

  std::string name() const override { return "llm_temp"; }
  void reset(int num_arms, int horizon) override {
    num_arms_ = num_arms;
    horizon_ = horizon;
  }

  std::optional<int> select(const ArmStats& stats, int t, Rng&) override {
    PolicyRequest request;
    request.context = {{"system", render_mab_system(client_.prompts(), num_arms_, horizon_)},
                       {"user", render_mab_history(client_.prompts(), stats, t)}};
    request.temperature = plan_.at(t, horizon_);
    request.prompt_kind = PromptKind::MabAnswer;
    request.max_tokens = 32;
    try {
      return parse_mab_answer(client_.backend().complete(request).text, num_arms_);
    } catch (const BackendError&) {
      return std::nullopt;
    }
  }

 private:
  PolicyClient client_;
  TemperaturePlan plan_;
  int num_arms_ = 5;
  int horizon_ = 200;
};

enum class BanditScoreMode { Logprob, EmpiricalMean };

/// DORA on the bandit: the observation is the summarized-history prompt,
/// candidates are answer envelopes, the sampled envelope names the arm.
/// With EmpiricalMean scoring a candidate's score is its arm's running
/// empirical mean instead of the log-probability score.
class DoraBanditAgent final : public BanditAgent {
 public:
  DoraBanditAgent(PolicyClient client, LambdaSource source, DoraParams params,
                  BanditScoreMode score_mode = BanditScoreMode::Logprob)
      : score_mode_(score_mode) {
    params.greedy_kind = PromptKind::MabAnswer;
    CandidateScorer scorer;
    if (score_mode_ == BanditScoreMode::EmpiricalMean) {
      scorer = [this](std::span<const CandidateAction> cands) {
        std::vector<double> s;
        for (const auto& c : cands) {
          const auto arm = parse_mab_answer(c.raw, stats_ ? stats_->num_arms() : 5);
          s.push_back(arm && stats_ ? stats_->mean(*arm) : 0.0);
        }
        return s;
      };
    }
    agent_ = std::make_unique<DoraAgent>(std::move(client), std::move(source), std::move(params), std::move(scorer));
  }

  DoraBanditAgent(const DoraBanditAgent&) = delete;
  DoraBanditAgent& operator=(const DoraBanditAgent&) = delete;

  std::string name() const override { return "dora"; }

  void reset(int num_arms, int horizon) override {
    num_arms_ = num_arms;
    horizon_ = horizon;
    agent_->reset();
    last_.reset();
  }

  std::optional<int> select(const ArmStats& stats, int t, Rng& rng) override {
    stats_ = &stats;
    const std::vector<Message> history = {
        {"system", render_mab_system(agent_->client().prompts(), num_arms_, horizon_)}};
    last_ = agent_->step(history, render_mab_history(agent_->client().prompts(), stats, t), t, rng);
    stats_ = nullptr;
    return parse_mab_answer(last_->chosen_raw, num_arms_);
  }

  const StepRecord* last_decision() const override { return last_ ? &*last_ : nullptr; }
  DoraAgent& dora() { return *agent_; }

 private:
  BanditScoreMode score_mode_;
  std::unique_ptr<DoraAgent> agent_;
  const ArmStats* stats_ = nullptr;
  std::optional<StepRecord> last_;
  int num_arms_ = 5;
  int horizon_ = 200;
};

}  // namespace dora

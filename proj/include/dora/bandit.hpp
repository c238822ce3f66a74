#pragma once

// Bernoulli K-armed bandit: the hard instance, the classical baselines,
// the run loop, and the regret / suffix-failure metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dora/agent.hpp"
#include "dora/errors.hpp"
#include "dora/rng.hpp"

namespace dora {

inline constexpr int kInvalidArm = -1;

// RNG streams within one run seed.
inline constexpr std::uint64_t kInstanceStream = 0;
inline constexpr std::uint64_t kRewardStream = 1;
inline constexpr std::uint64_t kAgentStream = 2;

struct BanditInstance {
  std::vector<double> arm_means;
  int best_arm = 0;
  int horizon = 200;
  double gap = 0.2;

  int num_arms() const { return static_cast<int>(arm_means.size()); }
  double best_mean() const { return arm_means.at(static_cast<std::size_t>(best_arm)); }
};

/// One arm at 0.5 + gap/2 (chosen uniformly from `seed`), the rest at 0.5 - gap/2.
inline BanditInstance make_hard_instance(int num_arms, double gap, int horizon, std::uint64_t seed) {
  require(num_arms >= 2, "make_hard_instance: K must be >= 2");
  require(gap > 0.0 && gap < 1.0, "make_hard_instance: gap must lie in (0, 1)");
  require(horizon >= 1, "make_hard_instance: horizon must be >= 1");
  BanditInstance inst;
  inst.horizon = horizon;
  inst.gap = gap;
  inst.arm_means.assign(static_cast<std::size_t>(num_arms), 0.5 - gap / 2.0);
  auto rng = make_rng(seed, kInstanceStream);
  inst.best_arm = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_arms)));
  inst.arm_means[static_cast<std::size_t>(inst.best_arm)] = 0.5 + gap / 2.0;
  return inst;
}

/// Per-arm counts and reward sums over valid pulls.
struct ArmStats {
  std::vector<int> pulls;
  std::vector<double> reward_sums;

  ArmStats() = default;
  explicit ArmStats(int num_arms)
      : pulls(static_cast<std::size_t>(num_arms), 0), reward_sums(static_cast<std::size_t>(num_arms), 0.0) {}

  int num_arms() const { return static_cast<int>(pulls.size()); }
  int total_pulls() const {
    int n = 0;
    for (int p : pulls) n += p;
    return n;
  }
  /// Empirical mean; 0 for an arm never pulled.
  double mean(int arm) const {
    const auto a = static_cast<std::size_t>(arm);
    return pulls[a] == 0 ? 0.0 : reward_sums[a] / pulls[a];
  }
  std::optional<int> first_unpulled() const {
    for (int a = 0; a < num_arms(); ++a) {
      if (pulls[static_cast<std::size_t>(a)] == 0) return a;
    }
    return std::nullopt;
  }
  void record(int arm, int reward) {
    ++pulls[static_cast<std::size_t>(arm)];
    reward_sums[static_cast<std::size_t>(arm)] += reward;
  }
};

/// Index of the largest value; ties go to the lowest index.
inline int argmax_lowest(const std::vector<double>& values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

inline int greedy_select(const ArmStats& stats) {
  if (auto a = stats.first_unpulled()) return *a;
  std::vector<double> means(static_cast<std::size_t>(stats.num_arms()));
  for (int a = 0; a < stats.num_arms(); ++a) means[static_cast<std::size_t>(a)] = stats.mean(a);
  return argmax_lowest(means);
}

/// Pulls every arm once (by index), then argmax of mean + sqrt(c / n_a).
inline int ucb_select(const ArmStats& stats, double c = 1.0) {
  if (auto a = stats.first_unpulled()) return *a;
  std::vector<double> ucb(static_cast<std::size_t>(stats.num_arms()));
  for (int a = 0; a < stats.num_arms(); ++a) {
    ucb[static_cast<std::size_t>(a)] = stats.mean(a) + std::sqrt(c / stats.pulls[static_cast<std::size_t>(a)]);
  }
  return argmax_lowest(ucb);
}

struct BetaPosterior {
  double alpha = 1.0;
  double beta = 1.0;
};

inline double sample_beta(const BetaPosterior& p, Rng& rng) {
  std::gamma_distribution<double> ga(p.alpha, 1.0), gb(p.beta, 1.0);
  const double x = ga(rng), y = gb(rng);
  return x / (x + y);
}

inline int thompson_select(const std::vector<BetaPosterior>& posteriors, Rng& rng) {
  std::vector<double> draws;
  draws.reserve(posteriors.size());
  for (const auto& p : posteriors) draws.push_back(sample_beta(p, rng));
  return argmax_lowest(draws);
}

inline void thompson_update(std::vector<BetaPosterior>& posteriors, int arm, int reward) {
  auto& p = posteriors.at(static_cast<std::size_t>(arm));
  (reward ? p.alpha : p.beta) += 1.0;
}

// ---------------------------------------------------------------------------
// Agents

class BanditAgent {
 public:
  virtual ~BanditAgent() = default;
  virtual std::string name() const = 0;
  virtual void reset(int num_arms, int horizon) = 0;
  /// Arm to pull at step t, or nullopt for an invalid action.
  virtual std::optional<int> select(const ArmStats& stats, int t, Rng& rng) = 0;
  virtual void update(int arm, int reward) {
    (void)arm;
    (void)reward;
  }
  /// Decision record of the last select() for policy-driven agents.
  virtual const StepRecord* last_decision() const { return nullptr; }
};

class UcbAgent final : public BanditAgent {
 public:
  explicit UcbAgent(double c = 1.0) : c_(c) {}
  std::string name() const override { return "ucb"; }
  void reset(int, int) override {}
  std::optional<int> select(const ArmStats& stats, int, Rng&) override { return ucb_select(stats, c_); }

 private:
  double c_;
};

class GreedyAgent final : public BanditAgent {
 public:
  std::string name() const override { return "greedy"; }
  void reset(int, int) override {}
  std::optional<int> select(const ArmStats& stats, int, Rng&) override { return greedy_select(stats); }
};

class ThompsonAgent final : public BanditAgent {
 public:
  std::string name() const override { return "ts"; }
  void reset(int num_arms, int) override { posteriors_.assign(static_cast<std::size_t>(num_arms), BetaPosterior{}); }
  std::optional<int> select(const ArmStats&, int, Rng& rng) override { return thompson_select(posteriors_, rng); }
  void update(int arm, int reward) override { thompson_update(posteriors_, arm, reward); }
  const std::vector<BetaPosterior>& posteriors() const { return posteriors_; }

 private:
  std::vector<BetaPosterior> posteriors_;
};

/// With probability epsilon a uniformly random arm, otherwise the arm with
/// the highest empirical mean (never-pulled arms count as 0, ties to the
/// lowest index). Epsilon is multiplied by `decay` after every update.
/// `sweep_first` pulls each arm once before the rule applies.
class EpsilonGreedyAgent final : public BanditAgent {
 public:
  explicit EpsilonGreedyAgent(double epsilon0 = 0.1, double decay = 0.99, bool sweep_first = false)
      : epsilon0_(epsilon0), decay_(decay), sweep_first_(sweep_first), epsilon_(epsilon0) {
    require(epsilon0 >= 0.0 && epsilon0 <= 1.0, "EpsilonGreedyAgent: epsilon outside [0,1]");
    require(decay > 0.0 && decay <= 1.0, "EpsilonGreedyAgent: decay outside (0,1]");
  }
  std::string name() const override { return "eps_greedy"; }
  void reset(int, int) override { epsilon_ = epsilon0_; }
  std::optional<int> select(const ArmStats& stats, int, Rng& rng) override {
    if (sweep_first_) {
      if (auto a = stats.first_unpulled()) return *a;
    }
    if (uniform01(rng) < epsilon_) {
      return static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(stats.num_arms())));
    }
    std::vector<double> means(static_cast<std::size_t>(stats.num_arms()));
    for (int a = 0; a < stats.num_arms(); ++a) means[static_cast<std::size_t>(a)] = stats.mean(a);
    return argmax_lowest(means);
  }
  void update(int, int) override { epsilon_ *= decay_; }
  double epsilon() const { return epsilon_; }

 private:
  double epsilon0_, decay_;
  bool sweep_first_;
  double epsilon_;
};

// ---------------------------------------------------------------------------
// Runs and metrics

struct BanditRun {
  std::uint64_t seed = 0;
  std::vector<int> pulls;    // arm index or kInvalidArm
  std::vector<int> rewards;  // 0 for invalid steps
  ArmStats stats;
  std::vector<std::optional<StepRecord>> decisions;
  bool aborted = false;
  std::string abort_reason;

  int invalid_count() const { return static_cast<int>(std::count(pulls.begin(), pulls.end(), kInvalidArm)); }
};

/// Plays `instance.horizon` steps. Rewards come from the run's reward
/// stream, the agent's randomness from its own stream, both keyed by `seed`.
inline BanditRun run_bandit(BanditAgent& agent, const BanditInstance& instance, std::uint64_t seed) {
  BanditRun run;
  run.seed = seed;
  run.stats = ArmStats(instance.num_arms());
  auto reward_rng = make_rng(seed, kRewardStream);
  auto agent_rng = make_rng(seed, kAgentStream);
  agent.reset(instance.num_arms(), instance.horizon);
  for (int t = 0; t < instance.horizon; ++t) {
    std::optional<int> arm;
    try {
      arm = agent.select(run.stats, t, agent_rng);
    } catch (const ScriptExhausted& e) {
      run.aborted = true;
      run.abort_reason = e.what();
      return run;
    }
    const auto* decision = agent.last_decision();
    run.decisions.push_back(decision ? std::optional<StepRecord>(*decision) : std::nullopt);
    if (!arm || *arm < 0 || *arm >= instance.num_arms()) {
      run.pulls.push_back(kInvalidArm);
      run.rewards.push_back(0);
      continue;
    }
    const int reward = uniform01(reward_rng) < instance.arm_means[static_cast<std::size_t>(*arm)] ? 1 : 0;
    run.pulls.push_back(*arm);
    run.rewards.push_back(reward);
    run.stats.record(*arm, reward);
    agent.update(*arm, reward);
  }
  return run;
}

struct BanditMetrics {
  double mean_avg_reward = 0.0;
  double cumulative_regret = 0.0;
  double best_arm_fraction = 0.0;
  bool suffix_failure = false;
  int invalid_count = 0;
};

/// Pseudo-regret over true means plus `gap` per invalid step. Averages use
/// the full horizon as denominator, invalid steps included.
inline BanditMetrics compute_metrics(const std::vector<int>& pulls, const std::vector<int>& rewards,
                                     const BanditInstance& instance) {
  require(pulls.size() == rewards.size(), "compute_metrics: pulls and rewards differ in length");
  BanditMetrics m;
  const double horizon = instance.horizon;
  std::vector<int> counts(static_cast<std::size_t>(instance.num_arms()), 0);
  int best_pulls = 0, reward_sum = 0;
  bool best_in_suffix = false;
  const std::size_t suffix_start = static_cast<std::size_t>(instance.horizon / 2);
  for (std::size_t i = 0; i < pulls.size(); ++i) {
    reward_sum += rewards[i];
    if (pulls[i] == kInvalidArm) {
      ++m.invalid_count;
      continue;
    }
    ++counts[static_cast<std::size_t>(pulls[i])];
    if (pulls[i] == instance.best_arm) {
      ++best_pulls;
      if (i >= suffix_start) best_in_suffix = true;
    }
  }
  for (int a = 0; a < instance.num_arms(); ++a) {
    m.cumulative_regret += counts[static_cast<std::size_t>(a)] * (instance.best_mean() - instance.arm_means[static_cast<std::size_t>(a)]);
  }
  m.cumulative_regret += instance.gap * m.invalid_count;
  m.mean_avg_reward = reward_sum / horizon;
  m.best_arm_fraction = best_pulls / horizon;
  m.suffix_failure = !best_in_suffix;
  return m;
}

inline BanditMetrics compute_metrics(const BanditRun& run, const BanditInstance& instance) {
  return compute_metrics(run.pulls, run.rewards, instance);
}

}  // namespace dora

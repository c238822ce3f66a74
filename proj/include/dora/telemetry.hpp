#pragma once

// Exploration telemetry over a trajectory of (observation, action) pairs.
//
// A loop event at step t: the pair (o_t, a_t) already occurred at an earlier
// step (any earlier step, not only the previous one). The event is recovered
// when one of o_{t+1}, o_{t+2}, o_{t+3} was never observed at steps 0..t.
// Observations compare equal after trailing whitespace is trimmed.

#include <algorithm>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <utility>

#include "dora/errors.hpp"
#include "dora/policy.hpp"

namespace dora {

inline constexpr int kRecoveryWindow = 3;

struct LoopStats {
  int loops_encountered = 0;
  int loops_recovered = 0;
  double recovery_rate = 0.0;
  int unique_states = 0;

  LoopStats& operator+=(const LoopStats& o) {
    loops_encountered += o.loops_encountered;
    loops_recovered += o.loops_recovered;
    unique_states += o.unique_states;
    recovery_rate = loops_encountered == 0 ? 0.0 : static_cast<double>(loops_recovered) / loops_encountered;
    return *this;
  }
};

inline int unique_states(std::span<const std::string> observations) {
  std::set<std::string> seen;
  for (const auto& o : observations) seen.emplace(trim_right(o));
  return static_cast<int>(seen.size());
}

/// `observations` holds o_0..o_{n-1} and optionally the observation that
/// followed the last action; `actions` holds a_0..a_{n-1}.
inline LoopStats loop_stats(std::span<const std::string> observations, std::span<const std::string> actions) {
  require(observations.size() == actions.size() || observations.size() == actions.size() + 1,
          "loop_stats: observations must align with actions");
  LoopStats stats;
  std::set<std::pair<std::string, std::string>> pairs;
  std::set<std::string> seen;
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const std::string obs(trim_right(observations[t]));
    seen.insert(obs);
    if (!pairs.emplace(obs, actions[t]).second) {
      ++stats.loops_encountered;
      const std::size_t last = std::min(observations.size() - 1, t + kRecoveryWindow);
      for (std::size_t u = t + 1; u <= last; ++u) {
        if (!seen.contains(std::string(trim_right(observations[u])))) {
          ++stats.loops_recovered;
          break;
        }
      }
    }
  }
  stats.recovery_rate =
      stats.loops_encountered == 0 ? 0.0 : static_cast<double>(stats.loops_recovered) / stats.loops_encountered;
  stats.unique_states = unique_states(observations.first(actions.size()));
  return stats;
}

}  // namespace dora

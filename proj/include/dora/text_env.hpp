#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dora {

struct TextEnvStep {
  std::string observation;
  double reward = 0.0;
  double score = 0.0;  // cumulative, normalized to [0, 1]
  bool terminal = false;
  bool valid_action = true;
};

/// Episodic text environment. Instances are single-episode and not shared
/// between threads.
class TextEnv {
 public:
  virtual ~TextEnv() = default;
  virtual std::string name() const = 0;
  virtual std::string reset(std::uint64_t seed) = 0;
  virtual TextEnvStep step(std::string_view action) = 0;
  virtual bool terminal() const = 0;
  /// Action that the environment always rejects; used for failed steps.
  virtual std::string invalid_action() const { return "<invalid>"; }
};

}  // namespace dora

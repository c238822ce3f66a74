#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "dora/errors.hpp"

namespace dora {

struct LambdaBounds {
  double min = 0.0;
  double max = 40.0;

  double clamp(double v) const { return std::clamp(v, min, max); }
  double midpoint() const { return 0.5 * (min + max); }
};

/// Exponential exploration schedule: lambda grows from `lambda_min` at t=0
/// to `lambda_max` at t=horizon with growth constant `k`.
struct LambdaSchedule {
  double lambda_min = 0.0;
  double lambda_max = 40.0;
  double k = 5.0;
  int horizon = 200;

  void validate() const {
    require(lambda_min >= 0.0, "LambdaSchedule: lambda_min must be >= 0");
    require(lambda_min <= lambda_max, "LambdaSchedule: lambda_min > lambda_max");
    require(k > 0.0, "LambdaSchedule: k must be > 0");
    require(horizon >= 1, "LambdaSchedule: horizon must be >= 1");
  }
};

inline double lambda_exp(const LambdaSchedule& s, int t) {
  s.validate();
  require(t >= 0 && t <= s.horizon, "lambda_exp: step outside [0, horizon]");
  if (t == 0) return s.lambda_min;
  if (t == s.horizon) return s.lambda_max;
  const double ratio = std::expm1(s.k * t / s.horizon) / std::expm1(s.k);
  return s.lambda_min + (s.lambda_max - s.lambda_min) * ratio;
}

/// Lambda chosen by the policy itself, clamped into `bounds`.
struct PolicySampledLambda {
  LambdaBounds bounds;
  double fallback = 20.0;
  int retries = 1;
};

using LambdaSource = std::variant<LambdaSchedule, PolicySampledLambda>;

inline PolicySampledLambda policy_sampled(LambdaBounds bounds) {
  return PolicySampledLambda{bounds, bounds.midpoint(), 1};
}

/// Extracts the "lambda" number from a single JSON object reply, or nullopt.
inline std::optional<double> try_parse_lambda(std::string_view raw) {
  const auto j = nlohmann::json::parse(raw, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto it = j.find("lambda");
  if (it == j.end() || !it->is_number()) return std::nullopt;
  const double v = it->get<double>();
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

inline double parse_lambda_reply(std::string_view raw, LambdaBounds bounds, double fallback) {
  require(bounds.min <= bounds.max, "parse_lambda_reply: bounds out of order");
  if (auto v = try_parse_lambda(raw)) return bounds.clamp(*v);
  return bounds.clamp(fallback);
}

}  // namespace dora

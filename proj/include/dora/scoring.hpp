#pragma once

// Sequence-level confidence scores for candidate actions and the
// lambda-softmax distribution used to sample among them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dora/errors.hpp"
#include "dora/rng.hpp"

namespace dora {

enum class LogprobSource { Rescored, Sliced, None };

inline const char* to_string(LogprobSource s) {
  switch (s) {
    case LogprobSource::Rescored: return "rescored";
    case LogprobSource::Sliced: return "sliced";
    case LogprobSource::None: return "none";
  }
  return "none";
}

/// One proposed action. `text` is the canonical (normalized) form used for
/// dedup and registry lookups; `raw` keeps the line as the policy wrote it.
struct CandidateAction {
  std::string text;
  std::vector<double> token_logprobs;
  std::string raw;
  LogprobSource source = LogprobSource::None;
};

struct ScoreParams {
  double alpha = 0.8;
  double epsilon = 1e-8;
};

struct LambdaDistribution {
  std::vector<double> scores;
  double lambda = 0.0;
  std::vector<double> probs;
};

namespace detail {

inline void check_logprobs(std::span<const double> lp) {
  require(!lp.empty(), "candidate has no token log-probabilities");
  for (double x : lp) {
    require(std::isfinite(x) && x <= 0.0, "token log-probability must be finite and <= 0");
  }
}

}  // namespace detail

inline double mean_logprob(std::span<const double> token_logprobs) {
  detail::check_logprobs(token_logprobs);
  const double sum = std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
  return sum / static_cast<double>(token_logprobs.size());
}

inline double mean_logprob(const CandidateAction& a) { return mean_logprob(a.token_logprobs); }

/// Population variance (divides by N).
inline double variance_logprob(std::span<const double> token_logprobs) {
  const double mu = mean_logprob(token_logprobs);
  double acc = 0.0;
  for (double x : token_logprobs) acc += (x - mu) * (x - mu);
  return acc / static_cast<double>(token_logprobs.size());
}

inline double variance_logprob(const CandidateAction& a) { return variance_logprob(a.token_logprobs); }

/// (x - min) / (max - min + epsilon) for every entry; outputs lie in [0, 1).
inline std::vector<double> minmax_normalize(std::span<const double> values, double epsilon = 1e-8) {
  require(!values.empty(), "minmax_normalize: empty input");
  require(epsilon > 0.0, "minmax_normalize: epsilon must be > 0");
  for (double v : values) require(std::isfinite(v), "minmax_normalize: non-finite input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double denom = *hi_it - lo + epsilon;
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back((v - lo) / denom);
  return out;
}

/// alpha * norm(mean) - (1 - alpha) * norm(variance), with both terms
/// min-max normalized across the given candidate set. Range is
/// [-(1 - alpha), alpha].
inline std::vector<double> score_candidates(std::span<const CandidateAction> cands,
                                            const ScoreParams& params = {}) {
  require(!cands.empty(), "score_candidates: empty candidate list");
  require(params.alpha >= 0.0 && params.alpha <= 1.0, "score_candidates: alpha outside [0,1]");
  require(params.epsilon > 0.0, "score_candidates: epsilon must be > 0");
  std::vector<double> means, variances;
  means.reserve(cands.size());
  variances.reserve(cands.size());
  for (const auto& c : cands) {
    means.push_back(mean_logprob(c));
    variances.push_back(variance_logprob(c));
  }
  const auto mu = minmax_normalize(means, params.epsilon);
  const auto var = minmax_normalize(variances, params.epsilon);
  std::vector<double> scores(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    scores[i] = params.alpha * mu[i] - (1.0 - params.alpha) * var[i];
  }
  return scores;
}

/// Softmax(lambda * scores), computed with max-logit subtraction.
inline LambdaDistribution lambda_probabilities(std::span<const double> scores, double lambda) {
  require(!scores.empty(), "lambda_probabilities: empty score vector");
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda_probabilities: lambda must be finite and >= 0");
  for (double s : scores) require(std::isfinite(s), "lambda_probabilities: non-finite score");

  LambdaDistribution dist;
  dist.scores.assign(scores.begin(), scores.end());
  dist.lambda = lambda;
  dist.probs.resize(scores.size());

  if (lambda == 0.0) {
    std::fill(dist.probs.begin(), dist.probs.end(), 1.0 / static_cast<double>(scores.size()));
    return dist;
  }
  double max_logit = lambda * scores[0];
  for (double s : scores) max_logit = std::max(max_logit, lambda * s);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    dist.probs[i] = std::exp(lambda * scores[i] - max_logit);
    total += dist.probs[i];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

/// Inverse-CDF draw over `dist.probs`.
inline std::size_t sample_categorical(const LambdaDistribution& dist, Rng& rng) {
  require(!dist.probs.empty(), "sample_categorical: empty distribution");
  const double u = uniform01(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < dist.probs.size(); ++i) {
    if (dist.probs[i] <= 0.0) continue;
    cumulative += dist.probs[i];
    last_positive = i;
    if (u < cumulative) return i;
  }
  // Rounding left the cumulative sum a hair below u.
  return last_positive;
}

}  // namespace dora

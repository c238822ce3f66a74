#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "dora/scoring.hpp"
#include "support/oracle.hpp"

using namespace dora;

namespace {

CandidateAction cand(std::vector<double> lps) { return {"a", std::move(lps), "a", LogprobSource::Sliced}; }

std::vector<CandidateAction> cands(const std::vector<std::vector<double>>& lps) {
  std::vector<CandidateAction> out;
  for (const auto& l : lps) out.push_back(cand(l));
  return out;
}

}  // namespace

TEST(MeanLogprob, Examples) {
  EXPECT_DOUBLE_EQ(mean_logprob(cand({-1.0, -1.0, -1.0})), -1.0);
  EXPECT_DOUBLE_EQ(mean_logprob(cand({-0.5})), -0.5);
  EXPECT_NEAR(mean_logprob(cand({-0.1, -2.0, -0.9})), -1.0, 1e-12);
}

TEST(MeanLogprob, RejectsInvalid) {
  EXPECT_THROW(mean_logprob(cand({})), ContractViolation);
  EXPECT_THROW(mean_logprob(cand({0.1})), ContractViolation);
  EXPECT_THROW(mean_logprob(cand({-INFINITY})), ContractViolation);
  EXPECT_THROW(variance_logprob(cand({NAN})), ContractViolation);
}

TEST(VarianceLogprob, Examples) {
  EXPECT_DOUBLE_EQ(variance_logprob(cand({-1.0, -1.0})), 0.0);
  EXPECT_DOUBLE_EQ(variance_logprob(cand({-0.5})), 0.0);
  EXPECT_NEAR(variance_logprob(cand({-0.1, -2.0, -0.9})), 0.6066666667, 1e-9);
}

TEST(MinmaxNormalize, Examples) {
  const std::vector<double> flat{3, 3, 3};
  for (double v : minmax_normalize(flat)) EXPECT_EQ(v, 0.0);
  const std::vector<double> ends{0, 1};
  const auto e = minmax_normalize(ends);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_DOUBLE_EQ(e[1], 1.0 / (1.0 + 1e-8));
  const std::vector<double> mixed{-0.1, -1.25, -1.0};
  const auto m = minmax_normalize(mixed);
  EXPECT_NEAR(m[0], 0.99999999130, 1e-10);
  EXPECT_EQ(m[1], 0.0);
  EXPECT_NEAR(m[2], 0.2173913025, 1e-9);
}

TEST(MinmaxNormalize, Preconditions) {
  EXPECT_THROW(minmax_normalize(std::vector<double>{}), ContractViolation);
  EXPECT_THROW(minmax_normalize(std::vector<double>{1.0}, 0.0), ContractViolation);
  EXPECT_THROW(minmax_normalize(std::vector<double>{1.0, NAN}), ContractViolation);
}

TEST(ScoreCandidates, Examples) {
  EXPECT_EQ(score_candidates(cands({{-3.0, -0.1}}))[0], 0.0);

  const auto s = score_candidates(cands({{-0.1, -0.1}, {-2.0, -0.5}, {-1.0, -1.0}}));
  ASSERT_EQ(s.size(), 3u);
  EXPECT_NEAR(s[0], 0.8, 1e-7);
  EXPECT_NEAR(s[1], -0.1999999964444445, 1e-12);
  EXPECT_NEAR(s[2], 0.173913042, 1e-8);

  const auto same = score_candidates(cands({{-0.4, -1.2}, {-0.4, -1.2}}));
  EXPECT_EQ(same[0], 0.0);
  EXPECT_EQ(same[1], 0.0);

  EXPECT_THROW(score_candidates(std::vector<CandidateAction>{}), ContractViolation);
  EXPECT_THROW(score_candidates(cands({{-1.0}}), {1.5, 1e-8}), ContractViolation);
}

TEST(LambdaProbabilities, Examples) {
  const auto u = lambda_probabilities(std::vector<double>{0.3, 0.9}, 0.0);
  EXPECT_EQ(u.probs[0], 0.5);
  EXPECT_EQ(u.probs[1], 0.5);

  const auto two = lambda_probabilities(std::vector<double>{1.0, 0.0}, std::numbers::ln2);
  EXPECT_NEAR(two.probs[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(two.probs[1], 1.0 / 3.0, 1e-12);

  // Direct evaluation of the softmax for this input.
  const auto d = lambda_probabilities(std::vector<double>{0.8, -0.2, 0.1739}, 5.0);
  EXPECT_NEAR(d.probs[0], 0.9519875632, 1e-9);
  EXPECT_NEAR(d.probs[1], 0.0064144417, 1e-9);
  EXPECT_NEAR(d.probs[2], 0.0415979951, 1e-9);
  EXPECT_EQ(d.lambda, 5.0);
  EXPECT_EQ(d.scores.size(), 3u);

  EXPECT_THROW(lambda_probabilities(std::vector<double>{0.1}, -1.0), ContractViolation);
  EXPECT_THROW(lambda_probabilities(std::vector<double>{}, 1.0), ContractViolation);
}

TEST(SampleCategorical, Degenerate) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = make_rng(seed);
    EXPECT_EQ(sample_categorical({{0.0}, 1.0, {1.0}}, rng), 0u);
    EXPECT_EQ(sample_categorical({{0.0, 0.0}, 1.0, {0.0, 1.0}}, rng), 1u);
  }
}

TEST(SampleCategorical, FairCoinFrequency) {
  auto rng = make_rng(7);
  const LambdaDistribution d{{0.0, 0.0}, 0.0, {0.5, 0.5}};
  int ones = 0;
  for (int i = 0; i < 10000; ++i) ones += static_cast<int>(sample_categorical(d, rng));
  EXPECT_NEAR(ones / 10000.0, 0.5, 0.02);
}

TEST(SampleCategorical, DeterministicGivenSeed) {
  const LambdaDistribution d{{0, 0, 0}, 0.0, {0.2, 0.3, 0.5}};
  auto a = make_rng(99), b = make_rng(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_categorical(d, a), sample_categorical(d, b));
}

class ScoringProperties : public ::testing::Test {
 protected:
  std::mt19937_64 gen{12345};

  std::vector<std::vector<double>> random_set() {
    std::uniform_int_distribution<int> n_cands(2, 20), n_tokens(1, 30);
    std::uniform_real_distribution<double> lp(-5.0, 0.0);
    std::vector<std::vector<double>> set(static_cast<std::size_t>(n_cands(gen)));
    for (auto& c : set) {
      c.resize(static_cast<std::size_t>(n_tokens(gen)));
      for (auto& x : c) x = lp(gen);
    }
    return set;
  }
};

TEST_F(ScoringProperties, OracleEquivalence) {
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto set = random_set();
    const double alpha = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    const auto got = score_candidates(cands(set), {alpha, 1e-8});
    const auto want = oracle::scores(set, alpha);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST_F(ScoringProperties, BoundsAndNormalization) {
  for (int trial = 0; trial < 300; ++trial) {
    const auto set = random_set();
    const auto s = score_candidates(cands(set));
    for (double x : s) {
      EXPECT_GE(x, -0.2 - 1e-12);
      EXPECT_LE(x, 0.8 + 1e-12);
    }
    for (double lambda : {0.0, 0.1, 1.0, 5.0, 40.0, 1e6}) {
      const auto d = lambda_probabilities(s, lambda);
      double sum = 0;
      for (double p : d.probs) {
        EXPECT_GE(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST_F(ScoringProperties, SoftmaxMatchesOracle) {
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = score_candidates(cands(random_set()));
    for (double lambda : {0.0, 0.5, 5.0, 40.0}) {
      const auto got = lambda_probabilities(s, lambda).probs;
      const auto want = oracle::softmax(s, lambda);
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
    }
  }
}

TEST_F(ScoringProperties, ArgmaxPreservedAndSharpening) {
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = score_candidates(cands(random_set()));
    auto sorted = s;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
    const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    double prev = 1.0 / static_cast<double>(s.size());
    for (double lambda : {0.1, 1.0, 5.0, 20.0, 40.0}) {
      const auto p = lambda_probabilities(s, lambda).probs;
      EXPECT_EQ(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()), best);
      EXPECT_GT(p[best], prev);
      prev = p[best];
    }
  }
}

TEST_F(ScoringProperties, PermutationEquivariance) {
  for (int trial = 0; trial < 200; ++trial) {
    auto set = random_set();
    const auto s = score_candidates(cands(set));
    std::vector<std::size_t> perm(set.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<std::vector<double>> shuffled;
    for (auto i : perm) shuffled.push_back(set[i]);
    const auto s2 = score_candidates(cands(shuffled));
    const auto p = lambda_probabilities(s, 5.0).probs;
    const auto p2 = lambda_probabilities(s2, 5.0).probs;
    for (std::size_t j = 0; j < perm.size(); ++j) {
      EXPECT_DOUBLE_EQ(s2[j], s[perm[j]]);
      EXPECT_NEAR(p2[j], p[perm[j]], 1e-14);
    }
  }
}

TEST_F(ScoringProperties, ShiftInvariance) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(8);
    for (auto& x : s) x = u(gen);
    const double c = 10.0 * u(gen);
    auto shifted = s;
    for (auto& x : shifted) x += c;
    const auto a = lambda_probabilities(s, 3.0).probs;
    const auto b = lambda_probabilities(shifted, 3.0).probs;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(LambdaProbabilities, ZeroIsExactlyUniform) {
  const std::vector<double> s{0.8, -0.2, 0.17, 0.5, 0.0, -0.1, 0.33};
  for (double p : lambda_probabilities(s, 0.0).probs) EXPECT_EQ(p, 1.0 / 7.0);
}

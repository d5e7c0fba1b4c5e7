#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "versavid/grpo.hpp"
#include "versavid/toy_policy.hpp"

using namespace versavid;

namespace {

const std::vector<std::string> kAbc = {"a", "b", "c", "<eos>"};

/// Rollout sampled from `old`, optionally with a reference policy's logprobs.
GroupRollout make_group(const ToyPolicy& old, std::size_t g, std::uint64_t seed,
                        const ToyPolicy* ref = nullptr) {
  GroupRollout group;
  std::mt19937_64 rng(seed ^ 0x5555);
  for (const auto& s : sample_responses(old, g, 1.0, seed)) {
    group.responses.push_back(s.tokens);
    group.old_logprobs.push_back(s.logprob);
    group.rewards.push_back(static_cast<double>(rng() % 3));
  }
  if (ref) {
    std::vector<double> r;
    for (const auto& t : group.responses) r.push_back(sequence_logprob(*ref, t));
    group.ref_logprobs = r;
  }
  return group;
}

}  // namespace

TEST(Advantages, HandValues) {
  auto a = compute_advantages(std::vector<double>{1, 0, 0, 1});
  EXPECT_FALSE(a.degenerate);
  EXPECT_EQ(a.values, (std::vector<double>{1, -1, -1, 1}));

  a = compute_advantages(std::vector<double>{1, 1, 1, 1});
  EXPECT_TRUE(a.degenerate);
  EXPECT_EQ(a.values, (std::vector<double>{0, 0, 0, 0}));

  a = compute_advantages(std::vector<double>{2, 1, 0});
  EXPECT_NEAR(a.values[0], 1.2247, 1e-4);
  EXPECT_EQ(a.values[1], 0.0);
  EXPECT_NEAR(a.values[2], -1.2247, 1e-4);
}

TEST(Advantages, FloorAndSize) {
  EXPECT_TRUE(compute_advantages(std::vector<double>{1.0, 1.0 + 1e-10}).degenerate);
  EXPECT_THROW(compute_advantages(std::vector<double>{1.0}), Error);
}

TEST(Policy, SequenceLogprob) {
  const ToyPolicy p(kAbc, 3, Conditioning::PreviousToken, 3);
  EXPECT_NEAR(sequence_logprob(p, TokenSequence{0, 1, 2}), 3 * std::log(0.25), 1e-12);
  EXPECT_EQ(sequence_logprob(p, TokenSequence{}), 0.0);
  EXPECT_NEAR(sequence_logprob(p, std::vector<std::string>{"b", "<eos>"}), 2 * std::log(0.25), 1e-12);
  EXPECT_THROW(sequence_logprob(p, std::vector<std::string>{"z"}), Error);

  ToyPolicy two({"x", "y"}, 1, Conditioning::Position, std::nullopt);
  two.params()[0] += 1.0;
  EXPECT_NEAR(sequence_logprob(two, TokenSequence{0}), std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-12);
}

TEST(Policy, LogprobGradientMatchesFiniteDifferences) {
  const auto p = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 9);
  const TokenSequence seq{2, 0, 3};
  std::vector<double> grad(p.param_count(), 0.0);
  accumulate_logprob_gradient(p, seq, 0.7, 1.0, grad);
  ToyPolicy probe = p;
  for (std::size_t k = 0; k < grad.size(); ++k) {
    const double orig = probe.params()[k];
    probe.params()[k] = orig + 1e-6;
    const double up = sequence_logprob(probe, seq, 0.7);
    probe.params()[k] = orig - 1e-6;
    const double down = sequence_logprob(probe, seq, 0.7);
    probe.params()[k] = orig;
    EXPECT_NEAR(grad[k], (up - down) / 2e-6, 1e-7);
  }
}

TEST(Sampling, DeterministicAndStopsAtEos) {
  const auto p = ToyPolicy::random(kAbc, 5, Conditioning::PreviousToken, 3, 1);
  const auto a = sample_responses(p, 16, 1.0, 42);
  const auto b = sample_responses(p, 16, 1.0, 42);
  ASSERT_EQ(a.size(), 16u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].tokens, b[i].tokens);
    EXPECT_EQ(a[i].logprob, b[i].logprob);
    EXPECT_LE(a[i].tokens.size(), 5u);
    for (std::size_t k = 0; k + 1 < a[i].tokens.size(); ++k) EXPECT_NE(a[i].tokens[k], 3u);
    EXPECT_NEAR(a[i].logprob, sequence_logprob(p, a[i].tokens), 1e-12);
  }
  EXPECT_THROW(sample_responses(p, 1, 1.0, 0), Error);
}

TEST(Sampling, NearZeroTemperatureIsGreedy) {
  const auto p = ToyPolicy::random(kAbc, 4, Conditioning::PreviousToken, 3, 5, 2.0);
  TokenSequence greedy;
  std::optional<std::size_t> prev;
  for (std::size_t pos = 0; pos < 4; ++pos) {
    const auto lp = p.log_probs(p.row_index(pos, prev));
    const auto best = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    greedy.push_back(best);
    prev = best;
    if (best == 3) break;
  }
  for (const auto& s : sample_responses(p, 50, 1e-6, 8)) EXPECT_EQ(s.tokens, greedy);
}

TEST(Sampling, UniformFrequenciesWithinThreeSigma) {
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e"};
  const ToyPolicy p(alphabet, 1, Conditioning::Position, std::nullopt);
  const std::size_t g = 10000;
  std::vector<double> counts(alphabet.size(), 0.0);
  for (const auto& s : sample_responses(p, g, 1.0, 2024)) counts[s.tokens.at(0)] += 1;
  const double pv = 1.0 / 5.0;
  const double sigma = std::sqrt(g * pv * (1 - pv));
  for (double c : counts) EXPECT_LT(std::abs(c - g * pv), 3 * sigma);
}

TEST(Ratio, Values) {
  EXPECT_EQ(importance_ratio(-1.5, -1.5).value, 1.0);
  EXPECT_NEAR(importance_ratio(std::log(2.0) - 3, -3).value, 2.0, 1e-12);
  const auto r = importance_ratio(50, 0);
  EXPECT_TRUE(r.clamped);
  EXPECT_EQ(r.value, std::exp(20.0));
  EXPECT_TRUE(importance_ratio(-50, 0).clamped);
}

TEST(Kl, Values) {
  EXPECT_EQ(kl_estimate(-2.0, -2.0), 0.0);
  // r = exp(ref - new)
  EXPECT_NEAR(kl_estimate(0.0, std::log(2.0)), 0.3069, 1e-4);
  EXPECT_NEAR(kl_estimate(0.0, std::log(0.5)), 0.1931, 1e-4);
  EXPECT_NEAR(kl_estimate(0.0, std::log(2.0)), 2.0 - std::log(2.0) - 1.0, 1e-15);
}

TEST(Objective, IdentityAtOldPolicy) {
  const auto p = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 4);
  auto g = make_group(p, 8, 4);
  g.rewards = {0, 1, 2, 0, 1, 2, 0, 1};
  const auto rep = grpo_objective(g, p, GrpoConfig{});
  EXPECT_NEAR(rep.surrogate, 0.0, 1e-12);
  EXPECT_NEAR(rep.objective, 0.0, 1e-12);
  EXPECT_EQ(rep.clipped_fraction, 0.0);
}

TEST(Objective, ClipBranches) {
  // Two-response group with rewards (1, 0): advantages (+1, -1).
  ToyPolicy p({"x", "y"}, 1, Conditioning::Position, std::nullopt);
  GroupRollout g;
  g.responses = {{0}, {1}};
  g.rewards = {1, 0};
  const double lp0 = sequence_logprob(p, TokenSequence{0});
  const double lp1 = sequence_logprob(p, TokenSequence{1});
  // Response 0 has ratio 2 and A = +1; response 1 has ratio 0.5 and A = -1.
  g.old_logprobs = {lp0 - std::log(2.0), lp1 - std::log(0.5)};
  const auto rep = grpo_objective(g, p, GrpoConfig{});
  EXPECT_NEAR(rep.surrogate, (1.2 + -0.8) / 2.0, 1e-12);
  EXPECT_EQ(rep.clipped_fraction, 1.0);
  // Both responses sit on the clipped branch, so the surrogate is flat.
  for (double v : grpo_gradient(g, p, GrpoConfig{})) EXPECT_EQ(v, 0.0);
}

TEST(Objective, MissingReferenceWithKl) {
  const auto p = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 4);
  auto g = make_group(p, 4, 1);
  GrpoConfig c;
  c.kl_lambda = 0.1;
  try {
    grpo_objective(g, p, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingReference);
  }
}

TEST(Gradient, DegenerateGroupWithoutKlIsZero) {
  const auto p = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 4);
  auto g = make_group(p, 6, 2);
  g.rewards.assign(6, 1.0);
  const auto moved = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 5, 0.1);
  for (double v : grpo_gradient(g, moved, GrpoConfig{})) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(finite_difference_check(g, moved, GrpoConfig{}, 1e-5), 0.0);
}

TEST(Gradient, IndependentOfReferenceWhenLambdaZero) {
  const auto old = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 4, 0.3);
  const auto ref = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 6, 0.3);
  const auto cur = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 7, 0.3);
  auto g = make_group(old, 8, 3, &ref);
  const auto base = grpo_gradient(g, cur, GrpoConfig{});
  for (auto& r : *g.ref_logprobs) r -= 0.7;
  EXPECT_EQ(grpo_gradient(g, cur, GrpoConfig{}), base);
}

TEST(Gradient, MatchesFiniteDifferencesAcrossLambda) {
  for (double lambda : {0.0, 0.05, 0.1}) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const auto old = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, seed, 0.5);
      const auto ref = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, seed + 100, 0.5);
      auto cur = old;
      // Small move keeps ratios inside the clip window.
      for (auto& x : cur.params()) x += 0.01 * std::sin(static_cast<double>(&x - cur.params().data()) + seed);
      const auto g = make_group(old, 8, seed, &ref);
      GrpoConfig c;
      c.kl_lambda = lambda;
      EXPECT_LT(finite_difference_check(g, cur, c, 1e-5), 1e-5) << "lambda " << lambda << " seed " << seed;
    }
  }
}

TEST(Gradient, CoarseStepFailsTheCheck) {
  const auto old = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 2, 0.5);
  const auto ref = ToyPolicy::random(kAbc, 3, Conditioning::PreviousToken, 3, 3, 0.5);
  const auto g = make_group(old, 8, 2, &ref);
  GrpoConfig c;
  c.kl_lambda = 0.1;
  EXPECT_GT(finite_difference_check(g, old, c, 1e-1), 1e-5);
}

TEST(Update, Step) {
  const auto p = ToyPolicy::random(kAbc, 2, Conditioning::PreviousToken, 3, 1);
  const std::vector<double> zero(p.param_count(), 0.0), ones(p.param_count(), 1.0);
  const auto a = update_step(p, zero, 0.5);
  const auto b = update_step(p, ones, 0.0);
  const auto c = update_step(p, ones, 0.1);
  for (std::size_t i = 0; i < p.param_count(); ++i) {
    EXPECT_EQ(a.params()[i], p.params()[i]);
    EXPECT_EQ(b.params()[i], p.params()[i]);
    EXPECT_NEAR(c.params()[i], p.params()[i] + 0.1, 1e-15);
  }
  EXPECT_THROW(update_step(p, std::vector<double>(3, 0.0), 0.1), Error);
}

TEST(GrpoConfigTest, Validation) {
  GrpoConfig c;
  EXPECT_NO_THROW(c.validate());
  c.group_size = 1;
  EXPECT_THROW(c.validate(), Error);
  c = GrpoConfig{};
  c.clip_epsilon = 0;
  EXPECT_THROW(c.validate(), Error);
  c = GrpoConfig{};
  c.kl_lambda = -0.1;
  EXPECT_THROW(c.validate(), Error);
}

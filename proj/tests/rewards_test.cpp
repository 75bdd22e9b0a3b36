#include "cag/rewards.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace cag {
namespace {

TEST(RewardVeriscore, ThreeTermSum) {
  RewardConfig cfg;
  cfg.lambda_detail = 0.1;
  cfg.mu_rel = 0.0;
  EXPECT_DOUBLE_EQ(reward_veriscore(0, 0, 0, cfg), 0.0);
  EXPECT_NEAR(reward_veriscore(0.8, 9, 0, cfg), 0.8 + 0.1 * std::log(10.0),
              1e-12);
  EXPECT_NEAR(reward_veriscore(0.8, 9, 0, cfg), 1.03026, 1e-5);

  cfg.mu_rel = 0.5;
  EXPECT_DOUBLE_EQ(reward_veriscore(1, 0, 1, cfg), 1.5);  // ln 1 = 0
  EXPECT_THROW(reward_veriscore(1.2, 0, 0, cfg), Error);
  EXPECT_THROW(reward_veriscore(0.5, -1, 0, cfg), Error);
}

TEST(RewardBinaryRar, IndicatorSemantics) {
  EXPECT_DOUBLE_EQ(reward_binary_rar(false), 1.0);
  EXPECT_DOUBLE_EQ(reward_binary_rar(true), 0.0);
  EXPECT_DOUBLE_EQ(reward_binary_rar(false), reward_binary_rar(false));
}

TEST(GroupAdvantages, HandComputedCases) {
  auto two = group_advantages({1, 0});
  ASSERT_EQ(two.size(), 2u);
  EXPECT_DOUBLE_EQ(two[0], 1.0);
  EXPECT_DOUBLE_EQ(two[1], -1.0);

  auto flat = group_advantages({3.5, 3.5, 3.5});
  for (double a : flat) EXPECT_DOUBLE_EQ(a, 0.0);

  auto four = group_advantages({2, 0, 1, 1});
  ASSERT_EQ(four.size(), 4u);
  EXPECT_NEAR(four[0], std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(four[1], -std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(four[2], 0.0, 1e-12);
  EXPECT_NEAR(four[3], 0.0, 1e-12);

  EXPECT_THROW(group_advantages({1}), GroupTooSmall);
  EXPECT_THROW(group_advantages({}), GroupTooSmall);
}

TEST(GroupAdvantages, NormalizedMomentsAndInvariances) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t n = 2 + rng() % 15;
    std::vector<double> rewards(n);
    for (double& r : rewards)
      r = static_cast<double>(rng() % 1000) / 100 - 5;
    std::vector<double> adv = group_advantages(rewards);

    double mean = 0, var = 0;
    for (double a : adv) mean += a;
    mean /= static_cast<double>(n);
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= static_cast<double>(n);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    bool degenerate = true;
    for (double r : rewards) degenerate &= r == rewards[0];
    if (!degenerate) EXPECT_NEAR(var, 1.0, 1e-9);

    std::vector<double> shifted = rewards, scaled = rewards;
    for (double& r : shifted) r += 17.5;
    for (double& r : scaled) r *= 3.25;
    std::vector<double> adv_shift = group_advantages(shifted);
    std::vector<double> adv_scale = group_advantages(scaled);
    for (size_t i = 0; i < n; ++i) {
      EXPECT_NEAR(adv_shift[i], adv[i], 1e-9);
      EXPECT_NEAR(adv_scale[i], adv[i], 1e-9);
    }
  }
}

TEST(KlPenalty, ClosedFormAndConvexity) {
  EXPECT_DOUBLE_EQ(kl_penalty(1.0), 0.0);
  EXPECT_NEAR(kl_penalty(2.0), 2 - std::log(2.0) - 1, 1e-15);
  EXPECT_NEAR(kl_penalty(2.0), 0.306853, 1e-6);
  EXPECT_NEAR(kl_penalty(0.5), 0.193147, 1e-6);
  EXPECT_THROW(kl_penalty(0.0), NonpositiveRatio);
  EXPECT_THROW(kl_penalty(-1.0), NonpositiveRatio);

  for (int i = 1; i <= 10000; ++i) {
    const double ratio = i / 2500.0;  // (0, 4]
    const double value = kl_penalty(ratio);
    EXPECT_GE(value, 0.0);
    if (ratio != 1.0) EXPECT_GT(value, 0.0);
  }
}

TEST(GrpoSurrogate, ClipCases) {
  EXPECT_DOUBLE_EQ(grpo_surrogate(1.0, 1.0, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(grpo_surrogate(2.0, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(grpo_surrogate(2.0, -1.0, 0.2), -2.0);
  EXPECT_DOUBLE_EQ(grpo_surrogate(0.5, 1.0, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(grpo_surrogate(0.5, -1.0, 0.2), -0.8);
  EXPECT_THROW(grpo_surrogate(0.0, 1.0, 0.2), NonpositiveRatio);
  EXPECT_THROW(grpo_surrogate(1.0, 1.0, 1.5), Error);
}

TEST(GrpoSurrogate, MatchesBruteForceMin) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 5000; ++i) {
    const double ratio = static_cast<double>(rng() % 4000 + 1) / 1000;
    const double advantage = static_cast<double>(rng() % 2001) / 1000 - 1;
    const double eps = static_cast<double>(rng() % 800 + 100) / 1000;
    const double clipped = std::clamp(ratio, 1 - eps, 1 + eps);
    const double expected = std::min(ratio * advantage, clipped * advantage);
    EXPECT_DOUBLE_EQ(grpo_surrogate(ratio, advantage, eps), expected);
    if (advantage >= 0)
      EXPECT_LE(grpo_surrogate(ratio, advantage, eps), ratio * advantage);
  }
}

TEST(CapdKl, HandCases) {
  EXPECT_DOUBLE_EQ(capd_kl({0.5, 0.5}, {0.5, 0.5}), 0.0);
  EXPECT_NEAR(capd_kl({1, 0}, {0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_THROW(capd_kl({0.5, 0.5}, {1, 0}), SupportMismatch);
  EXPECT_THROW(capd_kl({0.5, 0.5}, {0.5, 0.5, 0.0}), LengthMismatch);
  EXPECT_THROW(capd_kl({}, {}), LengthMismatch);
  EXPECT_THROW(capd_kl({0.6, 0.6}, {0.5, 0.5}), NotNormalized);
  EXPECT_THROW(capd_kl({-0.5, 1.5}, {0.5, 0.5}), NotNormalized);
}

TEST(CapdKl, GibbsInequalityOnRandomPairs) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const size_t dim = 2 + rng() % 31;
    std::vector<double> student(dim), teacher(dim);
    double s_sum = 0, t_sum = 0;
    for (size_t i = 0; i < dim; ++i) {
      student[i] = static_cast<double>(rng() % 1000 + 1);
      teacher[i] = static_cast<double>(rng() % 1000 + 1);
      s_sum += student[i];
      t_sum += teacher[i];
    }
    for (size_t i = 0; i < dim; ++i) {
      student[i] /= s_sum;
      teacher[i] /= t_sum;
    }
    const double kl = capd_kl(student, teacher);
    EXPECT_GE(kl, -1e-12);

    double oracle = 0;
    for (size_t i = 0; i < dim; ++i)
      if (student[i] > 0) oracle += student[i] * std::log(student[i] / teacher[i]);
    EXPECT_NEAR(kl, oracle, 1e-12);

    EXPECT_NEAR(capd_kl(student, student), 0.0, 1e-12);
  }
}

TEST(RolloutJson, RoundTrip) {
  GroupRollout rollout{"p1", {1.0, 0.0, 0.5}, std::nullopt};
  ojson j = rollout_to_json(rollout);
  EXPECT_FALSE(j.contains("advantages"));
  GroupRollout back = rollout_from_json(j);
  EXPECT_EQ(back.prompt_id, "p1");
  EXPECT_EQ(back.rewards, rollout.rewards);
  EXPECT_FALSE(back.advantages.has_value());

  rollout.advantages = group_advantages(rollout.rewards);
  ojson j2 = rollout_to_json(rollout);
  GroupRollout back2 = rollout_from_json(j2);
  ASSERT_TRUE(back2.advantages.has_value());
  EXPECT_EQ(*back2.advantages, *rollout.advantages);
}

TEST(RewardConfig, Validation) {
  RewardConfig bad;
  bad.lambda_detail = -0.1;
  EXPECT_THROW(bad.validate(), Error);
  bad = RewardConfig{};
  bad.clip_epsilon = 0;
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_NO_THROW(RewardConfig{}.validate());
}

}  // namespace
}  // namespace cag

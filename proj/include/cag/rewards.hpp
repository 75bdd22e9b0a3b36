#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cag/errors.hpp"
#include "cag/trace.hpp"

namespace cag {

struct RewardConfig {
  double lambda_detail = 0.1;  // weight on the log-detail term
  double mu_rel = 0.0;         // weight on the relevance term
  double clip_epsilon = 0.2;
  double kl_beta = 0.0;

  void validate() const {
    if (lambda_detail < 0 || mu_rel < 0 || kl_beta < 0)
      throw Error("reward weights must be nonnegative");
    if (!(clip_epsilon > 0 && clip_epsilon < 1))
      throw Error("clip_epsilon must lie in (0,1)");
  }
};

struct GroupRollout {
  std::string prompt_id;
  std::vector<double> rewards;
  std::optional<std::vector<double>> advantages;
};

/// r = R_fact + lambda * ln(1 + supported) + mu * R_rel. The log term keeps
/// detail from collapsing to a single safe claim.
inline double reward_veriscore(double r_fact, long f_supported, double r_rel,
                               const RewardConfig& cfg) {
  cfg.validate();
  if (!(r_fact >= 0 && r_fact <= 1) || !(r_rel >= 0 && r_rel <= 1))
    throw Error("r_fact and r_rel must lie in [0,1]");
  if (f_supported < 0) throw Error("supported count must be nonnegative");
  return r_fact + cfg.lambda_detail * std::log(1.0 + static_cast<double>(f_supported)) +
         cfg.mu_rel * r_rel;
}

inline double reward_binary_rar(bool contradiction_found) {
  return contradiction_found ? 0.0 : 1.0;
}

/// Group-relative advantages: per-group z-scores with population (divide by
/// n) standard deviation. A zero-spread group yields all-zero advantages
/// rather than an error.
inline std::vector<double> group_advantages(const std::vector<double>& rewards) {
  const size_t n = rewards.size();
  if (n < 2) throw GroupTooSmall("advantage normalization needs n >= 2");
  double mean = 0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double variance = 0;
  for (double r : rewards) variance += (r - mean) * (r - mean);
  variance /= static_cast<double>(n);
  const double std_dev = std::sqrt(variance);
  std::vector<double> advantages(n, 0.0);
  if (std_dev == 0) return advantages;
  for (size_t i = 0; i < n; ++i) advantages[i] = (rewards[i] - mean) / std_dev;
  return advantages;
}

/// ratio - ln(ratio) - 1: nonnegative, zero only for identical policies.
inline double kl_penalty(double ratio) {
  if (!(ratio > 0)) throw NonpositiveRatio("kl_penalty requires ratio > 0");
  return ratio - std::log(ratio) - 1.0;
}

/// min(ratio * A, clip(ratio, 1-eps, 1+eps) * A) for one token.
inline double grpo_surrogate(double ratio, double advantage,
                             double clip_epsilon) {
  if (!(ratio > 0)) throw NonpositiveRatio("grpo_surrogate requires ratio > 0");
  if (!(clip_epsilon > 0 && clip_epsilon < 1))
    throw Error("clip_epsilon must lie in (0,1)");
  const double clipped =
      std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

/// KL(student || teacher) over one token position. Zero student mass
/// contributes nothing; student mass where the teacher has none is the
/// distillation failure mode and is rejected.
inline double capd_kl(const std::vector<double>& student,
                      const std::vector<double>& teacher) {
  if (student.size() != teacher.size())
    throw LengthMismatch("student and teacher vectors differ in length");
  if (student.empty()) throw LengthMismatch("distributions must be non-empty");
  double student_sum = 0, teacher_sum = 0;
  for (double p : student) {
    if (p < 0) throw NotNormalized("student entries must be nonnegative");
    student_sum += p;
  }
  for (double q : teacher) {
    if (q < 0) throw NotNormalized("teacher entries must be nonnegative");
    teacher_sum += q;
  }
  if (std::abs(student_sum - 1.0) > 1e-9 || std::abs(teacher_sum - 1.0) > 1e-9)
    throw NotNormalized("distributions must sum to 1 within 1e-9");
  double kl = 0;
  for (size_t i = 0; i < student.size(); ++i) {
    if (student[i] == 0) continue;
    if (teacher[i] == 0)
      throw SupportMismatch("teacher has zero mass where student is positive");
    kl += student[i] * std::log(student[i] / teacher[i]);
  }
  return kl;
}

// Rollout JSONL records: {prompt_id, rewards, advantages?}.

inline ojson rollout_to_json(const GroupRollout& rollout) {
  ojson j;
  j["prompt_id"] = rollout.prompt_id;
  j["rewards"] = rollout.rewards;
  if (rollout.advantages) j["advantages"] = *rollout.advantages;
  return j;
}

inline GroupRollout rollout_from_json(const ojson& j) {
  GroupRollout rollout;
  rollout.prompt_id = j.at("prompt_id").get<std::string>();
  rollout.rewards = j.at("rewards").get<std::vector<double>>();
  if (j.contains("advantages") && !j.at("advantages").is_null())
    rollout.advantages = j.at("advantages").get<std::vector<double>>();
  return rollout;
}

}  // namespace cag

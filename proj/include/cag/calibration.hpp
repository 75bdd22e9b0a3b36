#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "cag/errors.hpp"
#include "cag/trace.hpp"

namespace cag {

// ---------------------------------------------------------------------------
// Bucketing
// ---------------------------------------------------------------------------

struct BucketScheme {
  std::vector<double> thresholds;       // strictly ascending, each in (0,1)
  std::vector<ReliabilityLabel> labels; // one more than thresholds

  static BucketScheme binary(double tau) {
    return {{tau}, {ReliabilityLabel::Unreliable, ReliabilityLabel::Reliable}};
  }

  void validate() const {
    if (labels.size() != thresholds.size() + 1)
      throw Error("BucketScheme needs exactly one more label than thresholds");
    for (size_t i = 0; i < thresholds.size(); ++i) {
      if (!(thresholds[i] > 0 && thresholds[i] < 1))
        throw Error("BucketScheme thresholds must lie in (0,1)");
      if (i > 0 && !(thresholds[i] > thresholds[i - 1]))
        throw Error("BucketScheme thresholds must be strictly ascending");
    }
  }
};

/// Index of the bucket the score falls in: the number of thresholds at or
/// below it, so the boundary s = tau lands in the upper bucket.
inline size_t bucket_index(double score, const BucketScheme& scheme) {
  scheme.validate();
  if (!(score >= 0 && score <= 1)) throw Error("score must lie in [0,1]");
  return static_cast<size_t>(
      std::upper_bound(scheme.thresholds.begin(), scheme.thresholds.end(),
                       score) -
      scheme.thresholds.begin());
}

inline ReliabilityLabel bucket(const std::optional<double>& score,
                               const BucketScheme& scheme) {
  if (!score) return ReliabilityLabel::Nonverifiable;
  return scheme.labels[bucket_index(*score, scheme)];
}

/// Labels every step of a scored trace in place.
inline AnnotatedTrace bucket_trace(AnnotatedTrace trace,
                                   const BucketScheme& scheme) {
  for (ReasoningStep& step : trace.steps) step.label = bucket(step.score, scheme);
  return trace;
}

// ---------------------------------------------------------------------------
// Commit/discard decision theory
// ---------------------------------------------------------------------------

struct DecisionConfig {
  double u1 = 1;       // utility of a correct commit
  double u2 = 1;       // cost of an incorrect commit
  double epsilon = 0;  // proxy accuracy bound

  void validate() const {
    if (!(u1 > 0) || !(u2 > 0)) throw NonpositiveUtility("u1 and u2 must be positive");
    if (!(epsilon >= 0 && epsilon <= 1))
      throw Error("epsilon must lie in [0,1]");
  }
};

inline double bayes_threshold(double u1, double u2) {
  if (!(u1 > 0) || !(u2 > 0))
    throw NonpositiveUtility("bayes_threshold requires positive utilities");
  return u2 / (u1 + u2);
}

inline double expected_utility(double p, bool commit, const DecisionConfig& cfg) {
  cfg.validate();
  if (!(p >= 0 && p <= 1)) throw Error("p must lie in [0,1]");
  return commit ? cfg.u1 * p - cfg.u2 * (1 - p) : 0.0;
}

/// Utility lost by thresholding the proxy s instead of the true posterior p.
/// Zero when both sides of the threshold agree.
inline double regret(double p, double s, const DecisionConfig& cfg) {
  cfg.validate();
  if (!(p >= 0 && p <= 1) || !(s >= 0 && s <= 1))
    throw Error("p and s must lie in [0,1]");
  const double tau = bayes_threshold(cfg.u1, cfg.u2);
  const bool optimal = p >= tau;
  const bool chosen = s >= tau;
  if (optimal == chosen) return 0.0;
  return (cfg.u1 + cfg.u2) * std::abs(p - tau);
}

struct RegretReport {
  long trials = 0;
  double max_regret = 0;
  double bound = 0;  // (u1+u2) * epsilon
  long violations = 0;
};

/// Uniform in [0,1) from the raw 64-bit stream; bit-identical across
/// platforms, unlike std::uniform_real_distribution.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Samples p ~ U[0,1) and an epsilon-accurate proxy s, then checks the
/// regret bound per trial. Violations are reported, never thrown.
inline RegretReport simulate_regret(const DecisionConfig& cfg, long trials,
                                    std::uint64_t seed) {
  cfg.validate();
  if (trials < 1) throw Error("trials must be at least 1");
  RegretReport report;
  report.trials = trials;
  report.bound = (cfg.u1 + cfg.u2) * cfg.epsilon;
  std::mt19937_64 rng(seed);
  for (long i = 0; i < trials; ++i) {
    const double p = unit_draw(rng);
    const double noise = (2 * unit_draw(rng) - 1) * cfg.epsilon;
    const double s = std::clamp(p + noise, 0.0, 1.0);
    const double r = regret(p, s, cfg);
    report.max_regret = std::max(report.max_regret, r);
    if (r > report.bound) ++report.violations;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Threshold grid search
// ---------------------------------------------------------------------------

struct GridSearchResult {
  double best_threshold = 0;
  std::vector<std::pair<double, double>> table;  // (threshold, score), input order
};

/// Evaluates every candidate and returns the argmax; ties go to the smaller
/// threshold regardless of input order.
inline GridSearchResult grid_search_threshold(
    const std::vector<double>& candidates,
    const std::function<double(double)>& evaluate) {
  if (candidates.empty()) throw Error("grid search needs at least one candidate");
  GridSearchResult result;
  double best_score = 0;
  bool seen_any = false;
  for (double tau : candidates) {
    const double score = evaluate(tau);
    result.table.emplace_back(tau, score);
    if (!seen_any || score > best_score ||
        (score == best_score && tau < result.best_threshold)) {
      seen_any = true;
      best_score = score;
      result.best_threshold = tau;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Calibration AUC
// ---------------------------------------------------------------------------

/// Rank-based AUC: probability a random positive outranks a random negative,
/// ties counting one half. Equals Mann-Whitney U / (n_pos * n_neg).
inline double auc(const std::vector<std::pair<double, bool>>& pairs) {
  long n_pos = 0;
  for (const auto& [value, positive] : pairs)
    if (positive) ++n_pos;
  const long n_neg = static_cast<long>(pairs.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw DegenerateLabels("auc needs at least one positive and one negative");

  std::vector<std::pair<double, bool>> sorted = pairs;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double rank_sum_pos = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
    for (size_t k = i; k < j; ++k)
      if (sorted[k].second) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1) / 2;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// Label-flip interventions
// ---------------------------------------------------------------------------

enum class FlipDirection { UnrelToRel, RelToUnrel };

inline FlipDirection flip_direction_from_name(const std::string& name) {
  if (name == "unrel-to-rel") return FlipDirection::UnrelToRel;
  if (name == "rel-to-unrel") return FlipDirection::RelToUnrel;
  throw Error("unknown flip direction: " + name);
}

struct InterventionConfig {
  double lambda = 0;
  FlipDirection direction = FlipDirection::UnrelToRel;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda >= 0 && lambda <= 1)) throw Error("lambda must lie in [0,1]");
  }
};

/// One uniform draw per step in index order, consumed whether or not the
/// step's label can flip, so flip sets are nested across lambda values at a
/// fixed seed. Nonverifiable never changes.
inline AnnotatedTrace flip_labels(const AnnotatedTrace& trace,
                                  const InterventionConfig& cfg) {
  cfg.validate();
  AnnotatedTrace out = trace;
  std::mt19937_64 rng(cfg.seed);
  for (ReasoningStep& step : out.steps) {
    if (!step.label)
      throw UnlabeledStep("step " + std::to_string(step.index) + " is unlabeled");
    const double u = unit_draw(rng);
    if (u >= cfg.lambda) continue;
    if (cfg.direction == FlipDirection::UnrelToRel &&
        *step.label == ReliabilityLabel::Unreliable)
      step.label = ReliabilityLabel::Reliable;
    else if (cfg.direction == FlipDirection::RelToUnrel &&
             *step.label == ReliabilityLabel::Reliable)
      step.label = ReliabilityLabel::Unreliable;
  }
  return out;
}

}  // namespace cag

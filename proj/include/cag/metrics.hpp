#pragma once

#include <algorithm>
#include <vector>

#include "cag/errors.hpp"
#include "cag/text.hpp"
#include "cag/trace.hpp"

namespace cag {

// ---------------------------------------------------------------------------
// VeriScore
// ---------------------------------------------------------------------------

inline double precision(long supported, long total) {
  if (total == 0) throw NoClaims("precision undefined for zero claims");
  if (supported < 0 || supported > total)
    throw Error("supported must lie in [0, total]");
  return static_cast<double>(supported) / static_cast<double>(total);
}

inline double recall(long supported, double k) {
  if (!(k > 0)) throw NonpositiveK("recall requires k > 0");
  if (supported < 0) throw Error("supported must be nonnegative");
  return std::min(static_cast<double>(supported) / k, 1.0);
}

/// Zero whenever nothing is supported; otherwise the harmonic mean.
inline double f1(double p, double r, long supported) {
  if (!(p >= 0 && p <= 1) || !(r >= 0 && r <= 1))
    throw Error("precision and recall must lie in [0,1]");
  if (supported == 0) return 0.0;
  return 2 * p * r / (p + r);
}

/// Median supported-claim count; the midpoint of the two central order
/// statistics for even lengths.
inline double estimate_k(std::vector<long> supported_counts) {
  if (supported_counts.empty())
    throw EmptyDomain("estimate_k needs at least one response");
  std::sort(supported_counts.begin(), supported_counts.end());
  const size_t n = supported_counts.size();
  double median;
  if (n % 2 == 1) {
    median = static_cast<double>(supported_counts[n / 2]);
  } else {
    median = (static_cast<double>(supported_counts[n / 2 - 1]) +
              static_cast<double>(supported_counts[n / 2])) /
             2;
  }
  if (!(median > 0))
    throw AllZero("median supported count is zero; recall would be undefined");
  return median;
}

struct VeriScoreResult {
  long supported = 0;
  long total_claims = 0;
  double k = 1;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// A response with zero claims scores 0 across the board rather than
/// erroring; every other field follows the component definitions.
inline VeriScoreResult veriscore(long supported, long total_claims, double k) {
  if (!(k > 0)) throw NonpositiveK("veriscore requires k > 0");
  VeriScoreResult result;
  result.supported = supported;
  result.total_claims = total_claims;
  result.k = k;
  if (total_claims == 0) return result;
  result.precision = precision(supported, total_claims);
  result.recall = recall(supported, k);
  result.f1 = f1(result.precision, result.recall, supported);
  return result;
}

// ---------------------------------------------------------------------------
// Efficiency deltas
// ---------------------------------------------------------------------------

struct EfficiencyDelta {
  double think_delta = 0;   // signed percentages, (new - baseline)/baseline * 100
  double answer_delta = 0;
  double total_delta = 0;
  double time_delta = 0;
  bool approximate_tokens = false;  // counts were whitespace estimates
};

namespace detail {

struct GroupMeans {
  double think = 0;
  double answer = 0;
  double total = 0;
  double wall = 0;
};

inline GroupMeans group_means(const std::vector<AnnotatedTrace>& traces,
                              const char* which) {
  if (traces.empty())
    throw MissingDecodeStats(std::string(which) + " group is empty");
  GroupMeans means;
  for (const AnnotatedTrace& trace : traces) {
    if (!trace.decode_stats)
      throw MissingDecodeStats("trace " + trace.query.id +
                               " carries no decode stats");
    means.think += static_cast<double>(trace.decode_stats->think_tokens);
    means.answer += static_cast<double>(trace.decode_stats->answer_tokens);
    means.wall += trace.decode_stats->wall_seconds;
  }
  const double n = static_cast<double>(traces.size());
  means.think /= n;
  means.answer /= n;
  means.wall /= n;
  means.total = means.think + means.answer;
  return means;
}

inline double pct_delta(double treated, double baseline, const char* what) {
  if (!(baseline > 0))
    throw Error(std::string("baseline mean ") + what + " must be positive");
  return (treated - baseline) / baseline * 100;
}

}  // namespace detail

/// Group means first, percentage deltas second. Wall time is exempt from
/// the positive-baseline rule only when both groups report zero time (all
/// counts synthesized), in which case the delta is zero.
inline EfficiencyDelta efficiency_stats(
    const std::vector<AnnotatedTrace>& baseline,
    const std::vector<AnnotatedTrace>& treated,
    bool approximate_tokens = false) {
  const detail::GroupMeans base = detail::group_means(baseline, "baseline");
  const detail::GroupMeans post = detail::group_means(treated, "treated");
  EfficiencyDelta delta;
  delta.think_delta = detail::pct_delta(post.think, base.think, "think tokens");
  delta.answer_delta =
      detail::pct_delta(post.answer, base.answer, "answer tokens");
  delta.total_delta = detail::pct_delta(post.total, base.total, "total tokens");
  if (base.wall == 0 && post.wall == 0)
    delta.time_delta = 0;
  else
    delta.time_delta = detail::pct_delta(post.wall, base.wall, "wall seconds");
  delta.approximate_tokens = approximate_tokens;
  return delta;
}

/// Whitespace-token stand-in for traces whose backend reported no counts.
/// Wall time is unknowable after the fact and stays zero.
inline DecodeStats whitespace_decode_stats(const AnnotatedTrace& trace,
                                           bool use_projected_answer = false) {
  DecodeStats stats;
  for (const ReasoningStep& step : trace.steps)
    stats.think_tokens += approx_token_count(step.text);
  const std::string& answer = use_projected_answer && trace.projected_answer
                                  ? *trace.projected_answer
                                  : trace.original_answer;
  stats.answer_tokens = approx_token_count(answer);
  return stats;
}

}  // namespace cag

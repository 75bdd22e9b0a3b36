#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cag/errors.hpp"
#include "cag/text.hpp"

#include <json.hpp>

namespace cag {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class Verdict { Supported, Unsupported, Unverified };

enum class ReliabilityLabel { Reliable, Unreliable, Nonverifiable };

/// The serialized token form, e.g. "<reliable>".
inline std::string label_token(ReliabilityLabel label) {
  switch (label) {
    case ReliabilityLabel::Reliable: return "<reliable>";
    case ReliabilityLabel::Unreliable: return "<unreliable>";
    case ReliabilityLabel::Nonverifiable: return "<nonverifiable>";
  }
  return "<nonverifiable>";
}

inline std::string label_name(ReliabilityLabel label) {
  switch (label) {
    case ReliabilityLabel::Reliable: return "reliable";
    case ReliabilityLabel::Unreliable: return "unreliable";
    case ReliabilityLabel::Nonverifiable: return "nonverifiable";
  }
  return "nonverifiable";
}

inline ReliabilityLabel label_from_name(std::string_view name) {
  if (name == "reliable") return ReliabilityLabel::Reliable;
  if (name == "unreliable") return ReliabilityLabel::Unreliable;
  if (name == "nonverifiable") return ReliabilityLabel::Nonverifiable;
  throw UnknownLabelToken(std::string(name));
}

inline ReliabilityLabel label_from_token(std::string_view token) {
  if (token == "<reliable>") return ReliabilityLabel::Reliable;
  if (token == "<unreliable>") return ReliabilityLabel::Unreliable;
  if (token == "<nonverifiable>") return ReliabilityLabel::Nonverifiable;
  throw UnknownLabelToken(std::string(token));
}

inline std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Supported: return "supported";
    case Verdict::Unsupported: return "unsupported";
    case Verdict::Unverified: return "unverified";
  }
  return "unverified";
}

inline Verdict verdict_from_name(std::string_view name) {
  if (name == "supported") return Verdict::Supported;
  if (name == "unsupported") return Verdict::Unsupported;
  if (name == "unverified") return Verdict::Unverified;
  throw MalformedTrace("unknown verdict '" + std::string(name) + "'");
}

struct Query {
  std::string id;
  std::string text;
  bool operator==(const Query&) const = default;
};

struct AtomicClaim {
  std::string text;
  Verdict verdict = Verdict::Unverified;
  std::vector<std::string> evidence_ids;
  bool operator==(const AtomicClaim&) const = default;
};

struct ReasoningStep {
  int index = 0;  // 1-based, contiguous within a trace
  std::string text;
  std::vector<AtomicClaim> claims;
  std::optional<double> score;            // absent when no claims extracted
  std::optional<ReliabilityLabel> label;  // absent until bucketed/annotated
  bool operator==(const ReasoningStep&) const = default;
};

struct DecodeStats {
  long think_tokens = 0;
  long answer_tokens = 0;
  double wall_seconds = 0.0;
  bool operator==(const DecodeStats&) const = default;
};

struct AnnotatedTrace {
  Query query;
  std::vector<ReasoningStep> steps;
  std::string original_answer;
  std::optional<std::string> projected_answer;
  std::optional<DecodeStats> decode_stats;
  bool operator==(const AnnotatedTrace&) const = default;
};

struct TrainingTuple {
  Query query;
  std::vector<std::pair<std::string, ReliabilityLabel>> steps;
  std::string projected_answer;
  bool operator==(const TrainingTuple&) const = default;
};

// ---------------------------------------------------------------------------
// Tagged text format
//
// <think>STEP_TEXT <label> STEP_TEXT <label></think><answer>ANSWER</answer>
//
// Label tokens follow the step they judge. Unlabeled steps are plain
// sentences; sentence boundaries (see split_steps) delimit them.
// ---------------------------------------------------------------------------

namespace detail {

/// Extracts the content of a "<tag>...</tag>" block starting at `from`.
/// Returns the content and the position just past the close tag.
inline std::pair<std::string, size_t> take_block(std::string_view text,
                                                 std::string_view tag,
                                                 size_t from) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  size_t b = text.find(open, from);
  if (b == std::string_view::npos)
    throw MalformedTrace("missing " + open + " delimiter");
  size_t content = b + open.size();
  size_t e = text.find(close, content);
  if (e == std::string_view::npos)
    throw MalformedTrace("unbalanced " + open + " block");
  if (text.find(open, content) < e)
    throw MalformedTrace("nested " + open + " block");
  return {std::string(text.substr(content, e - content)), e + close.size()};
}

/// True for a candidate label-token span "<word>" (letters, digits, '_', '-').
inline bool looks_like_token(std::string_view s) {
  if (s.size() < 3 || s.front() != '<' || s.back() != '>') return false;
  for (size_t i = 1; i + 1 < s.size(); ++i) {
    char c = s[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
      return false;
  }
  return is_alpha(s[1]);
}

}  // namespace detail

/// Parses the canonical tagged trace text. Reliability tokens delimit the
/// steps they annotate; any text run is further segmented by sentence, the
/// token attaching to the last sentence of its run.
inline AnnotatedTrace parse_trace(std::string_view text) {
  AnnotatedTrace trace;
  auto [think, after_think] = detail::take_block(text, "think", 0);
  auto [answer, after_answer] = detail::take_block(text, "answer", after_think);
  if (!trim(text.substr(0, text.find("<think>"))).empty())
    throw MalformedTrace("content before <think> block");
  if (!trim(text.substr(after_answer)).empty())
    throw MalformedTrace("content after </answer> block");
  trace.original_answer = collapse_whitespace(answer);

  // Scan the think block into (text run, optional label token) pieces.
  size_t pos = 0;
  std::string run;
  auto emit_run = [&](std::optional<ReliabilityLabel> label) {
    std::vector<std::string> sentences = split_steps(run);
    run.clear();
    if (sentences.empty()) {
      if (label)
        throw MalformedTrace("label token without preceding step text");
      return;
    }
    for (size_t i = 0; i < sentences.size(); ++i) {
      ReasoningStep step;
      step.index = static_cast<int>(trace.steps.size()) + 1;
      step.text = std::move(sentences[i]);
      if (label && i + 1 == sentences.size()) step.label = *label;
      trace.steps.push_back(std::move(step));
    }
  };
  while (pos < think.size()) {
    if (think[pos] == '<') {
      size_t close = think.find('>', pos);
      if (close != std::string_view::npos) {
        std::string_view span(think.data() + pos, close - pos + 1);
        if (detail::looks_like_token(span)) {
          emit_run(label_from_token(span));  // throws on unknown tokens
          pos = close + 1;
          continue;
        }
      }
    }
    run.push_back(think[pos]);
    ++pos;
  }
  emit_run(std::nullopt);
  return trace;
}

/// Think-block body: step texts with postfix label tokens. Consecutive
/// unlabeled steps keep a boundary parse_trace can recover.
inline std::string serialize_think(const std::vector<ReasoningStep>& steps) {
  std::string think;
  for (size_t i = 0; i < steps.size(); ++i) {
    const ReasoningStep& step = steps[i];
    if (!think.empty()) {
      char prev_last = think.back();
      bool boundary_survives = prev_last == '>' || prev_last == '.' ||
                               prev_last == '?' || prev_last == '!';
      think.push_back(boundary_survives ? ' ' : '\n');
    }
    think += step.text;
    if (step.label) {
      think.push_back(' ');
      think += label_token(*step.label);
    }
  }
  return think;
}

/// Emits the canonical tagged format.
inline std::string serialize_trace(const AnnotatedTrace& trace) {
  return "<think>" + serialize_think(trace.steps) + "</think>" + "<answer>" +
         trace.original_answer + "</answer>";
}

// ---------------------------------------------------------------------------
// JSONL persistence
// ---------------------------------------------------------------------------

using ojson = nlohmann::ordered_json;

inline ojson claim_to_json(const AtomicClaim& claim) {
  ojson j;
  j["text"] = claim.text;
  j["verdict"] = verdict_name(claim.verdict);
  j["evidence_ids"] = claim.evidence_ids;
  return j;
}

inline AtomicClaim claim_from_json(const ojson& j) {
  AtomicClaim claim;
  claim.text = j.at("text").get<std::string>();
  claim.verdict = verdict_from_name(j.at("verdict").get<std::string>());
  if (j.contains("evidence_ids"))
    claim.evidence_ids = j.at("evidence_ids").get<std::vector<std::string>>();
  return claim;
}

inline ojson trace_to_json(const AnnotatedTrace& trace) {
  ojson j;
  j["query"] = {{"id", trace.query.id}, {"text", trace.query.text}};
  ojson steps = ojson::array();
  for (const ReasoningStep& step : trace.steps) {
    ojson s;
    s["text"] = step.text;
    ojson claims = ojson::array();
    for (const AtomicClaim& claim : step.claims) claims.push_back(claim_to_json(claim));
    s["claims"] = std::move(claims);
    if (step.score) s["score"] = *step.score;
    if (step.label) s["label"] = label_name(*step.label);
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  j["original_answer"] = trace.original_answer;
  if (trace.projected_answer) j["projected_answer"] = *trace.projected_answer;
  if (trace.decode_stats) {
    j["decode_stats"] = {{"think_tokens", trace.decode_stats->think_tokens},
                         {"answer_tokens", trace.decode_stats->answer_tokens},
                         {"wall_seconds", trace.decode_stats->wall_seconds}};
  }
  return j;
}

inline AnnotatedTrace trace_from_json(const ojson& j) {
  AnnotatedTrace trace;
  trace.query.id = j.at("query").at("id").get<std::string>();
  trace.query.text = j.at("query").at("text").get<std::string>();
  int index = 0;
  for (const ojson& s : j.at("steps")) {
    ReasoningStep step;
    step.index = ++index;
    step.text = s.at("text").get<std::string>();
    if (s.contains("claims"))
      for (const ojson& c : s.at("claims")) step.claims.push_back(claim_from_json(c));
    if (s.contains("score") && !s.at("score").is_null())
      step.score = s.at("score").get<double>();
    if (s.contains("label") && !s.at("label").is_null())
      step.label = label_from_name(s.at("label").get<std::string>());
    trace.steps.push_back(std::move(step));
  }
  trace.original_answer = j.at("original_answer").get<std::string>();
  if (j.contains("projected_answer") && !j.at("projected_answer").is_null())
    trace.projected_answer = j.at("projected_answer").get<std::string>();
  if (j.contains("decode_stats") && !j.at("decode_stats").is_null()) {
    const ojson& d = j.at("decode_stats");
    trace.decode_stats = DecodeStats{d.at("think_tokens").get<long>(),
                                     d.at("answer_tokens").get<long>(),
                                     d.at("wall_seconds").get<double>()};
  }
  return trace;
}

inline ojson tuple_to_json(const TrainingTuple& tuple) {
  ojson j;
  j["query"] = {{"id", tuple.query.id}, {"text", tuple.query.text}};
  ojson steps = ojson::array();
  for (const auto& [text, label] : tuple.steps)
    steps.push_back({{"text", text}, {"label", label_name(label)}});
  j["steps"] = std::move(steps);
  j["projected_answer"] = tuple.projected_answer;
  return j;
}

inline TrainingTuple tuple_from_json(const ojson& j) {
  TrainingTuple tuple;
  tuple.query.id = j.at("query").at("id").get<std::string>();
  tuple.query.text = j.at("query").at("text").get<std::string>();
  for (const ojson& s : j.at("steps"))
    tuple.steps.emplace_back(s.at("text").get<std::string>(),
                             label_from_name(s.at("label").get<std::string>()));
  tuple.projected_answer = j.at("projected_answer").get<std::string>();
  return tuple;
}

}  // namespace cag

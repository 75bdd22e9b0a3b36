#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "cag/backends.hpp"
#include "cag/errors.hpp"
#include "cag/jsonl.hpp"
#include "cag/templates.hpp"
#include "cag/text.hpp"
#include "cag/trace.hpp"
#include "cag/verification.hpp"

namespace cag {

// ---------------------------------------------------------------------------
// Prompt filtering (two judge criteria)
// ---------------------------------------------------------------------------

struct FactualJudgment {
  int score = 0;  // 0..5 after clamping
  std::string explanation;
  bool clamped = false;  // the judge replied outside 0..5
};

struct PromptFilterResult {
  int factual_score = 0;
  bool requires_knowledge = false;
  bool keep = false;
  std::string factual_explanation;
  std::string knowledge_explanation;
};

namespace detail {

/// First balanced top-level JSON object embedded in free-form text.
inline std::optional<nlohmann::json> first_json_object(const std::string& text) {
  size_t start = text.find('{');
  while (start != std::string::npos) {
    int depth = 0;
    bool in_string = false, escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          auto parsed = nlohmann::json::parse(
              text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;
        }
      }
    }
    start = text.find('{', start + 1);
  }
  return std::nullopt;
}

/// Bare "field: 7" replies occur in the wild; salvage the integer.
inline std::optional<long> scan_integer_field(const std::string& text,
                                              const std::string& field) {
  size_t at = text.find(field);
  if (at == std::string::npos) return std::nullopt;
  size_t i = at + field.size();
  while (i < text.size() &&
         (text[i] == '"' || text[i] == ':' || text[i] == ' ' || text[i] == '\t'))
    ++i;
  size_t begin = i;
  if (i < text.size() && (text[i] == '-' || text[i] == '+')) ++i;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
    ++i;
  if (i == begin) return std::nullopt;
  return std::stol(text.substr(begin, i - begin));
}

/// One judge call plus one reprompt before giving up on the reply format.
template <typename Parse>
auto judged(ChatBackend& chat, const std::string& model,
            const std::string& prompt, Parse parse) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string content = prompt;
    if (attempt > 0)
      content += "\n\nYour previous reply was not parseable. Return ONLY the "
                 "JSON object requested above.";
    ChatResponse res = chat.complete(user_request(model, content));
    if (auto result = parse(res.text)) return *result;
  }
  throw UnparseableJudgment("judge reply lacks the required JSON object");
}

}  // namespace detail

inline FactualJudgment filter_prompt_factual(const Query& prompt,
                                             ChatBackend& chat,
                                             const std::string& model) {
  if (trim(prompt.text).empty()) throw Error("prompt text must be non-empty");
  const std::string rendered = render_fact_checking(prompt.text);
  return detail::judged(
      chat, model, rendered,
      [](const std::string& reply) -> std::optional<FactualJudgment> {
        long raw;
        std::string explanation;
        if (auto j = detail::first_json_object(reply);
            j && j->contains("factual_score") &&
            (*j)["factual_score"].is_number()) {
          raw = (*j)["factual_score"].get<long>();
          explanation = j->value("explanation", "");
        } else if (auto scanned =
                       detail::scan_integer_field(reply, "factual_score")) {
          raw = *scanned;
        } else {
          return std::nullopt;
        }
        FactualJudgment out;
        out.score = static_cast<int>(std::clamp(raw, 0L, 5L));
        out.clamped = raw < 0 || raw > 5;
        out.explanation = std::move(explanation);
        return out;
      });
}

struct KnowledgeJudgment {
  bool requires_knowledge = false;
  std::string explanation;
};

inline KnowledgeJudgment filter_prompt_requires_knowledge(
    const Query& prompt, ChatBackend& chat, const std::string& model) {
  if (trim(prompt.text).empty()) throw Error("prompt text must be non-empty");
  const std::string rendered = render_knowledge_requirement(prompt.text);
  return detail::judged(
      chat, model, rendered,
      [](const std::string& reply) -> std::optional<KnowledgeJudgment> {
        long raw;
        std::string explanation;
        if (auto j = detail::first_json_object(reply);
            j && j->contains("requires_factual_knowledge") &&
            (*j)["requires_factual_knowledge"].is_number()) {
          raw = (*j)["requires_factual_knowledge"].get<long>();
          explanation = j->value("explanation", "");
        } else if (auto scanned = detail::scan_integer_field(
                       reply, "requires_factual_knowledge")) {
          raw = *scanned;
        } else {
          return std::nullopt;
        }
        if (raw != 0 && raw != 1) return std::nullopt;  // strict domain
        return KnowledgeJudgment{raw == 1, std::move(explanation)};
      });
}

/// keep = (factual_score >= keep_threshold) AND requires_knowledge.
inline PromptFilterResult filter_prompt(const Query& prompt, ChatBackend& chat,
                                        const std::string& model,
                                        int keep_threshold = 4) {
  FactualJudgment factual = filter_prompt_factual(prompt, chat, model);
  KnowledgeJudgment knowledge =
      filter_prompt_requires_knowledge(prompt, chat, model);
  PromptFilterResult result;
  result.factual_score = factual.score;
  result.requires_knowledge = knowledge.requires_knowledge;
  result.keep = factual.score >= keep_threshold && knowledge.requires_knowledge;
  result.factual_explanation = factual.explanation;
  result.knowledge_explanation = knowledge.explanation;
  return result;
}

// ---------------------------------------------------------------------------
// Answer projection
// ---------------------------------------------------------------------------

struct ProjectionOptions {
  // Labels whose steps count as trustworthy vocabulary. Nonverifiable steps
  // never belong here: they carry no factual content by definition.
  std::set<ReliabilityLabel> high = {ReliabilityLabel::Reliable};
};

/// Deterministic reference rule: keep original-answer sentences whose
/// content words all appear in high-reliability step text. Sentences with
/// no content words (pure connectives) always survive.
inline std::string mock_project_answer(const AnnotatedTrace& trace,
                                       const ProjectionOptions& options = {}) {
  std::set<std::string> vocab;
  for (const ReasoningStep& step : trace.steps) {
    if (!step.label)
      throw UnlabeledStep("step " + std::to_string(step.index) + " is unlabeled");
    if (options.high.count(*step.label)) {
      for (const std::string& word : content_words(step.text)) vocab.insert(word);
    }
  }
  std::vector<std::string> kept;
  for (const std::string& sentence : split_steps(trace.original_answer)) {
    bool grounded = true;
    for (const std::string& word : content_words(sentence)) {
      if (!vocab.count(word)) {
        grounded = false;
        break;
      }
    }
    if (grounded) kept.push_back(sentence);
  }
  return join_steps(kept);
}

/// Chat backend that implements the reference projection rule behind the
/// real prompt: it parses the rendered template back out of the request and
/// applies mock_project_answer. Lets the full prompt/extract path run
/// deterministically without a model.
class ReferenceProjectionChatBackend : public ChatBackend {
 public:
  explicit ReferenceProjectionChatBackend(ProjectionOptions options = {})
      : options_(std::move(options)) {}

  ChatResponse complete(const ChatRequest& request) override {
    request.validate();
    std::string content;
    for (const ChatMessage& m : request.messages) content += m.content;
    const std::string reasoning =
        slice(content, "Reasoning Process: ", "\nFinal Answer: ");
    const std::string answer =
        slice(content, "Final Answer: ", "\nRevised Final Answer:");
    AnnotatedTrace trace = parse_trace(reasoning + answer);
    ChatResponse out;
    out.text = "<revised_answer>" + mock_project_answer(trace, options_) +
               "</revised_answer>";
    out.usage = {approx_token_count(content), approx_token_count(out.text), true};
    return out;
  }

 private:
  static std::string slice(const std::string& text, const std::string& from,
                           const std::string& to) {
    const size_t begin = text.find(from);
    if (begin == std::string::npos)
      throw BackendUnavailable("projection request lacks marker: " + from);
    const size_t start = begin + from.size();
    const size_t end = text.find(to, start);
    if (end == std::string::npos)
      throw BackendUnavailable("projection request lacks marker: " + to);
    return text.substr(start, end - start);
  }

  ProjectionOptions options_;
};

/// Renders the projection prompt over the labeled trace and extracts the
/// revised answer from the reply.
inline std::string project_answer(const AnnotatedTrace& trace,
                                  ChatBackend& chat, const std::string& model) {
  for (const ReasoningStep& step : trace.steps)
    if (!step.label)
      throw UnlabeledStep("step " + std::to_string(step.index) + " is unlabeled");
  if (trim(trace.original_answer).empty())
    throw Error("projection requires a non-empty original answer");
  const std::string reasoning =
      "<think>" + serialize_think(trace.steps) + "</think>";
  const std::string response =
      "<answer>" + trace.original_answer + "</answer>";
  const std::string prompt =
      render_answer_projection(trace.query.text, reasoning, response);
  ChatResponse res = chat.complete(user_request(model, prompt));
  return extract_revised_answer(res.text);
}

// ---------------------------------------------------------------------------
// Projection quality check
// ---------------------------------------------------------------------------

struct ProjectionReport {
  double pre_factuality = 1;   // score of the original answer; 1 when vacuous
  double post_factuality = 1;  // score of the projected answer; 1 when vacuous
  bool fully_supported = true;
  long unreliable_leakage = 0;
};

namespace detail {

inline std::string lowered_collapsed(const std::string& text) {
  std::string out = collapse_whitespace(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Re-scores both answers and applies the containment rule: every projected
/// claim must be traceable to the reasoning or the original answer, and no
/// claim may rest on vocabulary only Unreliable steps provide.
inline ProjectionReport check_projection(const AnnotatedTrace& trace,
                                         const std::string& projected,
                                         ClaimExtractionBackend& extractor,
                                         SearchBackend& search,
                                         VerificationBackend& verifier,
                                         const ScoringOptions& options = {}) {
  if (trim(projected).empty())
    throw Error("check_projection requires a non-empty projected answer");

  ProjectionReport report;
  report.pre_factuality =
      score_text(trace.original_answer, extractor, search, verifier, options)
          .value.value_or(1.0);
  report.post_factuality =
      score_text(projected, extractor, search, verifier, options)
          .value.value_or(1.0);

  std::string source_text = trace.original_answer;
  std::unordered_set<std::string> source_words =
      content_word_set(trace.original_answer);
  std::set<std::string> reliable_words, unreliable_words;
  for (const ReasoningStep& step : trace.steps) {
    source_text += " " + step.text;
    for (const std::string& word : content_words(step.text)) {
      source_words.insert(word);
      if (step.label == ReliabilityLabel::Reliable) reliable_words.insert(word);
      if (step.label == ReliabilityLabel::Unreliable)
        unreliable_words.insert(word);
    }
  }
  const std::string source_normalized = detail::lowered_collapsed(source_text);

  for (const std::string& claim : extractor.extract_claims(projected)) {
    const std::vector<std::string> words = content_words(claim);
    bool contained =
        source_normalized.find(detail::lowered_collapsed(claim)) !=
        std::string::npos;
    if (!contained) {
      contained = true;
      for (const std::string& word : words)
        if (!source_words.count(word)) {
          contained = false;
          break;
        }
    }
    if (!contained) report.fully_supported = false;
    for (const std::string& word : words) {
      if (unreliable_words.count(word) && !reliable_words.count(word)) {
        ++report.unreliable_leakage;
        break;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Dataset emission
// ---------------------------------------------------------------------------

inline TrainingTuple make_training_tuple(const AnnotatedTrace& trace) {
  if (!trace.projected_answer || trim(*trace.projected_answer).empty())
    throw InvalidTuple("trace " + trace.query.id + " has no projected answer");
  TrainingTuple tuple;
  tuple.query = trace.query;
  for (const ReasoningStep& step : trace.steps) {
    if (!step.label)
      throw UnlabeledStep("step " + std::to_string(step.index) + " is unlabeled");
    tuple.steps.emplace_back(step.text, *step.label);
  }
  tuple.projected_answer = *trace.projected_answer;
  return tuple;
}

/// One JSON object per line, byte-stable for a fixed input order.
inline long emit_cass_dataset(const std::vector<TrainingTuple>& tuples,
                              const std::string& destination) {
  std::vector<ojson> records;
  records.reserve(tuples.size());
  for (const TrainingTuple& tuple : tuples) {
    if (trim(tuple.projected_answer).empty())
      throw InvalidTuple("tuple " + tuple.query.id +
                         " has an empty projected answer");
    records.push_back(tuple_to_json(tuple));
  }
  write_jsonl(destination, records);
  return static_cast<long>(records.size());
}

inline std::vector<TrainingTuple> read_cass_dataset(const std::string& path) {
  std::vector<TrainingTuple> tuples;
  for (const ojson& record : read_jsonl(path))
    tuples.push_back(tuple_from_json(record));
  return tuples;
}

}  // namespace cag

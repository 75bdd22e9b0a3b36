#pragma once

#include <string>
#include <string_view>

#include "cag/errors.hpp"

// Judge and projection prompts. The wording, including the
// reliability_score/factuality_score naming inconsistency and the curly
// apostrophe, is load-bearing: downstream parsers and the golden-file tests
// expect these exact bytes. Do not reflow or "fix" the text.

namespace cag {

inline constexpr std::string_view kFactCheckingTemplate =
    R"TPL(You are a strict fact-checker.

Given the following prompt:

<Here is the prompt>

Your task is to assess whether the prompt contains any factually incorrect, impossible, or fictional information. Please score the factual accuracy of the prompt using the scale below:

0 = entirely fictional or impossible
1 = mostly incorrect or fabricated
2 = contains clear factual errors
3 = partially correct but includes questionable or uncertain claims
4 = mostly accurate with only minor uncertainty
5 = fully accurate with no detectable issues

Return ONLY a JSON object in the following format:
{
  "factual_score": <0-5>,
  "explanation": "short reason for the score"
}
)TPL";

inline constexpr std::string_view kKnowledgeRequirementTemplate =
    R"TPL(Given the following prompt:

<Here is the prompt>

Your task is to determine whether answering this prompt correctly and in a high-quality manner REQUIRES both long-form generation and factual knowledge.

Definition:
- Return **1** if producing a correct and high-quality answer requires both long-form generation and factual knowledge.
- Return **0** if the prompt can be adequately answered without long-form generation or without relying on factual knowledge.

Return ONLY a JSON object in the following format:
{
  "requires_factual_knowledge": 1 or 0,
  "explanation": "short reason for the judgment"
}
)TPL";

inline constexpr std::string_view kAnswerProjectionTemplate =
    R"TPL(You are given a user question, a reasoning process (wrapped within <think></think> tags), and a final answer (wrapped within <answer></answer> tags) derived from that reasoning process. Each sentence in the reasoning process is annotated with a reliability_score, which can be <unreliable>, <reliable>, or <nonverifiable>. A score of <nonverifiable> indicates that the sentence contains no verifiable factual content.

Your task is to revise the final answer to improve factual accuracy by relying exclusively on reasoning sentences whose factuality_score is <reliable>, while allowing sentences with a factuality_score of <nonverifiable> to be used for non-factual, structural purposes only.

Guidelines:

* Reasoning sentences with a factuality_score of <reliable> should be treated as fully correct and authoritative. The revised final answer should be based solely on these sentences, without hedging, reinterpretation, or additional verification.
* Downweight, soften, or omit information that depends on reasoning sentences with a factuality_score of <unreliable>, even if such information appears relevant or plausible.
* Reasoning sentences with a factuality_score of <nonverifiable> may be used to preserve the structure, flow, and coherence of the original answer, but must not serve as the basis for any factual assertions.
* Pay particular attention to potentially error-prone factual elements, including dates, names, numerical values, locations, and specific claims.
* Ensure the revised final answer remains coherent, fluent, and well-structured, and preserves the original answer’s overall structure and sentence ordering as much as possible, even if some content must be reduced or removed.
* Do NOT introduce any new information. The revised final answer must be fully and directly supported by the original reasoning process, without adding new assumptions, interpretations, or inferences.

Output only the revised final answer, wrapped within <revised_answer></revised_answer> tags.

User Question: <Here is the question>
Reasoning Process: <Here is the reasoning>
Final Answer: <Here is the response>
Revised Final Answer:
)TPL";

namespace detail {

inline std::string replace_placeholder(std::string_view tpl,
                                       std::string_view placeholder,
                                       std::string_view value) {
  const size_t at = tpl.find(placeholder);
  if (at == std::string_view::npos)
    throw Error("template is missing placeholder " + std::string(placeholder));
  std::string out(tpl);
  out.replace(at, placeholder.size(), value);
  return out;
}

}  // namespace detail

inline std::string render_fact_checking(std::string_view prompt_text) {
  return detail::replace_placeholder(kFactCheckingTemplate,
                                     "<Here is the prompt>", prompt_text);
}

inline std::string render_knowledge_requirement(std::string_view prompt_text) {
  return detail::replace_placeholder(kKnowledgeRequirementTemplate,
                                     "<Here is the prompt>", prompt_text);
}

inline std::string render_answer_projection(std::string_view question,
                                            std::string_view reasoning,
                                            std::string_view response) {
  std::string out = detail::replace_placeholder(
      kAnswerProjectionTemplate, "<Here is the question>", question);
  out = detail::replace_placeholder(out, "<Here is the reasoning>", reasoning);
  return detail::replace_placeholder(out, "<Here is the response>", response);
}

/// Pulls the revision out of <revised_answer></revised_answer>.
inline std::string extract_revised_answer(const std::string& text) {
  const std::string open = "<revised_answer>";
  const std::string close = "</revised_answer>";
  const size_t begin = text.find(open);
  if (begin == std::string::npos)
    throw MissingRevisedAnswerTags("response lacks <revised_answer> tags");
  const size_t end = text.find(close, begin + open.size());
  if (end == std::string::npos)
    throw MissingRevisedAnswerTags("response lacks closing </revised_answer>");
  return text.substr(begin + open.size(), end - begin - open.size());
}

}  // namespace cag

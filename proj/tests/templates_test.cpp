#include "cag/templates.hpp"

#include <gtest/gtest.h>

#include "cag/jsonl.hpp"

#ifndef CAG_TEMPLATES_DIR
#error "CAG_TEMPLATES_DIR must point at the shipped template resources"
#endif

namespace cag {
namespace {

std::string resource(const std::string& name) {
  return read_file(std::string(CAG_TEMPLATES_DIR) + "/" + name);
}

TEST(TemplateGolden, FactCheckingMatchesResourceFile) {
  EXPECT_EQ(std::string(kFactCheckingTemplate), resource("fact_checking.txt"));
}

TEST(TemplateGolden, KnowledgeRequirementMatchesResourceFile) {
  EXPECT_EQ(std::string(kKnowledgeRequirementTemplate),
            resource("knowledge_requirement.txt"));
}

TEST(TemplateGolden, AnswerProjectionMatchesResourceFile) {
  EXPECT_EQ(std::string(kAnswerProjectionTemplate),
            resource("answer_projection.txt"));
}

TEST(TemplateGolden, AnchorsPresent) {
  EXPECT_NE(kFactCheckingTemplate.find("You are a strict fact-checker."),
            std::string_view::npos);
  EXPECT_NE(kKnowledgeRequirementTemplate.find(
                "requires both long-form generation and factual knowledge"),
            std::string_view::npos);
  EXPECT_NE(kAnswerProjectionTemplate.find(
                "Output only the revised final answer"),
            std::string_view::npos);
}

TEST(TemplateQuirks, PreservedVerbatim) {
  // The projection prompt names the annotation two different ways and uses a
  // curly apostrophe; both quirks are load-bearing bytes of the canonical
  // text and must survive any reformatting.
  EXPECT_NE(kAnswerProjectionTemplate.find("reliability_score"),
            std::string_view::npos);
  EXPECT_NE(kAnswerProjectionTemplate.find("factuality_score"),
            std::string_view::npos);
  EXPECT_NE(kAnswerProjectionTemplate.find("answer\xE2\x80\x99s"),
            std::string_view::npos);
  EXPECT_NE(kFactCheckingTemplate.find("\"factual_score\": <0-5>"),
            std::string_view::npos);
  EXPECT_NE(kKnowledgeRequirementTemplate.find(
                "\"requires_factual_knowledge\": 1 or 0"),
            std::string_view::npos);
}

TEST(Render, SubstitutesPlaceholders) {
  const std::string fact = render_fact_checking("Is water wet?");
  EXPECT_NE(fact.find("Is water wet?"), std::string::npos);
  EXPECT_EQ(fact.find("<Here is the prompt>"), std::string::npos);

  const std::string knowledge = render_knowledge_requirement("Is water wet?");
  EXPECT_NE(knowledge.find("Is water wet?"), std::string::npos);
  EXPECT_EQ(knowledge.find("<Here is the prompt>"), std::string::npos);

  const std::string projection = render_answer_projection(
      "Q text", "<think>R <reliable></think>", "<answer>A</answer>");
  EXPECT_NE(projection.find("User Question: Q text"), std::string::npos);
  EXPECT_NE(projection.find("Reasoning Process: <think>R <reliable></think>"),
            std::string::npos);
  EXPECT_NE(projection.find("Final Answer: <answer>A</answer>"),
            std::string::npos);
  EXPECT_EQ(projection.find("<Here is the question>"), std::string::npos);
  EXPECT_EQ(projection.find("<Here is the reasoning>"), std::string::npos);
  EXPECT_EQ(projection.find("<Here is the response>"), std::string::npos);
}

TEST(RevisedAnswer, ExtractionAndErrors) {
  EXPECT_EQ(extract_revised_answer("x<revised_answer>the answer</revised_answer>y"),
            "the answer");
  EXPECT_EQ(extract_revised_answer("<revised_answer></revised_answer>"), "");
  EXPECT_THROW(extract_revised_answer("no tags"), MissingRevisedAnswerTags);
  EXPECT_THROW(extract_revised_answer("<revised_answer>unclosed"),
               MissingRevisedAnswerTags);
}

}  // namespace
}  // namespace cag

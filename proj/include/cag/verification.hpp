#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cag/backends.hpp"
#include "cag/errors.hpp"
#include "cag/text.hpp"
#include "cag/trace.hpp"

namespace cag {

// ---------------------------------------------------------------------------
// Per-step factuality score
// ---------------------------------------------------------------------------

struct StepScore {
  long supported = 0;
  long total = 0;
  std::optional<double> value;  // supported/total; absent when total = 0
};

/// Unverified counts against the score: denominator in, numerator out.
inline StepScore score_step(const std::vector<AtomicClaim>& claims) {
  StepScore score;
  score.total = static_cast<long>(claims.size());
  for (const AtomicClaim& claim : claims)
    if (claim.verdict == Verdict::Supported) ++score.supported;
  if (score.total > 0)
    score.value = static_cast<double>(score.supported) /
                  static_cast<double>(score.total);
  return score;
}

// ---------------------------------------------------------------------------
// Capabilities
// ---------------------------------------------------------------------------

class ClaimExtractionBackend {
 public:
  virtual ~ClaimExtractionBackend() = default;
  virtual std::vector<std::string> extract_claims(
      const std::string& step_text) = 0;
};

class VerificationBackend {
 public:
  virtual ~VerificationBackend() = default;
  virtual Verdict verify(const std::string& claim,
                         const std::vector<EvidenceDoc>& evidence) = 0;
};

// ---------------------------------------------------------------------------
// Deterministic mocks
// ---------------------------------------------------------------------------

/// One claim per clause, split on ';' and sentence boundaries. A step whose
/// text has fewer than two alphabetic tokens yields no claims at all; a
/// clause without alphabetic content is skipped.
class MockClaimExtractor : public ClaimExtractionBackend {
 public:
  std::vector<std::string> extract_claims(const std::string& step_text) override {
    if (trim(step_text).empty())
      throw Error("extract_claims requires non-empty step text");
    int alpha_tokens = 0;
    for (const std::string& token : whitespace_tokens(step_text))
      if (has_alpha(token)) ++alpha_tokens;
    if (alpha_tokens < 2) return {};

    std::vector<std::string> claims;
    for (const std::string& piece : split_on_semicolons(step_text))
      for (const std::string& sentence : split_steps(piece)) {
        std::string clause = trim(sentence);
        if (has_alpha(clause)) claims.push_back(std::move(clause));
      }
    return claims;
  }

 private:
  static bool has_alpha(const std::string& s) {
    for (unsigned char c : s)
      if (std::isalpha(c)) return true;
    return false;
  }

  static std::vector<std::string> split_on_semicolons(const std::string& text) {
    std::vector<std::string> pieces;
    std::string current;
    for (char c : text) {
      if (c == ';') {
        pieces.push_back(current);
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    pieces.push_back(current);
    return pieces;
  }
};

/// Verdicts come from a fixture table keyed by exact claim text; anything
/// absent is Unverified. Evidence is ignored.
class MockClaimVerifier : public VerificationBackend {
 public:
  MockClaimVerifier() = default;
  explicit MockClaimVerifier(std::map<std::string, Verdict> table)
      : table_(std::move(table)) {}

  static MockClaimVerifier from_json_file(const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path));
    std::map<std::string, Verdict> table;
    for (auto it = j.begin(); it != j.end(); ++it)
      table[it.key()] = verdict_from_name(it.value().get<std::string>());
    return MockClaimVerifier(std::move(table));
  }

  void set(std::string claim, Verdict verdict) {
    table_[std::move(claim)] = verdict;
  }

  Verdict verify(const std::string& claim,
                 const std::vector<EvidenceDoc>&) override {
    auto it = table_.find(claim);
    return it == table_.end() ? Verdict::Unverified : it->second;
  }

 private:
  std::map<std::string, Verdict> table_;
};

// ---------------------------------------------------------------------------
// Chat-backed implementations
// ---------------------------------------------------------------------------

/// Asks the model for one claim per line. The instruction wording is this
/// toolkit's own wire contract.
class ChatClaimExtractor : public ClaimExtractionBackend {
 public:
  ChatClaimExtractor(ChatBackend& chat, std::string model)
      : chat_(chat), model_(std::move(model)) {}

  std::vector<std::string> extract_claims(const std::string& step_text) override {
    if (trim(step_text).empty())
      throw Error("extract_claims requires non-empty step text");
    ChatRequest req = user_request(
        model_,
        "Extract every atomic factual claim from the text below. "
        "Write one claim per line. If there are no verifiable factual "
        "claims, write NONE.\n\nText:\n" +
            step_text);
    ChatResponse res = chat_.complete(req);
    std::vector<std::string> claims;
    std::string line;
    std::istringstream stream(res.text);
    while (std::getline(stream, line)) {
      line = trim(line);
      if (line.empty() || line == "NONE") continue;
      claims.push_back(line);
    }
    return claims;
  }

 private:
  ChatBackend& chat_;
  std::string model_;
};

/// One-word judgment over the claim and its evidence snippets. An empty
/// evidence list short-circuits to Unverified without a backend call; an
/// unrecognized reply is conservatively Unverified.
class ChatClaimVerifier : public VerificationBackend {
 public:
  ChatClaimVerifier(ChatBackend& chat, std::string model)
      : chat_(chat), model_(std::move(model)) {}

  Verdict verify(const std::string& claim,
                 const std::vector<EvidenceDoc>& evidence) override {
    if (evidence.empty()) return Verdict::Unverified;
    std::string prompt =
        "Judge whether the claim is supported by the evidence. Reply with "
        "exactly one word: supported, unsupported, or unverified.\n\nClaim: " +
        claim + "\n\nEvidence:\n";
    for (const EvidenceDoc& doc : evidence)
      prompt += "- " + doc.snippet + "\n";
    ChatResponse res = chat_.complete(user_request(model_, prompt));
    std::string word;
    for (char c : trim(res.text)) {
      if (!std::isalpha(static_cast<unsigned char>(c))) break;
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (word == "supported") return Verdict::Supported;
    if (word == "unsupported") return Verdict::Unsupported;
    return Verdict::Unverified;
  }

 private:
  ChatBackend& chat_;
  std::string model_;
};

// ---------------------------------------------------------------------------
// Scoring pipeline
// ---------------------------------------------------------------------------

struct ScoringOptions {
  int evidence_top_k = 5;
};

inline std::vector<AtomicClaim> verify_all(
    std::vector<std::string> claim_texts, SearchBackend& search,
    VerificationBackend& verifier, const ScoringOptions& options = {}) {
  std::vector<AtomicClaim> claims;
  claims.reserve(claim_texts.size());
  for (std::string& text : claim_texts) {
    std::vector<EvidenceDoc> evidence =
        search.search(text, options.evidence_top_k);
    AtomicClaim claim;
    claim.verdict = verifier.verify(text, evidence);
    claim.text = std::move(text);
    for (const EvidenceDoc& doc : evidence) claim.evidence_ids.push_back(doc.id);
    claims.push_back(std::move(claim));
  }
  return claims;
}

/// Attaches claims and a factuality score to every step. Pure given
/// deterministic backends: identical inputs yield identical scored traces.
inline AnnotatedTrace score_trace(AnnotatedTrace trace,
                                  ClaimExtractionBackend& extractor,
                                  SearchBackend& search,
                                  VerificationBackend& verifier,
                                  const ScoringOptions& options = {}) {
  for (ReasoningStep& step : trace.steps) {
    step.claims = verify_all(extractor.extract_claims(step.text), search,
                             verifier, options);
    StepScore score = score_step(step.claims);
    step.score = score.value;
  }
  return trace;
}

/// Scores free-form answer text (projection quality checks reuse this).
inline StepScore score_text(const std::string& text,
                            ClaimExtractionBackend& extractor,
                            SearchBackend& search,
                            VerificationBackend& verifier,
                            const ScoringOptions& options = {}) {
  if (trim(text).empty()) return {};
  return score_step(
      verify_all(extractor.extract_claims(text), search, verifier, options));
}

}  // namespace cag

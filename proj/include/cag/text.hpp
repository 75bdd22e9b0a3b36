#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace cag {

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline bool is_alpha(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0;
}

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

/// Trims and collapses every whitespace run to a single space. All step and
/// answer text is kept in this normal form; the trace round-trip law is
/// stated modulo this normalization.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

/// Whitespace-delimited tokens. Doubles as the token-count approximation
/// used when a backend does not report model token counts.
inline std::vector<std::string> whitespace_tokens(std::string_view s) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline long approx_token_count(std::string_view s) {
  return static_cast<long>(whitespace_tokens(s).size());
}

/// Sentence segmentation rule used for step granularity: a segment ends after
/// a run of '.', '?' or '!' that is followed by whitespace or end of input,
/// or at a newline. No abbreviation lookahead; "3.14" stays intact because
/// the '.' is not followed by whitespace. Segments are returned trimmed and
/// whitespace-collapsed; empty segments are dropped.
inline std::vector<std::string> split_steps(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    std::string seg = collapse_whitespace(current);
    if (!seg.empty()) out.push_back(std::move(seg));
    current.clear();
  };
  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\n') {
      flush();
      continue;
    }
    current.push_back(c);
    if (c == '.' || c == '?' || c == '!') {
      size_t j = i + 1;
      while (j < text.size() &&
             (text[j] == '.' || text[j] == '?' || text[j] == '!')) {
        current.push_back(text[j]);
        ++j;
      }
      i = j - 1;
      if (j >= text.size() || is_space(text[j])) flush();
    }
  }
  flush();
  return out;
}

/// Inverse of split_steps on its own output: segments that end with terminal
/// punctuation are joined with a space, anything else keeps a newline so the
/// boundary survives a re-split.
inline std::string join_steps(const std::vector<std::string>& segments) {
  std::string out;
  for (size_t i = 0; i < segments.size(); ++i) {
    if (i > 0) {
      const std::string& prev = segments[i - 1];
      char last = prev.empty() ? ' ' : prev.back();
      out.push_back((last == '.' || last == '?' || last == '!') ? ' ' : '\n');
    }
    out += segments[i];
  }
  return out;
}

/// Function words and reasoning fillers ignored by the mock projection and
/// entailment rules. Deliberately frozen: the mock oracles must stay
/// deterministic across releases.
inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStopwords = {
      "a",       "an",      "the",      "and",     "or",       "but",
      "if",      "then",    "else",     "when",    "while",    "of",
      "in",      "on",      "at",       "to",      "from",     "by",
      "with",    "without", "for",      "as",      "is",       "are",
      "was",     "were",    "be",       "been",    "being",    "am",
      "it",      "its",     "this",     "that",    "these",    "those",
      "there",   "here",    "so",       "such",    "not",      "no",
      "nor",     "too",     "very",     "can",     "could",    "may",
      "might",   "will",    "would",    "shall",   "should",   "must",
      "do",      "does",    "did",      "done",    "have",     "has",
      "had",     "having",  "i",        "you",     "he",       "she",
      "we",      "they",    "them",     "his",     "her",      "their",
      "our",     "your",    "my",       "me",      "us",       "him",
      "also",    "than",    "into",     "over",    "under",    "about",
      "after",   "before",  "between",  "because", "therefore", "thus",
      "hence",   "however", "moreover", "overall", "indeed",   "well",
      "just",    "only",    "even",     "still",   "yet",      "again",
      "all",     "any",     "some",     "each",    "both",     "few",
      "more",    "most",    "other",    "another", "same",     "own",
      "what",    "which",   "who",      "whom",    "whose",    "where",
      "why",     "how",     "let",      "think",   "hmm",      "hm",
      "um",      "uh",      "oh",       "ah",      "okay",     "ok",
      "wait",    "now",     "first",    "second",  "finally",  "next",
      "anyway",  "recall",  "note",     "consider", "maybe",   "perhaps",
  };
  return kStopwords;
}

/// Lowercases and strips non-alphanumeric characters from one token.
inline std::string normalize_word(std::string_view token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

/// Content words of a text: normalized tokens that contain a letter and are
/// not stopwords. Order preserved, duplicates kept.
inline std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> out;
  for (const std::string& tok : whitespace_tokens(text)) {
    std::string w = normalize_word(tok);
    if (w.empty()) continue;
    if (!std::any_of(w.begin(), w.end(),
                     [](char c) { return is_alpha(c); }))
      continue;
    if (stopwords().count(w)) continue;
    out.push_back(std::move(w));
  }
  return out;
}

inline std::unordered_set<std::string> content_word_set(std::string_view text) {
  auto words = content_words(text);
  return {words.begin(), words.end()};
}

}  // namespace cag

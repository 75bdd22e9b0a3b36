#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "cag/errors.hpp"
#include "cag/jsonl.hpp"
#include "cag/text.hpp"

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <json.hpp>
#include <openssl/evp.h>

namespace cag {

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

enum class ChatRole { System, User, Assistant };

inline std::string chat_role_name(ChatRole role) {
  switch (role) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  ChatRole role = ChatRole::User;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<long> max_tokens;

  void validate() const {
    if (messages.empty()) throw Error("ChatRequest requires at least one message");
    if (temperature < 0) throw Error("ChatRequest temperature must be nonnegative");
  }
};

/// Convenience for the common single-turn case.
inline ChatRequest user_request(std::string model, std::string content,
                                double temperature = 0.0) {
  ChatRequest req;
  req.model = std::move(model);
  req.messages.push_back({ChatRole::User, std::move(content)});
  req.temperature = temperature;
  return req;
}

struct ChatUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool approximate = false;  // true when counts are whitespace estimates
};

struct ChatResponse {
  std::string text;
  ChatUsage usage;
};

struct EvidenceDoc {
  std::string id;
  std::optional<std::string> url;
  std::string snippet;  // non-empty
};

struct BackendPolicy {
  int max_concurrency = 8;
  int retries = 3;
  int backoff_base_ms = 250;
  int timeout_ms = 30000;

  void validate() const {
    if (max_concurrency < 1 || retries < 1 || backoff_base_ms < 1 ||
        timeout_ms < 1)
      throw Error("BackendPolicy fields must be positive");
    if (retries > 5) throw Error("BackendPolicy retries must be at most 5");
  }
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual std::vector<EvidenceDoc> search(const std::string& query,
                                          int top_k) = 0;
};

// ---------------------------------------------------------------------------
// Request fingerprinting (cassette keys, scripted mocks)
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

/// Covers model + messages + temperature. max_tokens is deliberately left
/// out so token-limit tuning does not invalidate recorded cassettes.
inline std::string request_fingerprint(const ChatRequest& request) {
  nlohmann::ordered_json j;
  j["model"] = request.model;
  nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
  for (const ChatMessage& m : request.messages)
    msgs.push_back({{"role", chat_role_name(m.role)}, {"content", m.content}});
  j["messages"] = std::move(msgs);
  j["temperature"] = request.temperature;
  return sha256_hex(j.dump());
}

inline std::string search_fingerprint(const std::string& query, int top_k) {
  nlohmann::ordered_json j;
  j["query"] = query;
  j["top_k"] = top_k;
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Bounded in-flight gate
// ---------------------------------------------------------------------------

class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int max_in_flight) : max_(max_in_flight) {
    if (max_in_flight < 1) throw Error("max_concurrency must be positive");
  }

  class Ticket {
   public:
    explicit Ticket(ConcurrencyLimiter* owner) : owner_(owner) {}
    Ticket(Ticket&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
    Ticket& operator=(Ticket&&) = delete;
    ~Ticket() {
      if (owner_) owner_->release();
    }

   private:
    ConcurrencyLimiter* owner_;
  };

  Ticket acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < max_; });
    ++in_flight_;
    return Ticket(this);
  }

 private:
  void release() {
    {
      std::lock_guard lock(mu_);
      --in_flight_;
    }
    cv_.notify_one();
  }

  int max_;
  int in_flight_ = 0;
  std::mutex mu_;
  std::condition_variable cv_;
};

// ---------------------------------------------------------------------------
// HTTP transport (separable from retry logic so tests can fake it)
// ---------------------------------------------------------------------------

struct HttpResult {
  enum class Kind { Ok, ConnectionError, TimedOut };
  Kind kind = Kind::Ok;
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post(const std::string& path, const std::string& body,
                          const std::vector<std::pair<std::string, std::string>>&
                              headers) = 0;
};

class HttplibTransport : public HttpTransport {
 public:
  HttplibTransport(std::string base_url, int timeout_ms)
      : client_(base_url.c_str()) {
    client_.set_connection_timeout(0, timeout_ms * 1000LL);
    client_.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    client_.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
  }

  HttpResult post(const std::string& path, const std::string& body,
                  const std::vector<std::pair<std::string, std::string>>&
                      headers) override {
    httplib::Headers h(headers.begin(), headers.end());
    auto res = client_.Post(path, h, body, "application/json");
    if (!res) {
      auto err = res.error();
      HttpResult out;
      out.kind = (err == httplib::Error::ConnectionTimeout ||
                  err == httplib::Error::Read || err == httplib::Error::Write)
                     ? HttpResult::Kind::TimedOut
                     : HttpResult::Kind::ConnectionError;
      return out;
    }
    return {HttpResult::Kind::Ok, res->status, res->body};
  }

 private:
  httplib::Client client_;
};

// ---------------------------------------------------------------------------
// Retrying HTTP clients
// ---------------------------------------------------------------------------

/// Runs one POST under the retry policy. Transient transport failures and
/// 5xx responses back off exponentially; 4xx fails fast (401/403 as
/// AuthFailure). The sleeper is injectable so tests do not wait.
inline HttpResult post_with_retries(
    HttpTransport& transport, const BackendPolicy& policy,
    const std::string& path, const std::string& body,
    const std::vector<std::pair<std::string, std::string>>& headers,
    const std::function<void(int)>& sleep_ms) {
  bool last_was_timeout = false;
  for (int attempt = 0; attempt <= policy.retries; ++attempt) {
    if (attempt > 0) sleep_ms(policy.backoff_base_ms << (attempt - 1));
    HttpResult result = transport.post(path, body, headers);
    if (result.kind == HttpResult::Kind::Ok) {
      if (result.status == 401 || result.status == 403)
        throw AuthFailure("status " + std::to_string(result.status));
      if (result.status >= 400 && result.status < 500)
        throw BackendUnavailable("status " + std::to_string(result.status) +
                                 ": " + result.body);
      if (result.status < 500) return result;
      last_was_timeout = false;  // 5xx: retry
    } else {
      last_was_timeout = result.kind == HttpResult::Kind::TimedOut;
    }
  }
  if (last_was_timeout)
    throw Timeout("request timed out after " +
                  std::to_string(policy.retries + 1) + " attempts");
  throw BackendUnavailable("retries exhausted (" +
                           std::to_string(policy.retries + 1) + " attempts)");
}

inline std::function<void(int)> default_sleeper() {
  return [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

/// OpenAI-compatible chat-completions client. Endpoint and credential come
/// from configuration plus the CAG_API_BASE / CAG_API_KEY environment
/// variables.
class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(std::string api_base, std::string api_key,
                  BackendPolicy policy,
                  std::unique_ptr<HttpTransport> transport = nullptr,
                  std::function<void(int)> sleep_ms = default_sleeper())
      : api_key_(std::move(api_key)),
        policy_(policy),
        limiter_(policy.max_concurrency),
        sleep_ms_(std::move(sleep_ms)) {
    policy_.validate();
    transport_ = transport ? std::move(transport)
                           : std::make_unique<HttplibTransport>(
                                 api_base, policy_.timeout_ms);
  }

  ChatResponse complete(const ChatRequest& request) override {
    request.validate();
    nlohmann::ordered_json body;
    body["model"] = request.model;
    nlohmann::ordered_json msgs = nlohmann::ordered_json::array();
    for (const ChatMessage& m : request.messages)
      msgs.push_back({{"role", chat_role_name(m.role)}, {"content", m.content}});
    body["messages"] = std::move(msgs);
    body["temperature"] = request.temperature;
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;

    std::vector<std::pair<std::string, std::string>> headers;
    if (!api_key_.empty())
      headers.emplace_back("Authorization", "Bearer " + api_key_);

    auto ticket = limiter_.acquire();
    HttpResult result = post_with_retries(*transport_, policy_,
                                          "/chat/completions", body.dump(),
                                          headers, sleep_ms_);
    try {
      auto j = nlohmann::json::parse(result.body);
      ChatResponse out;
      out.text = j.at("choices").at(0).at("message").at("content")
                     .get<std::string>();
      if (j.contains("usage")) {
        out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0L);
        out.usage.completion_tokens = j["usage"].value("completion_tokens", 0L);
      } else {
        out.usage.approximate = true;
        out.usage.completion_tokens = approx_token_count(out.text);
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw BackendUnavailable(std::string("malformed completion payload: ") +
                               e.what());
    }
  }

 private:
  std::string api_key_;
  BackendPolicy policy_;
  ConcurrencyLimiter limiter_;
  std::function<void(int)> sleep_ms_;
  std::unique_ptr<HttpTransport> transport_;
};

/// Evidence-search client. POSTs {query, top_k} to a configurable JSON
/// endpoint and expects {documents:[{id,url,snippet}]}.
class HttpSearchBackend : public SearchBackend {
 public:
  HttpSearchBackend(std::string api_base, std::string path, BackendPolicy policy,
                    std::unique_ptr<HttpTransport> transport = nullptr,
                    std::function<void(int)> sleep_ms = default_sleeper())
      : path_(std::move(path)),
        policy_(policy),
        limiter_(policy.max_concurrency),
        sleep_ms_(std::move(sleep_ms)) {
    policy_.validate();
    transport_ = transport ? std::move(transport)
                           : std::make_unique<HttplibTransport>(
                                 api_base, policy_.timeout_ms);
  }

  std::vector<EvidenceDoc> search(const std::string& query, int top_k) override {
    if (query.empty()) throw Error("search query must be non-empty");
    if (top_k < 1) throw Error("top_k must be at least 1");
    nlohmann::ordered_json body{{"query", query}, {"top_k", top_k}};
    auto ticket = limiter_.acquire();
    HttpResult result = post_with_retries(*transport_, policy_, path_,
                                          body.dump(), {}, sleep_ms_);
    try {
      auto j = nlohmann::json::parse(result.body);
      std::vector<EvidenceDoc> docs;
      for (const auto& d : j.at("documents")) {
        EvidenceDoc doc;
        doc.id = d.at("id").get<std::string>();
        if (d.contains("url") && !d["url"].is_null())
          doc.url = d["url"].get<std::string>();
        doc.snippet = d.at("snippet").get<std::string>();
        docs.push_back(std::move(doc));
        if (static_cast<int>(docs.size()) == top_k) break;
      }
      return docs;
    } catch (const nlohmann::json::exception& e) {
      throw BackendUnavailable(std::string("malformed search payload: ") +
                               e.what());
    }
  }

 private:
  std::string path_;
  BackendPolicy policy_;
  ConcurrencyLimiter limiter_;
  std::function<void(int)> sleep_ms_;
  std::unique_ptr<HttpTransport> transport_;
};

// ---------------------------------------------------------------------------
// Deterministic in-process mocks
// ---------------------------------------------------------------------------

/// Chat mock scripted by SHA-256 of the rendered request, with substring
/// rules and a default as fallbacks. Lookup order: exact fingerprint,
/// substring rules in insertion order, default.
class ScriptedChatBackend : public ChatBackend {
 public:
  void script(const ChatRequest& request, std::string response) {
    std::lock_guard lock(mu_);
    by_fingerprint_[request_fingerprint(request)] = std::move(response);
  }

  void script_fingerprint(std::string fingerprint, std::string response) {
    std::lock_guard lock(mu_);
    by_fingerprint_[std::move(fingerprint)] = std::move(response);
  }

  void script_contains(std::string needle, std::string response) {
    std::lock_guard lock(mu_);
    contains_rules_.emplace_back(std::move(needle), std::move(response));
  }

  void set_default_response(std::string response) {
    std::lock_guard lock(mu_);
    default_response_ = std::move(response);
  }

  int calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  ChatResponse complete(const ChatRequest& request) override {
    request.validate();
    std::lock_guard lock(mu_);
    ++calls_;
    std::string text;
    if (auto it = by_fingerprint_.find(request_fingerprint(request));
        it != by_fingerprint_.end()) {
      text = it->second;
    } else {
      std::string prompt;
      for (const ChatMessage& m : request.messages) prompt += m.content;
      bool matched = false;
      for (const auto& [needle, response] : contains_rules_) {
        if (prompt.find(needle) != std::string::npos) {
          text = response;
          matched = true;
          break;
        }
      }
      if (!matched) {
        if (!default_response_)
          throw BackendUnavailable("no scripted response for request");
        text = *default_response_;
      }
    }
    ChatResponse out;
    out.text = text;
    long prompt_tokens = 0;
    for (const ChatMessage& m : request.messages)
      prompt_tokens += approx_token_count(m.content);
    out.usage = {prompt_tokens, approx_token_count(text), true};
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, std::string> by_fingerprint_;
  std::vector<std::pair<std::string, std::string>> contains_rules_;
  std::optional<std::string> default_response_;
  int calls_ = 0;
};

/// Serves evidence from a local corpus. An entry matches when its key is a
/// substring of the query; documents accumulate in corpus order and are
/// truncated to top_k. No match is an empty result, not an error.
class MockSearchBackend : public SearchBackend {
 public:
  struct Entry {
    std::string match;
    std::vector<EvidenceDoc> documents;
  };

  MockSearchBackend() = default;
  explicit MockSearchBackend(std::vector<Entry> corpus)
      : corpus_(std::move(corpus)) {}

  static MockSearchBackend from_json_file(const std::string& path) {
    auto j = nlohmann::json::parse(read_file(path));
    std::vector<Entry> corpus;
    for (const auto& e : j) {
      Entry entry;
      entry.match = e.at("match").get<std::string>();
      for (const auto& d : e.at("documents")) {
        EvidenceDoc doc;
        doc.id = d.at("id").get<std::string>();
        if (d.contains("url") && !d["url"].is_null())
          doc.url = d["url"].get<std::string>();
        doc.snippet = d.at("snippet").get<std::string>();
        entry.documents.push_back(std::move(doc));
      }
      corpus.push_back(std::move(entry));
    }
    return MockSearchBackend(std::move(corpus));
  }

  std::vector<EvidenceDoc> search(const std::string& query, int top_k) override {
    if (query.empty()) throw Error("search query must be non-empty");
    if (top_k < 1) throw Error("top_k must be at least 1");
    std::vector<EvidenceDoc> out;
    for (const Entry& entry : corpus_) {
      if (query.find(entry.match) == std::string::npos) continue;
      for (const EvidenceDoc& doc : entry.documents) {
        out.push_back(doc);
        if (static_cast<int>(out.size()) == top_k) return out;
      }
    }
    return out;
  }

 private:
  std::vector<Entry> corpus_;
};

// ---------------------------------------------------------------------------
// Record / replay cassettes
// ---------------------------------------------------------------------------

enum class CassetteMode { Record, Replay };

/// Persistent (request-fingerprint -> response) store shared by the chat and
/// search wrappers. Record mode appends to the file as calls complete;
/// replay mode serves from memory with zero network I/O.
class Cassette {
 public:
  Cassette(CassetteMode mode, std::string path)
      : mode_(mode), path_(std::move(path)) {
    if (mode_ == CassetteMode::Replay) {
      for (const auto& record : read_jsonl(path_))
        entries_[record.at("key").get<std::string>()] = record.at("response");
    }
  }

  CassetteMode mode() const { return mode_; }

  nlohmann::ordered_json fetch(const std::string& kind,
                               const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(kind + ":" + key);
    if (it == entries_.end())
      throw CassetteMiss(kind + " request not in cassette " + path_);
    return it->second;
  }

  void store(const std::string& kind, const std::string& key,
             nlohmann::ordered_json response) {
    std::lock_guard lock(mu_);
    std::string full_key = kind + ":" + key;
    if (entries_.count(full_key)) return;  // idempotent re-record
    nlohmann::ordered_json record;
    record["key"] = full_key;
    record["response"] = response;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoFailure("cannot append to cassette " + path_);
    out << record.dump() << '\n';
    entries_[full_key] = std::move(response);
  }

 private:
  CassetteMode mode_;
  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::ordered_json> entries_;
};

class RecordReplayChat : public ChatBackend {
 public:
  RecordReplayChat(std::shared_ptr<Cassette> cassette, ChatBackend* inner)
      : cassette_(std::move(cassette)), inner_(inner) {
    if (cassette_->mode() == CassetteMode::Record && inner_ == nullptr)
      throw Error("record mode requires an inner chat backend");
  }

  ChatResponse complete(const ChatRequest& request) override {
    const std::string key = request_fingerprint(request);
    if (cassette_->mode() == CassetteMode::Replay) {
      auto j = cassette_->fetch("chat", key);
      ChatResponse out;
      out.text = j.at("text").get<std::string>();
      out.usage.prompt_tokens = j.value("prompt_tokens", 0L);
      out.usage.completion_tokens = j.value("completion_tokens", 0L);
      out.usage.approximate = j.value("approximate", false);
      return out;
    }
    ChatResponse response = inner_->complete(request);
    cassette_->store("chat", key,
                     {{"text", response.text},
                      {"prompt_tokens", response.usage.prompt_tokens},
                      {"completion_tokens", response.usage.completion_tokens},
                      {"approximate", response.usage.approximate}});
    return response;
  }

 private:
  std::shared_ptr<Cassette> cassette_;
  ChatBackend* inner_;
};

class RecordReplaySearch : public SearchBackend {
 public:
  RecordReplaySearch(std::shared_ptr<Cassette> cassette, SearchBackend* inner)
      : cassette_(std::move(cassette)), inner_(inner) {
    if (cassette_->mode() == CassetteMode::Record && inner_ == nullptr)
      throw Error("record mode requires an inner search backend");
  }

  std::vector<EvidenceDoc> search(const std::string& query, int top_k) override {
    const std::string key = search_fingerprint(query, top_k);
    if (cassette_->mode() == CassetteMode::Replay) {
      auto j = cassette_->fetch("search", key);
      std::vector<EvidenceDoc> docs;
      for (const auto& d : j) {
        EvidenceDoc doc;
        doc.id = d.at("id").get<std::string>();
        if (d.contains("url") && !d["url"].is_null())
          doc.url = d["url"].get<std::string>();
        doc.snippet = d.at("snippet").get<std::string>();
        docs.push_back(std::move(doc));
      }
      return docs;
    }
    std::vector<EvidenceDoc> docs = inner_->search(query, top_k);
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const EvidenceDoc& doc : docs) {
      nlohmann::ordered_json d;
      d["id"] = doc.id;
      if (doc.url) d["url"] = *doc.url;
      d["snippet"] = doc.snippet;
      j.push_back(std::move(d));
    }
    cassette_->store("search", key, std::move(j));
    return docs;
  }

 private:
  std::shared_ptr<Cassette> cassette_;
  SearchBackend* inner_;
};

/// Applies a shared in-flight bound to any chat backend.
class LimitedChatBackend : public ChatBackend {
 public:
  LimitedChatBackend(std::shared_ptr<ConcurrencyLimiter> limiter,
                     ChatBackend* inner)
      : limiter_(std::move(limiter)), inner_(inner) {}

  ChatResponse complete(const ChatRequest& request) override {
    auto ticket = limiter_->acquire();
    return inner_->complete(request);
  }

 private:
  std::shared_ptr<ConcurrencyLimiter> limiter_;
  ChatBackend* inner_;
};

}  // namespace cag

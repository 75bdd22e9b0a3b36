#include "cag/backends.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <thread>

namespace cag {
namespace {

class FakeTransport : public HttpTransport {
 public:
  std::vector<HttpResult> script;
  std::vector<std::string> bodies;
  std::vector<std::vector<std::pair<std::string, std::string>>> headers;
  size_t calls = 0;

  HttpResult post(const std::string&, const std::string& body,
                  const std::vector<std::pair<std::string, std::string>>& h)
      override {
    bodies.push_back(body);
    headers.push_back(h);
    if (calls >= script.size()) return script.back();
    return script[calls++];
  }
};

HttpResult ok(const std::string& body) {
  return {HttpResult::Kind::Ok, 200, body};
}

HttpResult status(int code) { return {HttpResult::Kind::Ok, code, "{}"}; }

std::string completion_body(const std::string& content) {
  nlohmann::ordered_json j;
  j["choices"] = nlohmann::ordered_json::array(
      {{{"message", {{"role", "assistant"}, {"content", content}}}}});
  j["usage"] = {{"prompt_tokens", 7}, {"completion_tokens", 3}};
  return j.dump();
}

struct Sleeps {
  std::vector<int> delays;
  std::function<void(int)> fn() {
    return [this](int ms) { delays.push_back(ms); };
  }
};

HttpChatBackend make_chat(std::unique_ptr<FakeTransport> transport,
                          Sleeps& sleeps, BackendPolicy policy = {}) {
  return HttpChatBackend("http://unused", "test-key", policy,
                         std::move(transport), sleeps.fn());
}

TEST(Fingerprint, IgnoresMaxTokensButNotTemperature) {
  ChatRequest a = user_request("m", "hello");
  ChatRequest b = a;
  b.max_tokens = 512;
  ChatRequest c = a;
  c.temperature = 0.7;
  EXPECT_EQ(request_fingerprint(a), request_fingerprint(b));
  EXPECT_NE(request_fingerprint(a), request_fingerprint(c));
  ChatRequest d = a;
  d.messages[0].content = "hello!";
  EXPECT_NE(request_fingerprint(a), request_fingerprint(d));
}

TEST(HttpChat, ParsesCompletionAndSendsBearer) {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->script = {ok(completion_body("All good."))};
  Sleeps sleeps;
  auto chat = make_chat(std::move(transport), sleeps);

  ChatResponse res = chat.complete(user_request("test-model", "ping"));
  EXPECT_EQ(res.text, "All good.");
  EXPECT_EQ(res.usage.prompt_tokens, 7);
  EXPECT_EQ(res.usage.completion_tokens, 3);
  EXPECT_FALSE(res.usage.approximate);
  ASSERT_EQ(raw->headers.size(), 1u);
  ASSERT_EQ(raw->headers[0].size(), 1u);
  EXPECT_EQ(raw->headers[0][0].first, "Authorization");
  EXPECT_EQ(raw->headers[0][0].second, "Bearer test-key");
  auto body = nlohmann::json::parse(raw->bodies[0]);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_FALSE(body.contains("max_tokens"));
  EXPECT_TRUE(sleeps.delays.empty());
}

TEST(HttpChat, RetriesTransientFailuresWithExponentialBackoff) {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->script = {{HttpResult::Kind::ConnectionError, 0, ""},
                 status(503),
                 ok(completion_body("recovered"))};
  Sleeps sleeps;
  BackendPolicy policy;
  policy.retries = 3;
  policy.backoff_base_ms = 100;
  auto chat = make_chat(std::move(transport), sleeps, policy);

  ChatResponse res = chat.complete(user_request("m", "q"));
  EXPECT_EQ(res.text, "recovered");
  EXPECT_EQ(raw->calls, 3u);
  ASSERT_EQ(sleeps.delays.size(), 2u);
  EXPECT_EQ(sleeps.delays[0], 100);
  EXPECT_EQ(sleeps.delays[1], 200);
  EXPECT_TRUE(std::is_sorted(sleeps.delays.begin(), sleeps.delays.end()));
}

TEST(HttpChat, ExhaustedRetriesThrowBackendUnavailable) {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->script = {status(500)};
  Sleeps sleeps;
  BackendPolicy policy;
  policy.retries = 2;
  auto chat = make_chat(std::move(transport), sleeps, policy);

  EXPECT_THROW(chat.complete(user_request("m", "q")), BackendUnavailable);
  EXPECT_EQ(raw->bodies.size(), 3u);  // initial try + 2 retries
  EXPECT_EQ(sleeps.delays.size(), 2u);
}

TEST(HttpChat, TimeoutSurfacesAsTimeoutError) {
  auto transport = std::make_unique<FakeTransport>();
  transport->script = {{HttpResult::Kind::TimedOut, 0, ""}};
  Sleeps sleeps;
  BackendPolicy policy;
  policy.retries = 1;
  auto chat = make_chat(std::move(transport), sleeps, policy);
  EXPECT_THROW(chat.complete(user_request("m", "q")), Timeout);
}

TEST(HttpChat, AuthFailureIsImmediate) {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->script = {status(401)};
  Sleeps sleeps;
  auto chat = make_chat(std::move(transport), sleeps);

  EXPECT_THROW(chat.complete(user_request("m", "q")), AuthFailure);
  EXPECT_EQ(raw->bodies.size(), 1u);
  EXPECT_TRUE(sleeps.delays.empty());
}

TEST(HttpChat, ClientErrorsDoNotRetry) {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  raw->script = {status(422)};
  Sleeps sleeps;
  auto chat = make_chat(std::move(transport), sleeps);

  EXPECT_THROW(chat.complete(user_request("m", "q")), BackendUnavailable);
  EXPECT_EQ(raw->bodies.size(), 1u);
  EXPECT_TRUE(sleeps.delays.empty());
}

TEST(HttpChat, MalformedPayloadIsBackendFailure) {
  auto transport = std::make_unique<FakeTransport>();
  transport->script = {ok("{\"nope\":1}")};
  Sleeps sleeps;
  auto chat = make_chat(std::move(transport), sleeps);
  EXPECT_THROW(chat.complete(user_request("m", "q")), BackendUnavailable);
}

TEST(HttpChat, RejectsEmptyRequest) {
  auto transport = std::make_unique<FakeTransport>();
  Sleeps sleeps;
  auto chat = make_chat(std::move(transport), sleeps);
  ChatRequest empty;
  empty.model = "m";
  EXPECT_THROW(chat.complete(empty), Error);
}

TEST(PolicyValidation, RejectsNonpositiveAndExcessive) {
  BackendPolicy p;
  p.retries = 0;
  EXPECT_THROW(p.validate(), Error);
  p.retries = 6;
  EXPECT_THROW(p.validate(), Error);
  p.retries = 5;
  EXPECT_NO_THROW(p.validate());
  p.max_concurrency = 0;
  EXPECT_THROW(p.validate(), Error);
}

TEST(HttpSearch, ParsesDocumentsAndTruncates) {
  auto transport = std::make_unique<FakeTransport>();
  auto* raw = transport.get();
  nlohmann::ordered_json body;
  body["documents"] = nlohmann::ordered_json::array();
  for (int i = 0; i < 4; ++i)
    body["documents"].push_back({{"id", "d" + std::to_string(i)},
                                 {"url", nullptr},
                                 {"snippet", "text " + std::to_string(i)}});
  raw->script = {ok(body.dump())};
  Sleeps sleeps;
  HttpSearchBackend search("http://unused", "/search", BackendPolicy{},
                           std::move(transport), sleeps.fn());

  auto docs = search.search("capital of France", 2);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].id, "d0");
  EXPECT_EQ(docs[1].id, "d1");
  EXPECT_FALSE(docs[0].url.has_value());
  auto sent = nlohmann::json::parse(raw->bodies[0]);
  EXPECT_EQ(sent["query"], "capital of France");
  EXPECT_EQ(sent["top_k"], 2);
}

TEST(ScriptedChat, FingerprintThenSubstringThenDefault) {
  ScriptedChatBackend chat;
  ChatRequest exact = user_request("m", "exact prompt");
  chat.script(exact, "scripted-exact");
  chat.script_contains("needle", "scripted-substr");
  chat.set_default_response("fallback");

  EXPECT_EQ(chat.complete(exact).text, "scripted-exact");
  EXPECT_EQ(chat.complete(user_request("m", "hay needle stack")).text,
            "scripted-substr");
  EXPECT_EQ(chat.complete(user_request("m", "anything else")).text, "fallback");
  EXPECT_EQ(chat.calls(), 3);
}

TEST(ScriptedChat, NoMatchWithoutDefaultThrows) {
  ScriptedChatBackend chat;
  EXPECT_THROW(chat.complete(user_request("m", "q")), BackendUnavailable);
}

TEST(ScriptedChat, UsageCountsAreApproximate) {
  ScriptedChatBackend chat;
  chat.set_default_response("three word reply");
  ChatResponse res = chat.complete(user_request("m", "one two"));
  EXPECT_TRUE(res.usage.approximate);
  EXPECT_EQ(res.usage.prompt_tokens, 2);
  EXPECT_EQ(res.usage.completion_tokens, 3);
}

TEST(MockSearch, SubstringMatchCorpusOrderTruncation) {
  MockSearchBackend search({
      {"Paris", {{"a", std::nullopt, "Paris is the capital of France."},
                 {"b", std::nullopt, "Paris hosted the 1900 games."}}},
      {"France", {{"c", std::nullopt, "France borders Spain."}}},
  });

  auto all = search.search("Tell me about Paris, France.", 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].id, "a");
  EXPECT_EQ(all[1].id, "b");
  EXPECT_EQ(all[2].id, "c");

  auto top1 = search.search("Tell me about Paris, France.", 1);
  ASSERT_EQ(top1.size(), 1u);
  EXPECT_EQ(top1[0].id, "a");

  EXPECT_TRUE(search.search("unrelated query", 5).empty());
  EXPECT_THROW(search.search("", 5), Error);
  EXPECT_THROW(search.search("Paris", 0), Error);
}

TEST(Cassette, RecordThenReplayRoundTrips) {
  auto dir = std::filesystem::temp_directory_path() / "cag_cassette_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "calls.jsonl").string();
  std::filesystem::remove(path);
  write_file(path, "");

  ScriptedChatBackend inner;
  inner.set_default_response("live answer");
  MockSearchBackend inner_search(
      {{"q", {{"doc1", std::string("http://x"), "snippet"}}}});

  ChatRequest req = user_request("m", "the question");
  std::vector<EvidenceDoc> live_docs;
  ChatResponse live;
  {
    auto cassette = std::make_shared<Cassette>(CassetteMode::Record, path);
    RecordReplayChat chat(cassette, &inner);
    RecordReplaySearch search(cassette, &inner_search);
    live = chat.complete(req);
    live_docs = search.search("q about things", 3);
  }

  auto cassette = std::make_shared<Cassette>(CassetteMode::Replay, path);
  RecordReplayChat chat(cassette, nullptr);
  RecordReplaySearch search(cassette, nullptr);

  ChatResponse replayed = chat.complete(req);
  EXPECT_EQ(replayed.text, live.text);
  EXPECT_EQ(replayed.usage.prompt_tokens, live.usage.prompt_tokens);
  EXPECT_EQ(replayed.usage.completion_tokens, live.usage.completion_tokens);
  EXPECT_EQ(replayed.usage.approximate, live.usage.approximate);

  auto docs = search.search("q about things", 3);
  ASSERT_EQ(docs.size(), live_docs.size());
  EXPECT_EQ(docs[0].id, "doc1");
  ASSERT_TRUE(docs[0].url.has_value());
  EXPECT_EQ(*docs[0].url, "http://x");
  EXPECT_EQ(docs[0].snippet, "snippet");

  EXPECT_THROW(chat.complete(user_request("m", "never recorded")),
               CassetteMiss);
  EXPECT_THROW(search.search("q about things", 4), CassetteMiss);
}

TEST(Cassette, ReplayServesVaryingTopKOnlyWhenRecorded) {
  auto dir = std::filesystem::temp_directory_path() / "cag_cassette_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "topk.jsonl").string();
  std::filesystem::remove(path);
  write_file(path, "");

  MockSearchBackend inner({{"q", {{"d1", std::nullopt, "s1"},
                                  {"d2", std::nullopt, "s2"}}}});
  {
    auto cassette = std::make_shared<Cassette>(CassetteMode::Record, path);
    RecordReplaySearch search(cassette, &inner);
    search.search("q", 1);
    search.search("q", 2);
  }
  auto cassette = std::make_shared<Cassette>(CassetteMode::Replay, path);
  RecordReplaySearch search(cassette, nullptr);
  EXPECT_EQ(search.search("q", 1).size(), 1u);
  EXPECT_EQ(search.search("q", 2).size(), 2u);
}

TEST(Limiter, BoundsInFlightUnderParallelLoad) {
  class CountingChat : public ChatBackend {
   public:
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    ChatResponse complete(const ChatRequest&) override {
      int now = ++in_flight;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
      --in_flight;
      return {"ok", {}};
    }
  };

  CountingChat inner;
  auto limiter = std::make_shared<ConcurrencyLimiter>(3);
  LimitedChatBackend chat(limiter, &inner);

  std::vector<std::thread> threads;
  for (int t = 0; t < 16; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 5; ++i) chat.complete(user_request("m", "q"));
    });
  for (auto& t : threads) t.join();

  EXPECT_LE(inner.peak.load(), 3);
  EXPECT_GT(inner.peak.load(), 0);
}

}  // namespace
}  // namespace cag

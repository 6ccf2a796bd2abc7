#include <gtest/gtest.h>

#include <httplib.h>

#include <cmath>
#include <thread>

#include "safealign/error.hpp"
#include "safealign/gateway.hpp"
#include "safealign/jsonl.hpp"
#include "test_support.hpp"

namespace safealign {
namespace {

using nlohmann::json;
using testing::add_scripted;
using testing::fast_options;
using testing::TempDir;

ChatRequest make_request(std::string backend, std::string text) {
  ChatRequest r;
  r.backend_id = std::move(backend);
  r.messages = {{Role::user, std::move(text)}};
  return r;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io_error;
}

TEST(ChatRequest, ValidateRejectsEachBrokenInvariant) {
  auto ok = make_request("b", "hi");
  EXPECT_NO_THROW(ok.validate());
  auto r = ok;
  r.messages.clear();
  EXPECT_EQ(code_of([&] { r.validate(); }), Errc::malformed_request);
  r = ok;
  r.messages = {{Role::assistant, "x"}};
  EXPECT_EQ(code_of([&] { r.validate(); }), Errc::malformed_request);
  r = ok;
  r.temperature = -0.1;
  EXPECT_EQ(code_of([&] { r.validate(); }), Errc::malformed_request);
  r = ok;
  r.top_p = 0.0;
  EXPECT_EQ(code_of([&] { r.validate(); }), Errc::malformed_request);
  r = ok;
  r.max_tokens = 0;
  EXPECT_EQ(code_of([&] { r.validate(); }), Errc::malformed_request);
}

TEST(RequestHash, IgnoresBackendAndWhitespaceButNotSampling) {
  auto a = make_request("one", "hello  world");
  auto b = make_request("two", " hello world ");
  EXPECT_EQ(request_hash(a), request_hash(b));
  b.temperature = 0.5;
  EXPECT_NE(request_hash(a), request_hash(b));
  b = a;
  b.seed = 3;
  EXPECT_NE(request_hash(a), request_hash(b));
  b = a;
  b.messages.front().role = Role::system;
  EXPECT_NE(request_hash(a), request_hash(b));
}

TEST(Gateway, CacheServesRepeatRequestsWithoutBackendCall) {
  Gateway gw(fast_options());
  auto* be = add_scripted(gw, "s", [](const ChatRequest& r) { return "echo:" + testing::last_user(r); });
  auto first = gw.complete(make_request("s", "ping"));
  auto second = gw.complete(make_request("s", "ping "));
  EXPECT_EQ(first.text, "echo:ping");
  EXPECT_FALSE(first.cached);
  EXPECT_TRUE(second.cached);
  EXPECT_EQ(second.text, first.text);
  EXPECT_EQ(be->calls(), 1);
  EXPECT_EQ(gw.stats("s").cache_hits, 1u);
}

TEST(Gateway, PersistentCacheReloads) {
  TempDir dir;
  GatewayOptions opts = fast_options();
  opts.cache_path = dir / "cache.jsonl";
  {
    Gateway gw(opts);
    add_scripted(gw, "s", [](const ChatRequest&) { return "stored"; });
    gw.complete(make_request("s", "q"));
  }
  // torn trailing line from a crash is tolerated
  std::ofstream(dir / "cache.jsonl", std::ios::app) << "{\"backend_id\":";
  Gateway gw(opts);
  auto* be = add_scripted(gw, "s", [](const ChatRequest&) { return "fresh"; });
  auto c = gw.complete(make_request("s", "q"));
  EXPECT_TRUE(c.cached);
  EXPECT_EQ(c.text, "stored");
  EXPECT_EQ(be->calls(), 0);
}

TEST(Gateway, RetriesTransientErrorsThenSucceeds) {
  std::vector<std::chrono::nanoseconds> sleeps;
  GatewayOptions opts;
  opts.sleep = [&](std::chrono::nanoseconds d) { sleeps.push_back(d); };
  opts.retry.base = std::chrono::milliseconds(100);
  Gateway gw(opts);
  int n = 0;
  add_scripted(gw, "flaky", [&](const ChatRequest&) -> std::string {
    if (++n < 3) throw Error(Errc::backend_unreachable, "503");
    return "ok";
  });
  EXPECT_EQ(gw.complete(make_request("flaky", "x")).text, "ok");
  EXPECT_EQ(gw.stats("flaky").retries, 2u);
  ASSERT_EQ(sleeps.size(), 2u);
  // full jitter keeps each wait in [half, full] of the exponential step
  EXPECT_GE(sleeps[0], std::chrono::milliseconds(50));
  EXPECT_LE(sleeps[0], std::chrono::milliseconds(100));
  EXPECT_GE(sleeps[1], std::chrono::milliseconds(100));
  EXPECT_LE(sleeps[1], std::chrono::milliseconds(200));
}

TEST(Gateway, GivesUpAfterMaxRetries) {
  Gateway gw(fast_options());
  auto* be = add_scripted(gw, "down", [](const ChatRequest&) -> std::string {
    throw Error(Errc::backend_unreachable, "refused");
  });
  EXPECT_EQ(code_of([&] { gw.complete(make_request("down", "x")); }), Errc::backend_unreachable);
  EXPECT_EQ(be->calls(), 4);  // 1 + max_retries(3)
  EXPECT_EQ(gw.stats("down").failures, 1u);
}

TEST(Gateway, NonTransientErrorsAreNotRetried) {
  Gateway gw(fast_options());
  auto* be = add_scripted(gw, "bad", [](const ChatRequest&) -> std::string {
    throw Error(Errc::malformed_backend_reply, "garbage");
  });
  EXPECT_EQ(code_of([&] { gw.complete(make_request("bad", "x")); }), Errc::malformed_backend_reply);
  EXPECT_EQ(be->calls(), 1);
}

TEST(Gateway, UnknownBackendAndMalformedRequestFailBeforeIssuing) {
  Gateway gw(fast_options());
  EXPECT_EQ(code_of([&] { gw.complete(make_request("nobody", "x")); }), Errc::unknown_backend);
  auto* be = add_scripted(gw, "s", [](const ChatRequest&) { return "x"; });
  auto r = make_request("s", "x");
  r.max_tokens = -1;
  EXPECT_EQ(code_of([&] { gw.complete(r); }), Errc::malformed_request);
  EXPECT_EQ(be->calls(), 0);
}

TEST(Gateway, RateLimitSpacesCallsAndBoundsTheQueue) {
  GatewayOptions opts = fast_options();
  opts.max_rate_wait = std::chrono::milliseconds(150);
  Gateway gw(opts);
  BackendSpec spec;
  spec.id = "slow";
  spec.rate_limit = 20.0;  // one slot per 50 ms
  gw.register_backend(spec, std::make_unique<testing::ScriptedBackend>([](const ChatRequest& r) {
    return testing::last_user(r);
  }));
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) gw.complete(make_request("slow", "q" + std::to_string(i)));
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  EXPECT_GE(elapsed, std::chrono::milliseconds(95));

  // eight concurrent callers need 400 ms of slots; some exceed the 150 ms bound
  std::atomic<int> timeouts{0};
  {
    std::vector<std::jthread> pool;
    for (int i = 0; i < 8; ++i) {
      pool.emplace_back([&, i] {
        try {
          gw.complete(make_request("slow", "burst" + std::to_string(i)));
        } catch (const Error& e) {
          if (e.code() == Errc::rate_limit_timeout) ++timeouts;
        }
      });
    }
  }
  EXPECT_GT(timeouts.load(), 0);
}

TEST(MockUniform, PerplexityInputsAreUniform) {
  Gateway gw(fast_options());
  BackendSpec spec;
  spec.id = "m";
  spec.kind = BackendKind::mock_uniform;
  spec.vocab_size = 10;
  spec.supports_logprobs = true;
  gw.register_backend(spec);
  auto lps = gw.score_logprobs("m", "three  words here");
  ASSERT_EQ(lps.size(), 3u);
  for (const auto& t : lps) EXPECT_DOUBLE_EQ(t.logprob, -std::log(10.0));
  EXPECT_TRUE(gw.score_logprobs("m", "   ").empty());
  auto c1 = gw.complete(make_request("m", "a"));
  auto c2 = gw.complete(make_request("m", "b"));
  EXPECT_NE(c1.text, c2.text);
}

TEST(Gateway, LogprobsRequireCapability) {
  Gateway gw(fast_options());
  add_scripted(gw, "plain", [](const ChatRequest&) { return "x"; });
  EXPECT_EQ(code_of([&] { gw.score_logprobs("plain", "text"); }), Errc::unsupported_capability);
}

TEST(Gateway, PositiveLogprobIsRejected) {
  Gateway gw(fast_options());
  add_scripted(
      gw, "weird", [](const ChatRequest&) { return "x"; },
      [](std::string_view) { return std::vector<TokenLogprob>{{"a", -1.0}, {"b", 0.5}}; });
  EXPECT_EQ(code_of([&] { gw.score_logprobs("weird", "a b"); }), Errc::malformed_backend_reply);
}

TEST(Fixture, ReplaysByRequestHashAndReportsMisses) {
  TempDir dir;
  auto req = make_request("fx", "what is 2+2");
  json row = {{"request_hash", request_hash(req)}, {"text", "4"}};
  json score_row = {{"request_hash", scoring_hash("some prompt")},
                    {"text", ""},
                    {"token_logprobs", json::array({json::array({"some", -0.5}), json::array({"prompt", -1.5})})}};
  auto path = dir.write("fx.jsonl", jsonl::dump(row) + "\n" + jsonl::dump(score_row) + "\n");
  Gateway gw(fast_options());
  BackendSpec spec;
  spec.id = "fx";
  spec.kind = BackendKind::fixture;
  spec.fixture = path;
  spec.supports_logprobs = true;
  gw.register_backend(spec);
  EXPECT_EQ(gw.complete(req).text, "4");
  EXPECT_EQ(code_of([&] { gw.complete(make_request("fx", "unknown")); }), Errc::fixture_miss);
  EXPECT_EQ(gw.stats("fx").retries, 0u);
  auto lps = gw.score_logprobs("fx", "some  prompt");
  ASSERT_EQ(lps.size(), 2u);
  EXPECT_DOUBLE_EQ(lps[1].logprob, -1.5);
}

TEST(BackendSpec, ProblemsAndJson) {
  BackendSpec s;
  s.id = "h";
  s.kind = BackendKind::http_chat;
  s.rate_limit = 0;
  auto p = s.problems();
  EXPECT_EQ(p.size(), 2u);
  s.endpoint = "http://localhost:1/v1";
  s.rate_limit = 2;
  EXPECT_TRUE(s.problems().empty());
  EXPECT_EQ(s.api_key_env(), "SAFEALIGN_API_KEY_H");
  s.id = "gpt-4o.mini";
  EXPECT_EQ(s.api_key_env(), "SAFEALIGN_API_KEY_GPT_4O_MINI");
  json j = s;
  auto back = j.get<BackendSpec>();
  EXPECT_EQ(back.endpoint, s.endpoint);
  EXPECT_EQ(back.kind, BackendKind::http_chat);
  EXPECT_THROW(json({{"id", "x"}, {"kind", "telepathy"}}).get<BackendSpec>(), Error);
}

class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++chat_calls;
      last_auth = req.get_header_value("Authorization");
      last_body = json::parse(req.body);
      if (fail_next > 0) {
        --fail_next;
        res.status = 429;
        return;
      }
      const std::string content = last_body["messages"].back()["content"];
      res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "re:" + content}}}}}}}.dump(),
                      "application/json");
    });
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body = json::parse(req.body);
      json lp = {{"tokens", {"a", "b", "c"}}, {"token_logprobs", {nullptr, -0.5, -1.5}}};
      res.set_content(json{{"choices", {{{"text", ""}, {"logprobs", lp}}}}}.dump(), "application/json");
    });
    port = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::jthread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() { server_.stop(); }

  int port = 0;
  std::atomic<int> chat_calls{0};
  std::atomic<int> fail_next{0};
  std::string last_auth;
  json last_body;

 private:
  httplib::Server server_;
  std::jthread thread_;
};

TEST(HttpChat, PostsOpenAiShapedRequestsAndRetries429) {
  StubServer stub;
  stub.fail_next = 1;
  BackendSpec spec;
  spec.id = "local";
  spec.kind = BackendKind::http_chat;
  spec.endpoint = "http://127.0.0.1:" + std::to_string(stub.port) + "/v1/";
  spec.model = "tiny";
  spec.supports_logprobs = true;
  Gateway gw(fast_options());
  gw.register_backend(spec, std::make_unique<HttpChatBackend>(spec, std::string("k123")));
  auto req = make_request("local", "hello");
  req.seed = 9;
  auto c = gw.complete(req);
  EXPECT_EQ(c.text, "re:hello");
  EXPECT_EQ(stub.chat_calls.load(), 2);
  EXPECT_EQ(stub.last_auth, "Bearer k123");
  EXPECT_EQ(stub.last_body["model"], "tiny");
  EXPECT_EQ(stub.last_body["seed"], 9);
  EXPECT_EQ(stub.last_body["max_tokens"], 512);

  auto lps = gw.score_logprobs("local", "a b c");
  ASSERT_EQ(lps.size(), 2u);  // first token has no conditional logprob
  EXPECT_DOUBLE_EQ(lps[0].logprob, -0.5);
  EXPECT_EQ(stub.last_body["echo"], true);
  EXPECT_EQ(stub.last_body["max_tokens"], 0);
}

TEST(HttpChat, UnreachableEndpointIsTransient) {
  BackendSpec spec;
  spec.id = "gone";
  spec.kind = BackendKind::http_chat;
  spec.endpoint = "http://127.0.0.1:1/v1";
  spec.max_retries = 1;
  spec.timeout_seconds = 1;
  Gateway gw(fast_options());
  gw.register_backend(spec, std::make_unique<HttpChatBackend>(spec, std::nullopt));
  EXPECT_EQ(code_of([&] { gw.complete(make_request("gone", "x")); }), Errc::backend_unreachable);
  EXPECT_EQ(gw.stats("gone").issued, 2u);
}

}  // namespace
}  // namespace safealign

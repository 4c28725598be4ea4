// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/errors.hpp"
#include "evisearch/live.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <mutex>
#include <thread>

using namespace evisearch;
using namespace evisearch::live;
using backend::Part;
using nlohmann::json;

namespace {

/// Local stand-in for an OpenAI-compatible endpoint.
class FakeProvider {
 public:
  FakeProvider() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      bodies.push_back(json::parse(req.body));
      auth.push_back(req.get_header_value("Authorization"));
      if (fail_next > 0) {
        --fail_next;
        res.status = 503;
        res.set_content("overloaded", "text/plain");
        return;
      }
      res.set_content(chat_reply.dump(), "application/json");
    });
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      const json body = json::parse(req.body);
      json data = json::array();
      // Reversed order with explicit indexes.
      for (std::size_t i = body["input"].size(); i-- > 0;)
        data.push_back({{"index", i}, {"embedding", {static_cast<double>(i), 1.0}}});
      res.set_content(json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/"; }

  std::vector<json> bodies;
  std::vector<std::string> auth;
  json chat_reply;
  int fail_next = 0;

 private:
  httplib::Server server_;
  std::thread thread_;
  std::mutex mu_;
  int port_ = 0;
};

backend::ModelRequest tool_request() {
  backend::ModelRequest r;
  r.mode = backend::Mode::kToolLoop;
  r.agent = backend::AgentRole::kAgentB;
  r.system_prompt = "sys";
  r.user_content.push_back(Part::text_part("task"));
  r.tools.push_back({"lookup", "d", {{"type", "object"}, {"properties", {{"page", {{"type", "integer"}}}}}, {"required", {"page"}}}});
  return r;
}

}  // namespace

TEST_SUITE("live") {

TEST_CASE("chat payload shape") {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "p.png", "IMG");
  auto r = tool_request();
  backend::Turn t;
  t.preface.push_back(Part::text_part("next batch"));
  t.call = {"", "lookup", {{"page", 2}}};
  t.result = R"({"page":2})";
  t.attachments.push_back(Part::image((dir / "p.png").string()));
  t.attachments.push_back(Part::image((dir / "missing.png").string()));
  r.turns.push_back(t);
  r.follow_up.push_back(Part::text_part("fix it"));
  const json p = build_chat_payload(r, "m1");
  CHECK(p["model"] == "m1");
  CHECK(p["temperature"] == 0.0);
  CHECK(p["tool_choice"] == "required");
  CHECK(p["tools"][0]["function"]["name"] == "lookup");
  const auto& msgs = p["messages"];
  REQUIRE(msgs.size() == 7);
  CHECK(msgs[0]["role"] == "system");
  CHECK(msgs[1]["content"][0]["text"] == "task");
  CHECK(msgs[2]["content"][0]["text"] == "next batch");
  CHECK(msgs[3]["tool_calls"][0]["id"] == "call_0");
  CHECK(msgs[3]["tool_calls"][0]["function"]["arguments"] == R"({"page":2})");
  CHECK(msgs[4]["role"] == "tool");
  CHECK(msgs[4]["tool_call_id"] == "call_0");
  CHECK(msgs[5]["content"][0]["image_url"]["url"] == "data:image/png;base64,SU1H");
  CHECK(msgs[5]["content"][1]["type"] == "text");
  CHECK(msgs[6]["content"][0]["text"] == "fix it");

  backend::ModelRequest s;
  s.mode = backend::Mode::kDocumentQuery;
  s.user_content.push_back(Part::document("body", "doc-1"));
  s.output_schema = {{"type", "object"}};
  const json q = build_chat_payload(s, "m2");
  CHECK(q["response_format"]["json_schema"]["schema"] == json{{"type", "object"}});
  CHECK(q["messages"][1]["content"][0]["text"] == "Document doc-1:\nbody");
  CHECK_FALSE(q.contains("tools"));
}

TEST_CASE("chat response parsing") {
  const json tool = {{"choices", {{{"message", {{"tool_calls", {{{"id", "c9"}, {"function", {{"name", "lookup"}, {"arguments", "{\"page\":1}"}}}}}}}}}}},
                     {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 3}}}};
  auto r = parse_chat_response(tool);
  CHECK(r.is_tool_call);
  CHECK(r.tool_call_id == "c9");
  CHECK(r.tool_name == "lookup");
  CHECK(r.text == "{\"page\":1}");
  CHECK(r.input_tokens == 12);
  CHECK(r.output_tokens == 3);
  r = parse_chat_response({{"choices", {{{"message", {{"content", "{\"a\":1}"}}}}}}});
  CHECK_FALSE(r.is_tool_call);
  CHECK(r.text == "{\"a\":1}");
  CHECK(r.input_tokens == 0);
  CHECK_THROWS_AS(parse_chat_response({{"choices", json::array()}}), ParseError);
}

TEST_CASE("chat backend over HTTP with retries") {
  FakeProvider fake;
  fake.chat_reply = {{"choices", {{{"message", {{"tool_calls", {{{"id", "c1"}, {"function", {{"name", "lookup"}, {"arguments", "{\"page\":3}"}}}}}}}}}}},
                     {"usage", {{"prompt_tokens", 40}, {"completion_tokens", 5}}}};
  fake.fail_next = 1;
  ::setenv("EVISEARCH_UNIT_KEY", "sekret", 1);
  BackendConfig c;
  c.name = "openai-compatible";
  c.model = "m";
  c.endpoint = fake.endpoint();
  c.api_key_env = "EVISEARCH_UNIT_KEY";
  c.timeout_seconds = 5;
  auto model = make_backend(c);
  backend::UsageLedger ledger;
  const auto res = backend::invoke(tool_request(), *model, ledger);
  CHECK(res.attempts == 2);
  CHECK(res.payload.call.arguments["page"] == 3);
  const auto recs = ledger.records();
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].outcome == "transport_error");
  CHECK(recs[1].input_tokens == 40);
  REQUIRE(fake.auth.size() == 2);
  CHECK(fake.auth[0] == "Bearer sekret");
  CHECK(fake.bodies[1]["model"] == "m");

  fake.chat_reply = {{"unexpected", true}};
  CHECK_THROWS_AS(model->complete(tool_request()), RetryableError);
}

TEST_CASE("http embedder restores input order") {
  FakeProvider fake;
  BackendConfig c;
  c.name = "openai-compatible";
  c.model = "e";
  c.endpoint = fake.endpoint();
  auto emb = make_embedder(c);
  const auto v = emb->embed({"a", "b", "c"});
  REQUIRE(v.size() == 3);
  CHECK(v[0] == retrieval::EmbeddingVector{0.0, 1.0});
  CHECK(v[2] == retrieval::EmbeddingVector{2.0, 1.0});
  CHECK(emb->name() == "openai-compatible:e");
}

TEST_CASE("unreachable endpoints are retryable") {
  BackendConfig c;
  c.name = "openai-compatible";
  c.model = "m";
  c.endpoint = "http://127.0.0.1:1/v1";
  c.timeout_seconds = 1;
  auto model = make_backend(c);
  CHECK_THROWS_AS(model->complete(tool_request()), RetryableError);
}

TEST_CASE("registry and config") {
  CHECK(make_backend(BackendConfig{})->name() == "mock");
  BackendConfig c;
  c.name = "openai-compatible";
  CHECK_THROWS_AS(make_backend(c), ValidationError);
  c.name = "llama-in-a-box";
  CHECK_THROWS_AS(make_backend(c), ValidationError);
  c.name = "openai-compatible";
  c.model = "m";
  c.endpoint = "not a url";
  CHECK_THROWS_AS(make_backend(c), ValidationError);
  c = {};
  c.name = "gemini-flash";
  CHECK(make_backend(c)->name() == "gemini-flash");

  BackendConfig h;
  h.name = "hash";
  h.model = "16";
  CHECK(make_embedder(h)->embed({"x"})[0].size() == 16);
  h.model = "sixteen";
  CHECK_THROWS_AS(make_embedder(h), ValidationError);

  const auto parsed = backend_config_from_json({{"name", "openai-compatible"}, {"model", "x"}, {"max_in_flight", 2}});
  CHECK(parsed.max_in_flight == 2);
  CHECK(backend_config_from_json(to_json(parsed)) == parsed);
  CHECK_THROWS_AS(backend_config_from_json({{"max_in_flight", 0}}), ValidationError);
  CHECK_THROWS_AS(backend_config_from_json(json::array()), ParseError);
}

TEST_CASE("in-flight limiter bounds concurrency") {
  InFlightLimiter limiter(2);
  std::atomic<int> active{0}, worst{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i)
    threads.emplace_back([&] {
      limiter.acquire();
      const int now = ++active;
      int prev = worst.load();
      while (now > prev && !worst.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      --active;
      limiter.release();
    });
  for (auto& t : threads) t.join();
  CHECK(worst.load() <= 2);
  CHECK(limiter.peak() <= 2);
}

}  // TEST_SUITE

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/agents.hpp"
#include "evisearch/errors.hpp"
#include "evisearch/mock.hpp"
#include "support.hpp"

#include <doctest.h>

#include <thread>

using namespace evisearch;
using namespace evisearch::agents;
using mock::ScriptedBackend;
using mock::ScriptStep;
using nlohmann::json;

namespace {

struct Fixture {
  docmodel::ParsedDocument doc = docmodel::load_document_file(testsupport::fixture("synthetic_doc.json"));
  schema::Schema schema = schema::load_schema_file(testsupport::fixture("schema_20.json"));
  std::vector<schema::ColumnBatch> batches = schema::pack_batches(schema);
  retrieval::HashEmbedder embedder{64};
  retrieval::DocumentIndex index = retrieval::build_index(doc, embedder);
};

// One entry per column; the first column reported from `page`, the rest Not reported.
json entries_for(const schema::ColumnBatch& batch, int page, bool quote) {
  json arr = json::array();
  bool first = true;
  for (const auto& c : batch.columns) {
    json attr = nullptr;
    std::string value = "Not reported";
    if (first) {
      value = "value of " + c.id;
      attr = {{"page", page}, {"modality", "text"}, {"verbatim_quote", quote ? json("quoted") : json(nullptr)}};
    }
    arr.push_back({{"column_id", c.id}, {"value", value}, {"reasoning", "r"}, {"attribution", attr}});
    first = false;
  }
  return arr;
}

std::string submit(const schema::ColumnBatch& batch, int page = 1) {
  return json{{"entries", entries_for(batch, page, false)}}.dump();
}

std::string pages_args(std::initializer_list<int> pages) { return json{{"pages", pages}}.dump(); }

std::size_t count_of(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

}  // namespace

TEST_SUITE("agents") {

TEST_CASE("extraction records round trip through JSON") {
  Extraction e = testsupport::extraction("os_hr", "0.71", 4, docmodel::Modality::kTable, AgentId::kAgentB);
  e.attribution->verbatim_quote = "q";
  CHECK(extraction_from_json(to_json(e)) == e);
  const Extraction f = failed_extraction("x", AgentId::kAgentA, "boom");
  CHECK(f.failed);
  CHECK_FALSE(f.reported());
  CHECK(extraction_from_json(to_json(f)) == f);
  CHECK_THROWS_AS(parse_agent_id("agent_c"), ParseError);
  CHECK(cache_pointer(7) == "[[cached:page=7]]");
}

TEST_CASE("Agent A needs quotes and in-range pages, retrying otherwise") {
  Fixture fx;
  const auto& batch = fx.batches[0];
  ScriptedBackend b;
  b.push(ScriptStep::output(json{{"extractions", entries_for(batch, 1, false)}}.dump()));
  b.push(ScriptStep::output(json{{"extractions", entries_for(batch, 9, true)}}.dump()));
  b.push(ScriptStep::output(json{{"extractions", entries_for(batch, 2, true)}}.dump()));
  backend::UsageLedger ledger;
  const auto out = run_agent_a(fx.doc, batch, b, ledger);
  REQUIRE(out.size() == batch.columns.size());
  CHECK(out[0].attribution->page == 2);
  CHECK(out[0].attribution->verbatim_quote == std::optional<std::string>("quoted"));
  CHECK(out[1].value == "Not reported");
  CHECK(ledger.size() == 3);
  const auto reqs = b.requests();
  CHECK(reqs[1].follow_up.back().text.find("verbatim_quote") != std::string::npos);
  CHECK(reqs[2].follow_up.back().text.find("exceeds document length 6") != std::string::npos);
  REQUIRE(reqs[0].user_content.size() == 2);
  CHECK(reqs[0].user_content[0].kind == backend::Part::Kind::kDocument);
  CHECK(reqs[0].user_content[0].text == docmodel::render_markdown(fx.doc));
}

TEST_CASE("Agent A entries are reordered and incomplete output is rejected") {
  Fixture fx;
  const auto& batch = fx.batches[0];
  json shuffled = entries_for(batch, 1, true);
  std::reverse(shuffled.begin(), shuffled.end());
  json missing = entries_for(batch, 1, true);
  missing.erase(missing.begin() + 1);
  ScriptedBackend b;
  b.push(ScriptStep::output(json{{"extractions", missing}}.dump()));
  b.push(ScriptStep::output(json{{"extractions", shuffled}}.dump()));
  backend::UsageLedger ledger;
  const auto out = run_agent_a(fx.doc, batch, b, ledger);
  for (std::size_t i = 0; i < batch.columns.size(); ++i) CHECK(out[i].column_id == batch.columns[i].id);
  CHECK(b.requests()[1].follow_up.back().text.find("missing entry for column") != std::string::npos);
}

TEST_CASE("Agent A failure degrades the whole batch") {
  Fixture fx;
  ScriptedBackend b;
  for (int i = 0; i < 3; ++i) b.push(ScriptStep::output("garbage"));
  backend::UsageLedger ledger;
  const auto out = run_agent_a(fx.doc, fx.batches[2], b, ledger);
  CHECK(std::all_of(out.begin(), out.end(), [](const Extraction& e) { return e.failed && e.value == "Not reported"; }));
  CHECK(ledger.size() == 3);
}

TEST_CASE("Agent B starts without page content and submits after searching") {
  Fixture fx;
  const auto& batch = fx.batches[0];
  ScriptedBackend b;
  b.push(ScriptStep::tool_call("get_chunks_by_page", pages_args({1, 2})));
  b.push(ScriptStep::tool_call("search_chunks", R"({"query":"randomization ratio"})"));
  b.push(ScriptStep::tool_call("get_chunks_by_page", pages_args({1})));
  b.push(ScriptStep::tool_call("submit_extraction", submit(batch)));
  AgentBSession session(fx.doc.doc_id);
  backend::UsageLedger ledger;
  const auto out = run_agent_b(fx.doc, fx.index, batch, b, fx.embedder, session, ledger);
  REQUIRE(out.size() == batch.columns.size());
  CHECK(out[0].agent == AgentId::kAgentB);
  CHECK_FALSE(out[0].attribution->verbatim_quote.has_value());

  const auto reqs = b.requests();
  REQUIRE(reqs.size() == 4);
  CHECK(reqs[0].turns.empty());
  REQUIRE(reqs[0].user_content.size() == 1);
  CHECK(reqs[0].user_content[0].kind == backend::Part::Kind::kText);
  CHECK(json::parse(reqs[0].user_content[0].text)["task"] == "extract");
  for (int p = 1; p <= fx.doc.n_pages; ++p)
    CHECK(backend::flatten_request(reqs[0]).find(json(docmodel::get_page(fx.doc, p).text).dump()) == std::string::npos);
  CHECK(reqs[3].turns.size() == 3);
  CHECK(reqs[3].turns[2].result == json{{"pages", {{{"page", 1}, {"content", cache_pointer(1)}}}}}.dump());
  CHECK(session.transcript.size() == 4);
  const auto sent = session.cache.transmissions();
  CHECK(std::set<int>(sent.begin(), sent.end()).size() == sent.size());
  CHECK(session.cache.transmitted_chars() > 0);
  CHECK(ledger.size() == 4);
}

TEST_CASE("Agent B sessions carry the conversation across batches") {
  Fixture fx;
  ScriptedBackend b;
  b.push(ScriptStep::tool_call("get_chunks_by_page", pages_args({3})));
  b.push(ScriptStep::tool_call("submit_extraction", submit(fx.batches[0], 3)));
  b.push(ScriptStep::tool_call("get_chunks_by_page", pages_args({3, 4})));
  b.push(ScriptStep::tool_call("submit_extraction", submit(fx.batches[1], 4)));
  AgentBSession session(fx.doc.doc_id);
  backend::UsageLedger ledger;
  run_agent_b(fx.doc, fx.index, fx.batches[0], b, fx.embedder, session, ledger);
  run_agent_b(fx.doc, fx.index, fx.batches[1], b, fx.embedder, session, ledger);

  const auto reqs = b.requests();
  REQUIRE(reqs.size() == 4);
  // The second batch opens with the first batch's transcript and its own task as a follow-up.
  CHECK(reqs[2].turns.size() == 2);
  REQUIRE(reqs[2].follow_up.size() == 1);
  CHECK(json::parse(reqs[2].follow_up[0].text)["batch_id"] == 1);
  CHECK(reqs[3].follow_up.empty());
  REQUIRE(reqs[3].turns.size() == 3);
  REQUIRE(reqs[3].turns[2].preface.size() == 1);
  CHECK(json::parse(reqs[3].turns[2].preface[0].text)["batch_id"] == 1);
  CHECK(reqs[3].turns[2].result.find(cache_pointer(3)) != std::string::npos);

  const std::string page3 = json(docmodel::get_page(fx.doc, 3).text).dump();
  const std::string inner = page3.substr(1, page3.size() - 2);
  CHECK(count_of(backend::flatten_request(reqs[3]), inner) == 1);
  CHECK(session.cache.transmissions() == std::vector<int>{3, 4});

  AgentBSession other("another-doc");
  CHECK_THROWS_AS(run_agent_b(fx.doc, fx.index, fx.batches[0], b, fx.embedder, other, ledger), ValidationError);
}

TEST_CASE("Agent B tool errors are fed back and the turn budget is enforced") {
  Fixture fx;
  const auto& batch = fx.batches[2];
  ScriptedBackend b;
  b.push(ScriptStep::tool_call("get_chunks_by_page", pages_args({0, 9})));
  json incomplete = entries_for(batch, 1, false);
  incomplete.erase(incomplete.begin());
  b.push(ScriptStep::tool_call("submit_extraction", json{{"entries", incomplete}}.dump()));
  b.push(ScriptStep::tool_call("submit_extraction", submit(batch)));
  AgentBSession session(fx.doc.doc_id);
  backend::UsageLedger ledger;
  const auto out = run_agent_b(fx.doc, fx.index, batch, b, fx.embedder, session, ledger);
  CHECK_FALSE(out[0].failed);
  CHECK(session.transcript[0].is_error);
  CHECK(session.transcript[0].result.find("pages out of range 1..6: 0 9") != std::string::npos);
  CHECK(session.transcript[1].is_error);
  CHECK(session.transcript[1].result.find("missing entry") != std::string::npos);
  CHECK(session.cache.transmissions().empty());

  ScriptedBackend loop;
  for (int i = 0; i < 3; ++i) loop.push(ScriptStep::tool_call("search_chunks", R"({"query":"anything"})"));
  AgentOptions opt;
  opt.max_turns = 3;
  backend::UsageLedger l2;
  AgentBSession s2(fx.doc.doc_id);
  const auto failed = run_agent_b(fx.doc, fx.index, batch, loop, fx.embedder, s2, l2, opt);
  CHECK(std::all_of(failed.begin(), failed.end(), [](const Extraction& e) { return e.failed; }));
  CHECK(l2.size() == 3);
  CHECK(failed[0].reasoning.find("3 turns") != std::string::npos);
}

TEST_CASE("unknown tools produce an error result") {
  Fixture fx;
  AgentBSession session(fx.doc.doc_id);
  AgentBContext ctx{fx.doc, fx.index, fx.batches[0], session.cache, fx.embedder, 5};
  const auto r = handle_tool_call({"c", "format_disk", json::object()}, ctx);
  CHECK(r.is_error);
  CHECK_FALSE(r.terminal);
  const auto s = handle_tool_call({"c", "search_chunks", {{"query", "median overall survival"}}}, ctx);
  CHECK_FALSE(s.is_error);
  CHECK(json::parse(s.content)["hits"].size() == 5);
}

TEST_CASE("session cache claims are atomic") {
  SessionCache cache("d");
  std::vector<std::thread> threads;
  std::atomic<int> fresh{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int p = 1; p <= 50; ++p)
        if (cache.claim(p, 10)) ++fresh;
    });
  for (auto& t : threads) t.join();
  CHECK(fresh == 50);
  CHECK(cache.transmitted_chars() == 500);
  CHECK(cache.provided_pages().size() == 50);
  CHECK(cache.contains(50));
  CHECK_FALSE(cache.contains(51));
}

}  // TEST_SUITE

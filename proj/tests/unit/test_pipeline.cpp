// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/errors.hpp"
#include "evisearch/mock.hpp"
#include "evisearch/pipeline.hpp"
#include "evisearch/prompts.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace evisearch;
using namespace evisearch::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

PipelineConfig fixture_config(const fs::path& out) {
  auto c = load_config_file(testsupport::fixture("config_mock.json"));
  c.output_dir = out;
  return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = testsupport::read_file(e.path());
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config parsing resolves paths and applies defaults") {
  const auto c = load_config_file(testsupport::fixture("config_mock.json"));
  CHECK(c.schema_path == testsupport::fixture("schema_20.json"));
  REQUIRE(c.documents.size() == 1);
  CHECK(c.documents[0].filename() == "synthetic_doc.json");
  CHECK(c.mode == Mode::kEviSearch);
  CHECK(c.extraction.name == "mock");
  CHECK(c.reconciliation.name == "mock");
  CHECK(c.embedder.name == "hash");
  CHECK(c.embedder.model == "256");
  CHECK(c.fixed_time == std::optional<std::string>("2026-01-01T00:00:00.000Z"));
  CHECK_NOTHROW(validate_config(c));
  CHECK(config_from_json(to_json(c)).embedder == c.embedder);

  CHECK_THROWS_AS(config_from_json(json{{"schema", "s.json"}, {"colour", "red"}}), ValidationError);
  CHECK_THROWS_AS(config_from_json(json{{"mode", "triple"}}), ParseError);
  CHECK_THROWS_AS(config_from_json(json{{"k", "five"}}), ParseError);
  CHECK_THROWS_AS(config_from_json(json::array()), ParseError);
  CHECK(parse_mode("agent_a_only") == Mode::kAgentAOnly);

  auto bad = c;
  bad.batch_limit = 0;
  bad.top_k = 0;
  bad.retry_limit = -1;
  bad.schema_path = "/nonexistent/schema.json";
  try {
    validate_config(bad);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.offenders().size() == 4);
  }
}

TEST_CASE("startup failures write nothing") {
  testsupport::TempDir dir;
  auto c = fixture_config(dir / "store");
  c.schema_path = dir / "missing.json";
  CHECK_THROWS_AS(cmd_extract(c), ValidationError);
  CHECK_FALSE(fs::exists(dir / "store"));

  c = fixture_config(dir / "store");
  c.extraction.name = "no-such-backend";
  CHECK_THROWS_AS(cmd_extract(c), ValidationError);
  CHECK_FALSE(fs::exists(dir / "store"));
}

TEST_CASE("a corrupt document is isolated") {
  testsupport::TempDir dir;
  testsupport::write_file(dir / "broken.json", "{\"doc_id\": \"broken\", \"n_pages\": ");
  auto c = fixture_config(dir / "store");
  c.documents.push_back(dir / "broken.json");
  const auto summary = cmd_extract(c);
  REQUIRE(summary.documents.size() == 2);
  CHECK(summary.documents[0].ok);
  CHECK(summary.documents[0].run_version == 1);
  CHECK_FALSE(summary.documents[1].ok);
  CHECK_FALSE(summary.documents[1].error.empty());
  CHECK(summary.exit_code() == 1);
  store::Store st(dir / "store");
  CHECK(st.list_documents() == std::vector<std::string>{"synthetic-arise3"});
  CHECK(st.load_run("synthetic-arise3").cells.size() == 20);
}

TEST_CASE("two runs produce byte-identical outputs") {
  testsupport::TempDir dir;
  const auto first = cmd_extract(fixture_config(dir / "one"));
  const auto second = cmd_extract(fixture_config(dir / "two"));
  CHECK(first.exit_code() == 0);
  CHECK(second.exit_code() == 0);
  const auto a = tree(dir / "one");
  const auto b = tree(dir / "two");
  CHECK(a.size() >= 7);
  CHECK(a == b);
  CHECK(a.count("synthetic-arise3/runs/v0001/ledger.json") == 1);
  CHECK(a.count("synthetic-arise3/document.json") == 1);
  CHECK(first.documents[0].totals == second.documents[0].totals);
  CHECK(first.documents[0].totals.api_calls > 0);
}

TEST_CASE("run_document covers every column in schema order") {
  const auto doc = docmodel::load_document_file(testsupport::fixture("synthetic_doc.json"));
  const auto schema = schema::load_schema_file(testsupport::fixture("schema_20.json"));
  mock::HeuristicBackend model;
  retrieval::HashEmbedder embedder(256);
  Backends backends{model, model, embedder};
  const FixedClock clock(parse_iso8601("2026-01-01T00:00:00.000Z"));
  const auto run = run_document(doc, schema, RunSettings{}, backends, clock);
  REQUIRE(run.cells.size() == schema.columns.size());
  for (std::size_t i = 0; i < run.cells.size(); ++i) {
    CHECK(run.cells[i].column_id == schema.columns[i].id);
    CHECK(reconciler::check_cell(run.cells[i]).empty());
  }
  CHECK(run.batches.size() == 3);
  CHECK(run.extractions_b.size() == 20);
  CHECK(run.manifest.markdown_fallback_agent_a);
  CHECK(run.manifest.page_images_available);
  CHECK(run.manifest.started_at == "2026-01-01T00:00:00.000Z");
  CHECK(run.extractions_json()["agent_b_session"]["transmitted_chars"] == run.agent_b_transmitted_chars);
  std::set<int> distinct(run.agent_b_transmissions.begin(), run.agent_b_transmissions.end());
  CHECK(distinct.size() == run.agent_b_transmissions.size());
}

TEST_CASE("single-agent modes") {
  const auto doc = docmodel::load_document_file(testsupport::fixture("synthetic_doc.json"));
  const auto schema = schema::load_schema_file(testsupport::fixture("schema_20.json"));
  const FixedClock clock;
  for (const Mode mode : {Mode::kAgentAOnly, Mode::kParsedSingle}) {
    CAPTURE(to_string(mode));
    mock::HeuristicBackend heuristic;
    mock::ScriptedBackend model(&heuristic);
    retrieval::HashEmbedder embedder(64);
    Backends backends{model, model, embedder};
    RunSettings s;
    s.mode = mode;
    const auto run = run_document(doc, schema, s, backends, clock);
    CHECK(run.extractions_b.empty());
    CHECK(run.cells.size() == 20);
    for (const auto& r : run.ledger.records()) CHECK(r.agent == backend::AgentRole::kAgentA);
    CHECK(run.ledger.size() == 3);
    CHECK(run.pass2_invocations == 0);
    CHECK(run.manifest.mode == to_string(mode));
    for (const auto& c : run.cells) {
      CHECK(c.pass == reconciler::Pass::kPass1);
      CHECK(c.extraction_b == c.extraction_a);
      CHECK(reconciler::check_cell(c).empty());
    }
    const auto first = model.requests().front();
    if (mode == Mode::kParsedSingle)
      CHECK(first.system_prompt != std::string(prompts::get(prompts::PromptId::kAgentA)));
    else
      CHECK(first.system_prompt == std::string(prompts::get(prompts::PromptId::kAgentA)));
  }
}

TEST_CASE("evaluate a stored run") {
  testsupport::TempDir dir;
  REQUIRE(cmd_extract(fixture_config(dir / "store")).exit_code() == 0);
  EvaluateOptions o;
  o.run_dir = dir / "store" / "synthetic-arise3";
  o.gold_path = testsupport::fixture("synthetic_gold.json");
  o.schema_path = testsupport::fixture("schema_20.json");
  o.out_dir = dir / "eval";
  const auto rep = cmd_evaluate(o);
  const auto& all = rep.strata.at("all");
  CHECK(*all.correctness == doctest::Approx(100.0));
  CHECK(std::fabs(*all.completeness - 94.7) <= 0.05);
  CHECK(std::fabs(*all.overall - 97.4) <= 0.05);
  for (const char* f : {"report.json", "category_table.csv", "modality_table.csv", "verdicts.jsonl"})
    CHECK(fs::exists(dir / "eval" / f));

  o.run_dir = dir / "store" / "synthetic-arise3" / "runs" / "v0001";
  o.out_dir.clear();
  CHECK(cmd_evaluate(o).strata.at("all").attempted == all.attempted);

  // Gold built from the run's own values scores 100 everywhere.
  store::Store st(dir / "store");
  json gold = {{"doc_id", "synthetic-arise3"}, {"cells", json::array()}};
  for (const auto& c : st.load_run("synthetic-arise3").cells)
    gold["cells"].push_back({{"column_id", c.column_id}, {"value", c.final_value}});
  testsupport::write_file(dir / "self_gold.json", gold.dump());
  o.gold_path = dir / "self_gold.json";
  const auto perfect = cmd_evaluate(o);
  CHECK(*perfect.strata.at("all").correctness == 100.0);
  CHECK(*perfect.strata.at("all").completeness == 100.0);
  CHECK(*perfect.strata.at("all").overall == 100.0);

  gold["doc_id"] = "someone-else";
  testsupport::write_file(dir / "other_gold.json", gold.dump());
  o.gold_path = dir / "other_gold.json";
  CHECK_THROWS_AS(cmd_evaluate(o), ValidationError);
  testsupport::write_file(dir / "empty_gold.json", R"({"doc_id":"synthetic-arise3","cells":[]})");
  o.gold_path = dir / "empty_gold.json";
  CHECK_THROWS_AS(cmd_evaluate(o), ValidationError);
  o.run_dir = dir / "store" / "nobody";
  CHECK_THROWS_AS(cmd_evaluate(o), NotFoundError);
}

TEST_CASE("vendor documents load through the adapter") {
  testsupport::TempDir dir;
  const json vendor = {{"title", "Vendor"},
                       {"chunks", {{{"id", "t1"}, {"type", "text"}, {"markdown", "Trial name: X"}, {"grounding", {{"page", 0}}}}}}};
  testsupport::write_file(dir / "vendor-doc.json", vendor.dump());
  const auto doc = load_any_document(dir / "vendor-doc.json");
  CHECK(doc.doc_id == "vendor-doc");
  CHECK(doc.chunks.size() == 1);
  CHECK(doc.chunks[0].page == 1);
}

}  // TEST_SUITE

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/agents.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/prompts.hpp"
#include "evisearch/text.hpp"

#include <algorithm>
#include <map>

namespace evisearch::agents {

using nlohmann::json;
using backend::AgentRole;
using backend::ModelRequest;
using backend::Part;

std::string_view to_string(AgentId a) { return a == AgentId::kAgentA ? "agent_a" : "agent_b"; }

AgentId parse_agent_id(std::string_view s) {
  if (s == "agent_a") return AgentId::kAgentA;
  if (s == "agent_b") return AgentId::kAgentB;
  throw ParseError("unknown agent id '" + std::string(s) + "'");
}

bool Extraction::reported() const { return !failed && !text::is_not_reported(value); }

Extraction failed_extraction(const std::string& column_id, AgentId agent, std::string reason) {
  Extraction e;
  e.column_id = column_id;
  e.value = std::string(text::kNotReported);
  e.reasoning = std::move(reason);
  e.agent = agent;
  e.failed = true;
  return e;
}

json to_json(const Attribution& a) {
  return {{"page", a.page},
          {"modality", docmodel::to_string(a.modality)},
          {"verbatim_quote", a.verbatim_quote ? json(*a.verbatim_quote) : json(nullptr)}};
}

Attribution attribution_from_json(const json& j) {
  Attribution a;
  a.page = j.at("page").get<int>();
  a.modality = docmodel::parse_modality(j.at("modality").get<std::string>());
  if (auto q = j.find("verbatim_quote"); q != j.end() && q->is_string()) a.verbatim_quote = q->get<std::string>();
  if (a.page < 1) throw ValidationError("attribution page must be >= 1");
  return a;
}

json to_json(const Extraction& e) {
  return {{"column_id", e.column_id},
          {"value", e.value},
          {"reasoning", e.reasoning},
          {"attribution", e.attribution ? to_json(*e.attribution) : json(nullptr)},
          {"agent", to_string(e.agent)},
          {"failed", e.failed}};
}

Extraction extraction_from_json(const json& j) {
  Extraction e;
  e.column_id = j.at("column_id").get<std::string>();
  e.value = j.at("value").get<std::string>();
  e.reasoning = j.value("reasoning", std::string{});
  if (auto a = j.find("attribution"); a != j.end() && !a->is_null()) e.attribution = attribution_from_json(*a);
  e.agent = parse_agent_id(j.at("agent").get<std::string>());
  e.failed = j.value("failed", false);
  return e;
}

std::string cache_pointer(int page) { return "[[cached:page=" + std::to_string(page) + "]]"; }

bool SessionCache::claim(int page, std::size_t content_chars) {
  std::lock_guard lock(mu_);
  if (!pages_.insert(page).second) return false;
  log_.push_back(page);
  chars_ += content_chars;
  return true;
}

bool SessionCache::contains(int page) const {
  std::lock_guard lock(mu_);
  return pages_.contains(page);
}

std::set<int> SessionCache::provided_pages() const {
  std::lock_guard lock(mu_);
  return pages_;
}

std::vector<int> SessionCache::transmissions() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t SessionCache::transmitted_chars() const {
  std::lock_guard lock(mu_);
  return chars_;
}

// ---------------------------------------------------------------------------

namespace {

json modality_schema() { return {{"type", "string"}, {"enum", {"text", "table", "figure"}}}; }

json attribution_schema() {
  return {{"type", {"object", "null"}},
          {"properties",
           {{"page", {{"type", "integer"}, {"minimum", 1}}},
            {"modality", modality_schema()},
            {"verbatim_quote", {{"type", {"string", "null"}}}}}},
          {"required", {"page", "modality", "verbatim_quote"}},
          {"additionalProperties", false}};
}

json entries_schema() {
  return {{"type", "array"},
          {"items",
           {{"type", "object"},
            {"properties",
             {{"column_id", {{"type", "string"}}},
              {"value", {{"type", "string"}, {"minLength", 1}}},
              {"reasoning", {{"type", "string"}}},
              {"attribution", attribution_schema()}}},
            {"required", {"column_id", "value", "reasoning", "attribution"}},
            {"additionalProperties", false}}}};
}

Extraction entry_to_extraction(const json& entry, AgentId agent, bool keep_quote) {
  Extraction e;
  e.column_id = entry.at("column_id").get<std::string>();
  e.value = text::normalize_whitespace(entry.at("value").get<std::string>());
  if (text::is_not_reported(e.value)) e.value = std::string(text::kNotReported);
  e.reasoning = entry.at("reasoning").get<std::string>();
  e.agent = agent;
  if (const auto& a = entry.at("attribution"); !a.is_null()) {
    Attribution attr = attribution_from_json(a);
    if (!keep_quote) attr.verbatim_quote.reset();
    e.attribution = attr;
  }
  return e;
}

std::vector<Extraction> entries_in_batch_order(const json& entries, const schema::ColumnBatch& batch, AgentId agent,
                                               bool keep_quote) {
  std::map<std::string, const json*> by_id;
  for (const auto& entry : entries) by_id[entry.at("column_id").get<std::string>()] = &entry;
  std::vector<Extraction> out;
  out.reserve(batch.columns.size());
  for (const auto& c : batch.columns) out.push_back(entry_to_extraction(*by_id.at(c.id), agent, keep_quote));
  return out;
}

std::vector<Extraction> fail_batch(const schema::ColumnBatch& batch, AgentId agent, const std::string& reason) {
  std::vector<Extraction> out;
  for (const auto& c : batch.columns) out.push_back(failed_extraction(c.id, agent, reason));
  return out;
}

json error_result(const std::string& message) { return {{"error", message}}; }

}  // namespace

json batch_task(const docmodel::ParsedDocument& doc, const schema::ColumnBatch& batch, std::string_view task) {
  json cols = json::array();
  for (const auto& c : batch.columns)
    cols.push_back({{"id", c.id}, {"name", c.name}, {"category", schema::to_string(c.category)},
                    {"definition", c.definition}});
  return {{"task", task},
          {"doc_id", doc.doc_id},
          {"n_pages", doc.n_pages},
          {"batch_id", batch.batch_id},
          {"groups", batch.source_groups},
          {"columns", cols}};
}

json agent_a_output_schema() {
  return {{"type", "object"},
          {"properties", {{"extractions", entries_schema()}}},
          {"required", {"extractions"}},
          {"additionalProperties", false}};
}

std::vector<std::string> check_entries(const json& entries, const schema::ColumnBatch& batch,
                                       const docmodel::ParsedDocument& doc, bool require_quote) {
  std::vector<std::string> errs;
  std::map<std::string, int> seen;
  for (const auto& c : batch.columns) seen[c.id] = 0;
  for (const auto& entry : entries) {
    const std::string id = entry.at("column_id").get<std::string>();
    auto it = seen.find(id);
    if (it == seen.end()) {
      errs.push_back("column_id '" + id + "' is not part of this batch");
      continue;
    }
    if (++it->second > 1) errs.push_back("column_id '" + id + "' appears more than once");
    const bool reported = !text::is_not_reported(entry.at("value").get<std::string>());
    const json& attr = entry.at("attribution");
    if (reported && attr.is_null()) {
      errs.push_back("column '" + id + "': reported value requires an attribution");
      continue;
    }
    if (attr.is_null()) continue;
    if (attr.at("page").get<int>() > doc.n_pages)
      errs.push_back("column '" + id + "': attribution page " + std::to_string(attr.at("page").get<int>()) +
                     " exceeds document length " + std::to_string(doc.n_pages));
    if (require_quote && reported &&
        (!attr.at("verbatim_quote").is_string() || attr.at("verbatim_quote").get<std::string>().empty()))
      errs.push_back("column '" + id + "': attribution requires a verbatim_quote");
  }
  for (const auto& [id, n] : seen)
    if (n == 0) errs.push_back("missing entry for column '" + id + "'");
  return errs;
}

std::vector<Extraction> run_agent_a(const docmodel::ParsedDocument& doc, const schema::ColumnBatch& batch,
                                    backend::ModelBackend& model, backend::UsageLedger& ledger,
                                    const AgentOptions& options, const std::string& document_ref) {
  if (batch.columns.empty()) throw ValidationError("run_agent_a: empty batch");
  ModelRequest req;
  req.mode = backend::Mode::kDocumentQuery;
  req.agent = AgentRole::kAgentA;
  req.system_prompt = options.system_prompt.value_or(std::string(prompts::get(prompts::PromptId::kAgentA)));
  req.user_content.push_back(
      Part::document(docmodel::render_markdown(doc), document_ref.empty() ? doc.doc_id : document_ref));
  req.user_content.push_back(Part::text_part(batch_task(doc, batch, "extract").dump()));
  req.output_schema = agent_a_output_schema();

  backend::InvokeOptions inv;
  inv.retry_limit = options.retry_limit;
  inv.batch_id = static_cast<int>(batch.batch_id);
  inv.clock = options.clock;
  inv.semantic_check = [&](const backend::Payload& p) {
    return check_entries(p.output.at("extractions"), batch, doc, /*require_quote=*/true);
  };
  try {
    auto result = backend::invoke(req, model, ledger, inv);
    return entries_in_batch_order(result.payload.output.at("extractions"), batch, AgentId::kAgentA, true);
  } catch (const backend::InvocationFailed& e) {
    return fail_batch(batch, AgentId::kAgentA, std::string("extraction failed: ") + e.what());
  }
}

std::vector<backend::ToolSpec> agent_b_tools() {
  return {
      {"search_chunks",
       "Semantic search over the parsed document. Returns the most relevant pages with full content.",
       {{"type", "object"},
        {"properties", {{"query", {{"type", "string"}, {"minLength", 1}}}}},
        {"required", {"query"}},
        {"additionalProperties", false}}},
      {"get_chunks_by_page",
       "Returns the full parsed content of the given 1-based page numbers.",
       {{"type", "object"},
        {"properties", {{"pages", {{"type", "array"}, {"items", {{"type", "integer"}}}, {"minItems", 1}}}}},
        {"required", {"pages"}},
        {"additionalProperties", false}}},
      {"submit_extraction",
       "Submits the final value, reasoning and attribution for every column of the batch.",
       {{"type", "object"},
        {"properties", {{"entries", entries_schema()}}},
        {"required", {"entries"}},
        {"additionalProperties", false}}},
  };
}

ToolResult handle_tool_call(const backend::ToolCall& call, AgentBContext& ctx) {
  ToolResult out;
  if (call.name == "search_chunks") {
    std::vector<retrieval::SearchHit> hits;
    try {
      hits = retrieval::search(ctx.index, call.arguments.at("query").get<std::string>(), ctx.embedder, ctx.top_k);
    } catch (const std::exception& e) {
      out.is_error = true;
      out.content = error_result(std::string("search failed: ") + e.what()).dump();
      return out;
    }
    json arr = json::array();
    for (auto& h : hits) {
      const bool fresh = ctx.cache.claim(h.page, h.content.size());
      arr.push_back({{"page", h.page}, {"score", h.score}, {"content", fresh ? h.content : cache_pointer(h.page)}});
    }
    out.content = json{{"hits", arr}}.dump();
    return out;
  }

  if (call.name == "get_chunks_by_page") {
    std::vector<int> pages;
    std::vector<std::string> bad;
    for (const auto& p : call.arguments.at("pages")) {
      const int page = p.get<int>();
      if (page < 1 || page > ctx.doc.n_pages) bad.push_back(std::to_string(page));
      else if (std::find(pages.begin(), pages.end(), page) == pages.end()) pages.push_back(page);
    }
    if (!bad.empty()) {
      std::string msg = "pages out of range 1.." + std::to_string(ctx.doc.n_pages) + ":";
      for (const auto& b : bad) msg += " " + b;
      out.is_error = true;
      out.content = error_result(msg).dump();
      return out;
    }
    json arr = json::array();
    for (int page : pages) {
      auto view = docmodel::get_page(ctx.doc, page);
      const bool fresh = ctx.cache.claim(page, view.text.size());
      arr.push_back({{"page", page}, {"content", fresh ? view.text : cache_pointer(page)}});
    }
    out.content = json{{"pages", arr}}.dump();
    return out;
  }

  if (call.name == "submit_extraction") {
    const json& entries = call.arguments.at("entries");
    if (auto errs = check_entries(entries, ctx.batch, ctx.doc, /*require_quote=*/false); !errs.empty()) {
      std::string msg = "submission rejected:";
      for (const auto& e : errs) msg += " " + e + ";";
      out.is_error = true;
      out.content = error_result(msg).dump();
      return out;
    }
    out.terminal = true;
    out.submitted = entries_in_batch_order(entries, ctx.batch, AgentId::kAgentB, /*keep_quote=*/false);
    out.content = json{{"status", "accepted"}}.dump();
    return out;
  }

  out.is_error = true;
  out.content = error_result("unknown tool '" + call.name + "'").dump();
  return out;
}

std::vector<Extraction> run_agent_b(const docmodel::ParsedDocument& doc, const retrieval::DocumentIndex& index,
                                    const schema::ColumnBatch& batch, backend::ModelBackend& model,
                                    retrieval::EmbeddingProvider& embedder, AgentBSession& session,
                                    backend::UsageLedger& ledger, const AgentOptions& options) {
  if (batch.columns.empty()) throw ValidationError("run_agent_b: empty batch");
  if (index.doc_id != doc.doc_id) throw ValidationError("run_agent_b: index built for a different document");
  if (session.cache.doc_id() != doc.doc_id) throw ValidationError("run_agent_b: session belongs to another document");

  const Part task = Part::text_part(batch_task(doc, batch, "extract").dump());
  ModelRequest req;
  req.mode = backend::Mode::kToolLoop;
  req.agent = AgentRole::kAgentB;
  req.system_prompt = options.system_prompt.value_or(std::string(prompts::get(prompts::PromptId::kAgentB)));
  req.tools = agent_b_tools();
  if (session.opening.empty()) {
    session.opening.push_back(task);
  } else {
    req.follow_up.push_back(task);
  }
  req.user_content = session.opening;
  req.turns = session.transcript;

  // Exchanges of this batch are folded into the session whatever the outcome.
  auto record = [&](backend::Turn t) {
    if (!req.follow_up.empty()) {
      t.preface = std::move(req.follow_up);
      req.follow_up.clear();
    }
    req.turns.push_back(t);
    session.transcript.push_back(std::move(t));
  };

  AgentBContext ctx{doc, index, batch, session.cache, embedder, options.top_k};
  for (int turn = 0; turn < options.max_turns; ++turn) {
    backend::InvokeOptions inv;
    inv.retry_limit = options.retry_limit;
    inv.batch_id = static_cast<int>(batch.batch_id);
    inv.turn = turn;
    inv.clock = options.clock;
    backend::InvokeResult result;
    try {
      result = backend::invoke(req, model, ledger, inv);
    } catch (const backend::InvocationFailed& e) {
      return fail_batch(batch, AgentId::kAgentB, std::string("extraction failed: ") + e.what());
    }
    ToolResult tr = handle_tool_call(result.payload.call, ctx);
    backend::Turn exchange;
    exchange.call = result.payload.call;
    exchange.result = tr.content;
    exchange.is_error = tr.is_error;
    record(std::move(exchange));
    if (tr.terminal) return std::move(tr.submitted);
  }
  return fail_batch(batch, AgentId::kAgentB,
                    "extraction failed: no accepted submission within " + std::to_string(options.max_turns) + " turns");
}

}  // namespace evisearch::agents

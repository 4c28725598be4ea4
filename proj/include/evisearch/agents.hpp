// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/backend.hpp"
#include "evisearch/docmodel.hpp"
#include "evisearch/retrieval.hpp"
#include "evisearch/schema.hpp"

#include <nlohmann/json.hpp>

#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace evisearch::agents {

using docmodel::Modality;

struct Attribution {
  int page = 1;
  Modality modality = Modality::kText;
  std::optional<std::string> verbatim_quote;

  bool operator==(const Attribution&) const = default;
};

enum class AgentId { kAgentA, kAgentB };

std::string_view to_string(AgentId a);
AgentId parse_agent_id(std::string_view s);

struct Extraction {
  std::string column_id;
  std::string value;  // text::kNotReported when missing
  std::string reasoning;
  std::optional<Attribution> attribution;
  AgentId agent = AgentId::kAgentA;
  bool failed = false;

  bool reported() const;
  bool operator==(const Extraction&) const = default;
};

/// Sentinel extraction for a column the agent could not resolve.
Extraction failed_extraction(const std::string& column_id, AgentId agent, std::string reason);

nlohmann::json to_json(const Attribution& a);
Attribution attribution_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Extraction& e);
Extraction extraction_from_json(const nlohmann::json& j);

/// Literal handed back in place of page content already sent this session.
std::string cache_pointer(int page);

/// Pages already sent to Agent B during one document run. Shared by all
/// batch workers of that run; claims are atomic so a page's content is
/// transmitted at most once even under concurrent requests.
class SessionCache {
 public:
  explicit SessionCache(std::string doc_id) : doc_id_(std::move(doc_id)) {}

  const std::string& doc_id() const { return doc_id_; }
  /// True when the caller must send the page (first request); records the send.
  bool claim(int page, std::size_t content_chars);
  bool contains(int page) const;
  std::set<int> provided_pages() const;
  /// Every full-content transmission, in order (instrumentation).
  std::vector<int> transmissions() const;
  std::size_t transmitted_chars() const;

 private:
  std::string doc_id_;
  mutable std::mutex mu_;
  std::set<int> pages_;
  std::vector<int> log_;
  std::size_t chars_ = 0;
};

/// Agent-B conversation for one document run: the dedup cache plus the
/// transcript carried from batch to batch, so a cache pointer always refers
/// to content earlier in the same conversation.
struct AgentBSession {
  explicit AgentBSession(std::string doc_id) : cache(std::move(doc_id)) {}

  SessionCache cache;
  std::vector<backend::Part> opening;  // first batch task
  std::vector<backend::Turn> transcript;
};

inline constexpr int kDefaultMaxTurns = 12;

struct AgentOptions {
  int retry_limit = backend::kDefaultRetryLimit;
  int max_turns = kDefaultMaxTurns;
  std::size_t top_k = retrieval::kDefaultTopK;
  const Clock* clock = nullptr;
  /// Overrides the Agent-A system prompt (parsed-text baseline).
  std::optional<std::string> system_prompt;
};

/// JSON task payload describing the batch columns (shared by all agents).
nlohmann::json batch_task(const docmodel::ParsedDocument& doc, const schema::ColumnBatch& batch, std::string_view task);

/// Output schema of the Agent-A structured response.
nlohmann::json agent_a_output_schema();

/// Domain checks on an extraction list: one entry per batch column, reported
/// values carry an in-range attribution, and (when require_quote) a non-empty quote.
std::vector<std::string> check_entries(const nlohmann::json& entries, const schema::ColumnBatch& batch,
                                       const docmodel::ParsedDocument& doc, bool require_quote);

/// Whole-document query: one backend call per batch (plus validation retries).
/// The document part carries the rendered markdown; `document_ref` names the
/// original file for backends that upload natively.
std::vector<Extraction> run_agent_a(const docmodel::ParsedDocument& doc, const schema::ColumnBatch& batch,
                                    backend::ModelBackend& model, backend::UsageLedger& ledger,
                                    const AgentOptions& options = {}, const std::string& document_ref = {});

std::vector<backend::ToolSpec> agent_b_tools();

struct AgentBContext {
  const docmodel::ParsedDocument& doc;
  const retrieval::DocumentIndex& index;
  const schema::ColumnBatch& batch;
  SessionCache& cache;
  retrieval::EmbeddingProvider& embedder;
  std::size_t top_k = retrieval::kDefaultTopK;
};

struct ToolResult {
  std::string content;   // JSON text returned to the model
  bool is_error = false;
  bool terminal = false;  // accepted submit_extraction
  std::vector<Extraction> submitted;
};

ToolResult handle_tool_call(const backend::ToolCall& call, AgentBContext& ctx);

/// Retrieval-guided tool loop. The batch task is added to the session with no
/// pre-fetched pages (extract-first); the loop ends at an accepted
/// submit_extraction or after max_turns per batch, in which case every column
/// is returned failed. Batches of one session must run one at a time.
std::vector<Extraction> run_agent_b(const docmodel::ParsedDocument& doc, const retrieval::DocumentIndex& index,
                                    const schema::ColumnBatch& batch, backend::ModelBackend& model,
                                    retrieval::EmbeddingProvider& embedder, AgentBSession& session,
                                    backend::UsageLedger& ledger, const AgentOptions& options = {});

}  // namespace evisearch::agents

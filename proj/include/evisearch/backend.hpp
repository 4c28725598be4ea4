// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/clock.hpp"
#include "evisearch/errors.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evisearch::backend {

enum class Mode { kDocumentQuery, kToolLoop, kJudge };
enum class AgentRole { kAgentA, kAgentB, kReconciler, kJudge };

std::string_view to_string(Mode m);
std::string_view to_string(AgentRole a);
AgentRole parse_agent_role(std::string_view s);

/// One piece of user content. Document parts carry the rendered document
/// text; `ref` names the original source (file path or document id) for
/// backends that can upload it natively. Image parts carry a file path.
struct Part {
  enum class Kind { kText, kDocument, kImage };
  Kind kind = Kind::kText;
  std::string text;
  std::string ref;

  static Part text_part(std::string t) { return {Kind::kText, std::move(t), {}}; }
  static Part document(std::string rendered, std::string ref) { return {Kind::kDocument, std::move(rendered), std::move(ref)}; }
  static Part image(std::string path) { return {Kind::kImage, {}, std::move(path)}; }
};

struct ToolSpec {
  std::string name;
  std::string description;
  nlohmann::json parameters;  // JSON schema for the arguments object
};

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments;
};

/// A completed tool exchange in a loop transcript. `preface` holds user
/// parts sent just before the call (a new task within a longer session).
struct Turn {
  std::vector<Part> preface;
  ToolCall call;
  std::string result;            // tool result text handed back to the model
  bool is_error = false;
  std::vector<Part> attachments;  // e.g. a rendered page image
};

struct ModelRequest {
  Mode mode = Mode::kDocumentQuery;
  AgentRole agent = AgentRole::kAgentA;
  std::string system_prompt;
  std::vector<Part> user_content;
  std::vector<ToolSpec> tools;
  nlohmann::json output_schema;  // structured output; unused in tool_loop mode
  double temperature = 0.0;
  std::vector<Turn> turns;
  /// User parts sent after the transcript (next task, validation feedback).
  std::vector<Part> follow_up;

  const ToolSpec* find_tool(std::string_view name) const;
};

/// Throws std::invalid_argument when the request breaks its own invariants
/// (document part outside document_query, non-zero temperature, duplicate tool names).
void check_request(const ModelRequest& req);

/// What a backend returned, before any validation.
struct RawResponse {
  bool is_tool_call = false;
  std::string tool_name;
  std::string tool_call_id;
  std::string text;  // structured output JSON, or tool arguments JSON
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
};

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;
  /// Throws RetryableError on transport failure.
  virtual RawResponse complete(const ModelRequest& request) = 0;
  virtual std::string name() const = 0;
  /// True when document parts are uploaded natively rather than read as text.
  virtual bool native_documents() const { return false; }
};

struct UsageRecord {
  std::string call_id;
  AgentRole agent = AgentRole::kAgentA;
  int batch_id = -1;
  int turn = 0;
  int attempt = 0;
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  double wall_time_ms = 0.0;
  std::optional<std::string> tool_call;  // tool the model called, if any
  std::string outcome = "ok";            // ok | invalid | transport_error

  bool operator==(const UsageRecord&) const = default;
};

/// Append-only; safe for concurrent appends. records() returns a stable
/// order (batch, agent, turn, attempt) independent of completion order.
class UsageLedger {
 public:
  UsageLedger() = default;
  UsageLedger(const UsageLedger& other);
  UsageLedger& operator=(const UsageLedger& other);

  void append(UsageRecord r);
  std::vector<UsageRecord> records() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<UsageRecord> records_;
};

struct LedgerTotals {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
  std::int64_t total_tokens = 0;
  std::int64_t api_calls = 0;

  bool operator==(const LedgerTotals&) const = default;
};

struct LedgerReport {
  std::map<AgentRole, LedgerTotals> per_agent;
  LedgerTotals total;
};

LedgerReport ledger_report(const UsageLedger& ledger);
LedgerReport ledger_report(const std::vector<UsageRecord>& records);

/// Columns: Agent, In Tok., Out Tok., Total Tok., API Calls; last row "total".
std::string ledger_report_csv(const LedgerReport& report);
nlohmann::json to_json(const LedgerReport& report);
nlohmann::json to_json(const LedgerTotals& totals);
nlohmann::json to_json(const UsageRecord& r);
UsageRecord usage_record_from_json(const nlohmann::json& j);
nlohmann::json ledger_to_json(const UsageLedger& ledger);
UsageLedger ledger_from_json(const nlohmann::json& j);
/// One row per record.
std::string ledger_records_csv(const UsageLedger& ledger);

/// Validated payload from invoke().
struct Payload {
  bool is_tool_call = false;
  nlohmann::json output;  // structured output when !is_tool_call
  ToolCall call;
};

/// Raised when the backend output cannot be parsed or violates the schema.
class OutputValidationError : public ValidationError {
 public:
  OutputValidationError(const std::string& what, std::string raw, std::vector<std::string> errors)
      : ValidationError(what, std::move(errors)), raw_(std::move(raw)) {}
  const std::string& raw_output() const noexcept { return raw_; }

 private:
  std::string raw_;
};

/// All attempts failed; callers degrade the affected columns.
class InvocationFailed : public std::runtime_error {
 public:
  InvocationFailed(const std::string& what, std::string last_raw, int attempts)
      : std::runtime_error(what), last_raw_(std::move(last_raw)), attempts_(attempts) {}
  const std::string& last_raw_output() const noexcept { return last_raw_; }
  int attempts() const noexcept { return attempts_; }

 private:
  std::string last_raw_;
  int attempts_;
};

inline constexpr int kDefaultRetryLimit = 2;

struct InvokeOptions {
  int retry_limit = kDefaultRetryLimit;
  int batch_id = -1;
  int turn = 0;
  /// Domain checks beyond the JSON schema; returns violations.
  std::function<std::vector<std::string>(const Payload&)> semantic_check;
  const Clock* clock = nullptr;
};

struct InvokeResult {
  Payload payload;
  int attempts = 1;
};

/// Parses and validates one raw response against the request (schema or declared tool).
/// Throws OutputValidationError.
Payload validate_response(const ModelRequest& request, const RawResponse& raw);

/// Calls the backend, validates, and on invalid output re-sends the request
/// with the validation errors appended, up to retry_limit extra attempts.
/// Every attempt appends exactly one UsageRecord. Throws InvocationFailed
/// once attempts are exhausted.
InvokeResult invoke(const ModelRequest& request, ModelBackend& backend, UsageLedger& ledger,
                    const InvokeOptions& options = {});

std::string make_call_id(AgentRole agent, int batch_id, int turn, int attempt);

/// Whitespace-delimited token count (offline accounting).
std::int64_t count_whitespace_tokens(std::string_view s);

/// Everything a model would read for this request, flattened to text.
std::string flatten_request(const ModelRequest& request);

}  // namespace evisearch::backend

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/backend.hpp"

#include "evisearch/json_schema.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace evisearch::backend {

using nlohmann::json;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kDocumentQuery: return "document_query";
    case Mode::kToolLoop: return "tool_loop";
    case Mode::kJudge: return "judge";
  }
  return "document_query";
}

std::string_view to_string(AgentRole a) {
  switch (a) {
    case AgentRole::kAgentA: return "agent_a";
    case AgentRole::kAgentB: return "agent_b";
    case AgentRole::kReconciler: return "reconciler";
    case AgentRole::kJudge: return "judge";
  }
  return "agent_a";
}

AgentRole parse_agent_role(std::string_view s) {
  if (s == "agent_a") return AgentRole::kAgentA;
  if (s == "agent_b") return AgentRole::kAgentB;
  if (s == "reconciler") return AgentRole::kReconciler;
  if (s == "judge") return AgentRole::kJudge;
  throw ParseError("unknown agent '" + std::string(s) + "'");
}

const ToolSpec* ModelRequest::find_tool(std::string_view name) const {
  for (const auto& t : tools)
    if (t.name == name) return &t;
  return nullptr;
}

void check_request(const ModelRequest& req) {
  for (const auto& p : req.follow_up)
    if (p.kind == Part::Kind::kDocument) throw std::invalid_argument("document parts belong in user_content");
  for (const auto& p : req.user_content)
    if (p.kind == Part::Kind::kDocument && req.mode != Mode::kDocumentQuery)
      throw std::invalid_argument("document parts are only allowed in document_query mode");
  if (req.temperature != 0.0 && req.agent != AgentRole::kJudge)
    throw std::invalid_argument("extraction and reconciliation calls must use temperature 0");
  std::set<std::string> names;
  for (const auto& t : req.tools)
    if (!names.insert(t.name).second) throw std::invalid_argument("duplicate tool name '" + t.name + "'");
  if (req.mode == Mode::kToolLoop && req.tools.empty())
    throw std::invalid_argument("tool_loop requests must declare tools");
}

// ---------------------------------------------------------------------------
// Ledger

UsageLedger::UsageLedger(const UsageLedger& other) : records_(other.records()) {}

UsageLedger& UsageLedger::operator=(const UsageLedger& other) {
  if (this != &other) {
    auto copy = other.records();
    std::lock_guard lock(mu_);
    records_ = std::move(copy);
  }
  return *this;
}

void UsageLedger::append(UsageRecord r) {
  if (r.input_tokens < 0 || r.output_tokens < 0) throw std::invalid_argument("usage counts must be non-negative");
  std::lock_guard lock(mu_);
  records_.push_back(std::move(r));
}

std::vector<UsageRecord> UsageLedger::records() const {
  std::vector<UsageRecord> out;
  {
    std::lock_guard lock(mu_);
    out = records_;
  }
  std::stable_sort(out.begin(), out.end(), [](const UsageRecord& a, const UsageRecord& b) {
    return std::tie(a.batch_id, a.agent, a.turn, a.attempt, a.call_id) <
           std::tie(b.batch_id, b.agent, b.turn, b.attempt, b.call_id);
  });
  return out;
}

std::size_t UsageLedger::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

LedgerReport ledger_report(const std::vector<UsageRecord>& records) {
  LedgerReport rep;
  for (const auto& r : records) {
    for (LedgerTotals* t : {&rep.per_agent[r.agent], &rep.total}) {
      t->input_tokens += r.input_tokens;
      t->output_tokens += r.output_tokens;
      t->total_tokens += r.input_tokens + r.output_tokens;
      t->api_calls += 1;
    }
  }
  return rep;
}

LedgerReport ledger_report(const UsageLedger& ledger) { return ledger_report(ledger.records()); }

std::string ledger_report_csv(const LedgerReport& report) {
  std::ostringstream out;
  out << "Agent,In Tok.,Out Tok.,Total Tok.,API Calls\n";
  auto row = [&](std::string_view name, const LedgerTotals& t) {
    out << name << ',' << t.input_tokens << ',' << t.output_tokens << ',' << t.total_tokens << ',' << t.api_calls
        << '\n';
  };
  for (const auto& [agent, t] : report.per_agent) row(to_string(agent), t);
  row("total", report.total);
  return out.str();
}

json to_json(const LedgerTotals& t) {
  return {{"input_tokens", t.input_tokens},
          {"output_tokens", t.output_tokens},
          {"total_tokens", t.total_tokens},
          {"api_calls", t.api_calls}};
}

json to_json(const LedgerReport& report) {
  json per = json::object();
  for (const auto& [agent, t] : report.per_agent) per[std::string(to_string(agent))] = to_json(t);
  return {{"per_agent", per}, {"total", to_json(report.total)}};
}

json to_json(const UsageRecord& r) {
  return {{"call_id", r.call_id},
          {"agent", to_string(r.agent)},
          {"batch_id", r.batch_id},
          {"turn", r.turn},
          {"attempt", r.attempt},
          {"input_tokens", r.input_tokens},
          {"output_tokens", r.output_tokens},
          {"wall_time_ms", r.wall_time_ms},
          {"tool_call", r.tool_call ? json(*r.tool_call) : json(nullptr)},
          {"outcome", r.outcome}};
}

UsageRecord usage_record_from_json(const json& j) {
  UsageRecord r;
  r.call_id = j.at("call_id").get<std::string>();
  r.agent = parse_agent_role(j.at("agent").get<std::string>());
  r.batch_id = j.at("batch_id").get<int>();
  r.turn = j.at("turn").get<int>();
  r.attempt = j.at("attempt").get<int>();
  r.input_tokens = j.at("input_tokens").get<std::int64_t>();
  r.output_tokens = j.at("output_tokens").get<std::int64_t>();
  r.wall_time_ms = j.at("wall_time_ms").get<double>();
  if (j.contains("tool_call") && !j["tool_call"].is_null()) r.tool_call = j["tool_call"].get<std::string>();
  r.outcome = j.value("outcome", std::string("ok"));
  return r;
}

json ledger_to_json(const UsageLedger& ledger) {
  json arr = json::array();
  for (const auto& r : ledger.records()) arr.push_back(to_json(r));
  return {{"records", arr}, {"report", to_json(ledger_report(ledger))}};
}

UsageLedger ledger_from_json(const json& j) {
  UsageLedger ledger;
  for (const auto& r : j.at("records")) ledger.append(usage_record_from_json(r));
  return ledger;
}

std::string ledger_records_csv(const UsageLedger& ledger) {
  std::ostringstream out;
  out << "call_id,agent,batch_id,turn,attempt,input_tokens,output_tokens,wall_time_ms,tool_call,outcome\n";
  for (const auto& r : ledger.records())
    out << r.call_id << ',' << to_string(r.agent) << ',' << r.batch_id << ',' << r.turn << ',' << r.attempt << ','
        << r.input_tokens << ',' << r.output_tokens << ',' << r.wall_time_ms << ',' << r.tool_call.value_or("")
        << ',' << r.outcome << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Invocation

std::string make_call_id(AgentRole agent, int batch_id, int turn, int attempt) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s-b%03d-t%02d-a%d", std::string(to_string(agent)).c_str(), batch_id, turn,
                attempt);
  return buf;
}

std::int64_t count_whitespace_tokens(std::string_view s) {
  std::int64_t n = 0;
  bool in_token = false;
  for (char c : s) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

std::string flatten_request(const ModelRequest& req) {
  std::string out = req.system_prompt;
  for (const auto& p : req.user_content) {
    out += "\n";
    out += p.kind == Part::Kind::kImage ? "[image " + p.ref + "]" : p.text;
  }
  auto add_part = [&](const Part& p) {
    out += "\n";
    out += p.kind == Part::Kind::kImage ? "[image " + p.ref + "]" : p.text;
  };
  for (const auto& t : req.turns) {
    for (const auto& p : t.preface) add_part(p);
    out += "\n" + t.call.name + " " + t.call.arguments.dump() + "\n" + t.result;
    for (const auto& a : t.attachments) add_part(a);
  }
  for (const auto& p : req.follow_up) add_part(p);
  return out;
}

Payload validate_response(const ModelRequest& request, const RawResponse& raw) {
  Payload p;
  json parsed;
  try {
    parsed = json::parse(raw.text);
  } catch (const json::parse_error& e) {
    throw OutputValidationError("model output is not valid JSON", raw.text, {e.what()});
  }
  if (raw.is_tool_call) {
    const ToolSpec* spec = request.find_tool(raw.tool_name);
    if (spec == nullptr)
      throw OutputValidationError("model called undeclared tool '" + raw.tool_name + "'", raw.text,
                                  {"undeclared tool: " + raw.tool_name});
    if (auto errs = jsonschema::validate(spec->parameters, parsed); !errs.empty())
      throw OutputValidationError("arguments for tool '" + raw.tool_name + "' violate its schema", raw.text, errs);
    p.is_tool_call = true;
    p.call = ToolCall{raw.tool_call_id, raw.tool_name, std::move(parsed)};
    return p;
  }
  if (request.mode == Mode::kToolLoop)
    throw OutputValidationError("tool_loop response must be a tool call", raw.text, {"expected a tool call"});
  if (auto errs = jsonschema::validate(request.output_schema, parsed); !errs.empty())
    throw OutputValidationError("model output violates the output schema", raw.text, errs);
  p.output = std::move(parsed);
  return p;
}

InvokeResult invoke(const ModelRequest& request, ModelBackend& backend, UsageLedger& ledger,
                    const InvokeOptions& options) {
  check_request(request);
  static const SystemClock system_clock;
  const Clock& clock = options.clock != nullptr ? *options.clock : system_clock;

  ModelRequest attempt_request = request;
  std::string last_raw;
  std::string last_error;
  const int max_attempts = 1 + std::max(0, options.retry_limit);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    UsageRecord rec;
    rec.call_id = make_call_id(request.agent, options.batch_id, options.turn, attempt);
    rec.agent = request.agent;
    rec.batch_id = options.batch_id;
    rec.turn = options.turn;
    rec.attempt = attempt;

    const auto start = clock.now();
    RawResponse raw;
    try {
      raw = backend.complete(attempt_request);
    } catch (const RetryableError& e) {
      rec.wall_time_ms = std::chrono::duration<double, std::milli>(clock.now() - start).count();
      rec.outcome = "transport_error";
      ledger.append(rec);
      last_error = e.what();
      continue;
    }
    rec.wall_time_ms = std::chrono::duration<double, std::milli>(clock.now() - start).count();
    rec.input_tokens = raw.input_tokens;
    rec.output_tokens = raw.output_tokens;
    if (raw.is_tool_call) rec.tool_call = raw.tool_name;
    last_raw = raw.text;

    std::vector<std::string> errors;
    Payload payload;
    try {
      payload = validate_response(attempt_request, raw);
      if (options.semantic_check) errors = options.semantic_check(payload);
    } catch (const OutputValidationError& e) {
      errors = e.offenders();
      errors.insert(errors.begin(), e.what());
    }
    if (errors.empty()) {
      ledger.append(rec);
      return InvokeResult{std::move(payload), attempt + 1};
    }
    rec.outcome = "invalid";
    ledger.append(rec);

    std::string feedback = "Your previous response was rejected by validation:\n";
    for (const auto& e : errors) feedback += "- " + e + "\n";
    feedback += "Previous response: " + raw.text.substr(0, 2000) + "\nReturn a corrected response.";
    attempt_request.follow_up.push_back(Part::text_part(feedback));
    last_error = errors.front();
  }
  throw InvocationFailed(std::string(to_string(request.agent)) + " call failed after " +
                             std::to_string(max_attempts) + " attempts: " + last_error,
                         last_raw, max_attempts);
}

}  // namespace evisearch::backend

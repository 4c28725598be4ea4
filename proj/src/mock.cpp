// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/mock.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/evaluation.hpp"
#include "evisearch/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <stdexcept>

namespace evisearch::mock {

using backend::AgentRole;
using backend::ModelRequest;
using backend::Part;
using backend::RawResponse;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> s = {"a",  "an", "and", "as",  "at",   "by", "for", "from", "in",
                                          "is", "of", "on",  "or",  "per",  "the", "to", "vs",   "with"};
  return s;
}

struct Cursor {
  int page = 1;
  docmodel::Modality modality = docmodel::Modality::kText;
  std::string chunk_id;
};

void read_line(std::string_view raw, const Cursor& cur, std::vector<EvidenceLine>& out) {
  const std::string line = trim(raw);
  if (line.empty() || line.rfind("<!--", 0) == 0 || line.rfind("# ", 0) == 0) return;
  EvidenceLine ev;
  ev.page = cur.page;
  ev.modality = cur.modality;
  ev.chunk_id = cur.chunk_id;
  ev.line = line;
  if (docmodel::looks_like_pipe_row(line)) {
    auto rows = docmodel::parse_pipe_table(line);
    if (rows.empty() || rows.front().size() < 2) return;
    ev.label = trim(rows.front()[0]);
    ev.value = trim(rows.front()[1]);
  } else {
    const auto colon = line.find(": ");
    if (colon == std::string::npos || colon > 80) return;
    ev.label = trim(std::string_view(line).substr(0, colon));
    ev.value = trim(std::string_view(line).substr(colon + 2));
  }
  if (ev.label.empty() || ev.value.empty()) return;
  out.push_back(std::move(ev));
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

// "[[table:3:c12]]" -> cursor; anything else (including cache pointers) -> nullopt.
std::optional<Cursor> parse_marker(std::string_view line) {
  if (line.size() < 6 || line.substr(0, 2) != "[[" || line.substr(line.size() - 2) != "]]") return std::nullopt;
  const std::string_view inner = line.substr(2, line.size() - 4);
  const auto c1 = inner.find(':');
  const auto c2 = c1 == std::string_view::npos ? c1 : inner.find(':', c1 + 1);
  if (c2 == std::string_view::npos) return std::nullopt;
  Cursor cur;
  try {
    cur.modality = docmodel::parse_modality(inner.substr(0, c1));
    cur.page = std::stoi(std::string(inner.substr(c1 + 1, c2 - c1 - 1)));
  } catch (const std::exception&) {
    return std::nullopt;
  }
  cur.chunk_id = std::string(inner.substr(c2 + 1));
  return cur;
}

// Word and number tokens as a multiset; numbers by canonical value.
std::multiset<std::string> token_bag(std::string_view s) {
  std::multiset<std::string> bag;
  for (const auto& t : text::tokenize(s)) bag.insert(t.kind == text::TokenKind::kWord ? text::to_lower(t.text) : t.text);
  return bag;
}

bool contains_tokens(std::string_view hay, std::string_view needle) {
  const auto n = token_bag(needle);
  if (n.empty()) return false;
  const auto h = token_bag(hay);
  return std::includes(h.begin(), h.end(), n.begin(), n.end());
}

std::optional<json> task_of(const Part& p) {
  if (p.kind != Part::Kind::kText) return std::nullopt;
  json j = json::parse(p.text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("task")) return std::nullopt;
  return j;
}

struct LocatedTask {
  json task;
  std::size_t first_turn = 0;  // turns at or after this index belong to the task
};

std::optional<LocatedTask> latest_task(const ModelRequest& req, std::string_view kind) {
  std::optional<LocatedTask> found;
  auto consider = [&](const Part& p, std::size_t at) {
    if (auto t = task_of(p); t && t->value("task", "") == kind) found = LocatedTask{*t, at};
  };
  for (const auto& p : req.user_content) consider(p, 0);
  for (std::size_t i = 0; i < req.turns.size(); ++i)
    for (const auto& p : req.turns[i].preface) consider(p, i);
  for (const auto& p : req.follow_up) consider(p, req.turns.size());
  return found;
}

const EvidenceLine* best_line(const std::vector<EvidenceLine>& lines, const std::vector<std::string>& kws,
                              bool allow_figures, double min_precision = 0.0) {
  const EvidenceLine* best = nullptr;
  double best_precision = -1.0;
  for (const auto& l : lines) {
    if (!allow_figures && l.modality == docmodel::Modality::kFigure) continue;
    const auto s = score_label(kws, l.label);
    if (s.recall < 1.0 || s.precision < min_precision) continue;
    if (s.precision > best_precision || (s.precision == best_precision && l.page < best->page)) {
      best = &l;
      best_precision = s.precision;
    }
  }
  return best;
}

json attribution_json(const EvidenceLine& l, bool with_quote) {
  return {{"page", l.page},
          {"modality", docmodel::to_string(l.modality)},
          {"verbatim_quote", with_quote ? json(l.line) : json(nullptr)}};
}

std::string entry_reasoning(const EvidenceLine* l) {
  return l != nullptr ? "Read from page " + std::to_string(l->page) + " (" + std::string(docmodel::to_string(l->modality)) + ")."
                      : "No matching statement found in the document.";
}

// Agent B drops a trailing parenthetical from values that start with a number.
std::string concise(const std::string& value) {
  if (value.empty()) return value;
  const auto c = static_cast<unsigned char>(value.front());
  if (!std::isdigit(c) && value.front() != '-' && value.front() != '.') return value;
  const auto paren = value.find(" (");
  return paren == std::string::npos ? value : trim(std::string_view(value).substr(0, paren));
}

std::string answer_agent_a(const ModelRequest& req) {
  std::vector<EvidenceLine> lines;
  for (const auto& p : req.user_content)
    if (p.kind == Part::Kind::kDocument) {
      auto more = evidence_from_markdown(p.text);
      lines.insert(lines.end(), more.begin(), more.end());
    }
  auto task = latest_task(req, "extract");
  if (!task) throw std::logic_error("mock: no extraction task in request");
  json entries = json::array();
  for (const auto& col : task->task.at("columns")) {
    const auto kws = column_keywords(col.at("name").get<std::string>());
    const EvidenceLine* hit = nullptr;
    for (const auto& l : lines)
      if (score_label(kws, l.label).recall >= 1.0) {
        hit = &l;
        break;
      }
    entries.push_back({{"column_id", col.at("id")},
                       {"value", hit ? hit->value : std::string(text::kNotReported)},
                       {"reasoning", entry_reasoning(hit)},
                       {"attribution", hit ? attribution_json(*hit, true) : json(nullptr)}});
  }
  return json{{"extractions", entries}}.dump();
}

std::vector<EvidenceLine> tool_result_evidence(const std::string& result) {
  std::vector<EvidenceLine> out;
  json j = json::parse(result, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return out;
  for (const char* key : {"hits", "pages"}) {
    if (!j.contains(key)) continue;
    for (const auto& item : j.at(key)) {
      auto more = evidence_from_page_text(item.value("content", ""));
      out.insert(out.end(), more.begin(), more.end());
    }
  }
  if (j.contains("text")) {
    auto more = evidence_from_page_text(j.at("text").get<std::string>());
    out.insert(out.end(), more.begin(), more.end());
  }
  return out;
}

std::pair<std::string, json> answer_agent_b(const ModelRequest& req, int max_searches) {
  auto task = latest_task(req, "extract");
  if (!task) throw std::logic_error("mock: no extraction task in request");
  std::vector<EvidenceLine> known;
  for (const auto& t : req.turns) {
    auto more = tool_result_evidence(t.result);
    known.insert(known.end(), more.begin(), more.end());
  }
  std::set<std::string> searched;
  for (std::size_t i = task->first_turn; i < req.turns.size(); ++i)
    if (req.turns[i].call.name == "search_chunks") searched.insert(req.turns[i].call.arguments.value("query", ""));

  json entries = json::array();
  std::optional<std::string> next_query;
  for (const auto& col : task->task.at("columns")) {
    const auto kws = column_keywords(col.at("name").get<std::string>());
    const EvidenceLine* hit = best_line(known, kws, /*allow_figures=*/false);
    if (hit == nullptr && !next_query) {
      const std::string q = col.at("name").get<std::string>() + ": " + col.value("definition", "");
      if (!searched.contains(q)) next_query = q;
    }
    entries.push_back({{"column_id", col.at("id")},
                       {"value", hit ? concise(hit->value) : std::string(text::kNotReported)},
                       {"reasoning", entry_reasoning(hit)},
                       {"attribution", hit ? attribution_json(*hit, false) : json(nullptr)}});
  }
  if (next_query && static_cast<int>(searched.size()) < max_searches)
    return {"search_chunks", json{{"query", *next_query}}};
  return {"submit_extraction", json{{"entries", entries}}};
}

std::pair<std::string, json> answer_reconciler(const ModelRequest& req) {
  auto task = latest_task(req, "reconcile");
  if (!task) throw std::logic_error("mock: no reconciliation task in request");
  std::set<int> viewed;
  std::vector<EvidenceLine> seen;
  for (const auto& t : req.turns) {
    if (t.call.name != "get_page" || t.is_error) continue;
    viewed.insert(t.call.arguments.at("page").get<int>());
    auto more = tool_result_evidence(t.result);
    seen.insert(seen.end(), more.begin(), more.end());
  }
  std::set<int> tried;
  for (const auto& t : req.turns)
    if (t.call.name == "get_page") tried.insert(t.call.arguments.at("page").get<int>());

  const json& conflicts = task->task.at("conflicts");
  for (const auto& c : conflicts)
    for (const auto& p : c.at("disputed_pages"))
      if (!tried.contains(p.get<int>())) return {"get_page", json{{"page", p.get<int>()}}};

  json decisions = json::array();
  for (const auto& c : conflicts) {
    const std::string id = c.at("column_id").get<std::string>();
    std::string name = c.value("name", "");
    if (name.empty()) {
      name = id;
      std::replace(name.begin(), name.end(), '_', ' ');
    }
    const auto kws = column_keywords(name);
    std::vector<EvidenceLine> relevant;
    for (const auto& l : seen) {
      const auto s = score_label(kws, l.label);
      if (s.recall >= 1.0 && s.precision >= 0.6) relevant.push_back(l);
    }
    auto supported = [&](const json& cand) {
      const std::string v = cand.at("value").get<std::string>();
      if (cand.value("failed", false)) return false;
      if (text::is_not_reported(v)) return relevant.empty();
      return std::any_of(relevant.begin(), relevant.end(), [&](const EvidenceLine& l) { return contains_tokens(l.value, v); });
    };
    const bool a_ok = supported(c.at("candidate_a"));
    const bool b_ok = supported(c.at("candidate_b"));
    const std::string a_val = c.at("candidate_a").at("value").get<std::string>();
    const std::string b_val = c.at("candidate_b").at("value").get<std::string>();
    json d = {{"column_id", id}, {"corrected_value", nullptr}};
    if (a_ok && b_ok) {
      d["label"] = "both_correct";
      d["final_value"] = a_val;
      d["reasoning"] = "The page supports both candidates; keeping the more complete one.";
    } else if (a_ok) {
      d["label"] = "a_correct_b_wrong";
      d["final_value"] = a_val;
      d["reasoning"] = "The page supports candidate A only.";
    } else if (b_ok) {
      d["label"] = "b_correct_a_wrong";
      d["final_value"] = b_val;
      d["reasoning"] = "The page supports candidate B only.";
    } else {
      d["label"] = "both_wrong";
      d["final_value"] = std::string(text::kNotReported);
      d["reasoning"] = "Neither candidate matches the viewed pages.";
      if (const EvidenceLine* best = best_line(relevant, kws, true)) d["corrected_value"] = best->value;
    }
    decisions.push_back(std::move(d));
  }
  return {"submit_reconciliation", json{{"decisions", decisions}}};
}

std::string answer_judge(const ModelRequest& req) {
  auto task = latest_task(req, "judge");
  if (!task) throw std::logic_error("mock: no judge task in request");
  const bool ok = evaluation::fallback_text_match(task->task.at("prediction").get<std::string>(),
                                                  task->task.at("gold").get<std::string>());
  return json{{"verdict", ok ? "correct" : "incorrect"},
              {"reasoning", ok ? "Token sets overlap fully." : "Prediction and gold differ."}}
      .dump();
}

}  // namespace

std::vector<EvidenceLine> evidence_from_markdown(std::string_view markdown) {
  std::vector<EvidenceLine> out;
  Cursor cur;
  for (auto raw : split_lines(markdown)) {
    const std::string line = trim(raw);
    if (line.rfind("<!-- page ", 0) == 0 && line != docmodel::kPageSeparator) {
      try {
        cur.page = std::stoi(line.substr(10));
      } catch (const std::exception&) {
      }
      continue;
    }
    if (line.rfind("<!-- chunk ", 0) == 0) {
      const auto body = line.substr(11, line.size() >= 15 ? line.size() - 15 : 0);
      const auto sp = body.find(' ');
      if (sp != std::string::npos) {
        cur.chunk_id = body.substr(0, sp);
        try {
          cur.modality = docmodel::parse_modality(trim(body.substr(sp + 1)));
        } catch (const std::exception&) {
        }
      }
      continue;
    }
    read_line(line, cur, out);
  }
  return out;
}

std::vector<EvidenceLine> evidence_from_page_text(std::string_view text) {
  std::vector<EvidenceLine> out;
  std::optional<Cursor> cur;
  for (auto raw : split_lines(text)) {
    const std::string line = trim(raw);
    if (auto m = parse_marker(line)) {
      cur = m;
      continue;
    }
    if (cur) read_line(line, *cur, out);
  }
  return out;
}

std::vector<std::string> column_keywords(std::string_view name) {
  auto all = words(name);
  std::vector<std::string> out;
  for (const auto& w : all)
    if (!stopwords().contains(w) && std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  return out.empty() ? all : out;
}

LabelScore score_label(const std::vector<std::string>& keywords, std::string_view label) {
  const auto lw = words(label);
  std::set<std::string> label_set(lw.begin(), lw.end());
  LabelScore s;
  if (keywords.empty() || label_set.empty()) return s;
  std::size_t hit = 0;
  for (const auto& k : keywords) hit += label_set.contains(k) ? 1 : 0;
  s.recall = static_cast<double>(hit) / static_cast<double>(keywords.size());
  std::size_t content = 0, matched = 0;
  for (const auto& w : label_set) {
    if (stopwords().contains(w)) continue;
    ++content;
    matched += std::find(keywords.begin(), keywords.end(), w) != keywords.end() ? 1 : 0;
  }
  s.precision = content == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(content);
  return s;
}

RawResponse HeuristicBackend::complete(const ModelRequest& req) {
  RawResponse r;
  if (req.mode == backend::Mode::kToolLoop) {
    auto [tool, args] = req.agent == AgentRole::kReconciler ? answer_reconciler(req) : answer_agent_b(req, max_searches_);
    r.is_tool_call = true;
    r.tool_name = tool;
    r.tool_call_id = "call_" + std::to_string(req.turns.size());
    r.text = args.dump();
  } else if (req.mode == backend::Mode::kJudge) {
    r.text = answer_judge(req);
  } else {
    r.text = answer_agent_a(req);
  }
  r.input_tokens = backend::count_whitespace_tokens(backend::flatten_request(req));
  r.output_tokens = backend::count_whitespace_tokens(r.text);
  return r;
}

ScriptStep ScriptStep::output(std::string text, std::int64_t in, std::int64_t out) {
  return {Kind::kOutput, {}, std::move(text), in, out};
}

ScriptStep ScriptStep::tool_call(std::string tool, std::string args, std::int64_t in, std::int64_t out) {
  return {Kind::kToolCall, std::move(tool), std::move(args), in, out};
}

ScriptStep ScriptStep::transport_error() { return {Kind::kTransportError, {}, {}, 0, 0}; }

void ScriptedBackend::push(ScriptStep step) {
  std::lock_guard lock(mu_);
  script_.push_back(std::move(step));
}

RawResponse ScriptedBackend::complete(const ModelRequest& request) {
  ScriptStep step;
  bool defer = false;
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (script_.empty()) {
      if (fallback_ == nullptr) throw std::logic_error("scripted backend: script exhausted");
      defer = true;
    } else {
      step = std::move(script_.front());
      script_.pop_front();
    }
  }
  if (defer) return fallback_->complete(request);
  if (step.kind == ScriptStep::Kind::kTransportError) throw RetryableError("scripted transport error");
  RawResponse r;
  r.is_tool_call = step.kind == ScriptStep::Kind::kToolCall;
  r.tool_name = step.tool;
  r.tool_call_id = r.is_tool_call ? "call_" + std::to_string(request.turns.size()) : "";
  r.text = std::move(step.text);
  r.input_tokens = step.input_tokens;
  r.output_tokens = step.output_tokens;
  return r;
}

std::vector<ModelRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mu_);
  return script_.size();
}

RawResponse FaultInjectingBackend::complete(const ModelRequest& request) {
  std::size_t index = 0;
  {
    std::lock_guard lock(mu_);
    index = next_++;
    ++calls_[request.agent];
  }
  const Fault fault = policy_ ? policy_(request, index) : Fault::kNone;
  if (fault != Fault::kNone) {
    std::lock_guard lock(mu_);
    ++faults_;
  }
  if (fault == Fault::kTransport) throw RetryableError("injected transport error");
  if (fault == Fault::kMalformed) {
    RawResponse r;
    r.is_tool_call = request.mode == backend::Mode::kToolLoop && !request.tools.empty();
    if (r.is_tool_call) {
      r.tool_name = request.tools.front().name;
      r.tool_call_id = "call_" + std::to_string(request.turns.size());
    }
    r.text = "{\"truncated\": ";
    r.input_tokens = backend::count_whitespace_tokens(backend::flatten_request(request));
    r.output_tokens = backend::count_whitespace_tokens(r.text);
    return r;
  }
  return inner_.complete(request);
}

std::map<AgentRole, std::size_t> FaultInjectingBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::size_t FaultInjectingBackend::faults() const {
  std::lock_guard lock(mu_);
  return faults_;
}

}  // namespace evisearch::mock

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/reconciler.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/prompts.hpp"
#include "evisearch/text.hpp"

#include <algorithm>
#include <map>

namespace evisearch::reconciler {

using nlohmann::json;
using backend::AgentRole;
using backend::ModelRequest;
using backend::Part;

std::string_view to_string(Label l) {
  switch (l) {
    case Label::kBothCorrect: return "both_correct";
    case Label::kACorrectBWrong: return "a_correct_b_wrong";
    case Label::kBCorrectAWrong: return "b_correct_a_wrong";
    case Label::kBothWrong: return "both_wrong";
  }
  return "both_wrong";
}

Label parse_label(std::string_view s) {
  const std::string l = text::to_lower(s);
  if (l == "both_correct") return Label::kBothCorrect;
  if (l == "a_correct_b_wrong") return Label::kACorrectBWrong;
  if (l == "b_correct_a_wrong") return Label::kBCorrectAWrong;
  if (l == "both_wrong") return Label::kBothWrong;
  throw ParseError("unknown verification label '" + std::string(s) + "'");
}

std::string_view to_string(Pass p) { return p == Pass::kPass1 ? "pass1" : "pass2"; }

std::vector<std::string> check_cell(const ReconciledCell& c) {
  std::vector<std::string> errs;
  const std::string who = "cell " + c.column_id + ": ";
  if (c.column_id.empty()) errs.push_back("cell with empty column_id");
  if (c.final_value.empty()) errs.push_back(who + "empty final_value");
  if (c.low_confidence != (c.label == Label::kBothWrong)) errs.push_back(who + "low_confidence must equal (label == both_wrong)");
  if (c.pass == Pass::kPass1 && c.label != Label::kBothCorrect) errs.push_back(who + "pass1 cells must be both_correct");
  if (!text::is_not_reported(c.final_value) && !c.attribution && c.label != Label::kBothWrong)
    errs.push_back(who + "reported value without attribution");
  if (c.attribution && c.attribution->page < 1) errs.push_back(who + "attribution page < 1");
  if (c.extraction_a.column_id != c.column_id || c.extraction_b.column_id != c.column_id)
    errs.push_back(who + "input extractions belong to another column");
  return errs;
}

json to_json(const ReconciledCell& c) {
  return {{"column_id", c.column_id},
          {"final_value", c.final_value},
          {"label", to_string(c.label)},
          {"attribution", c.attribution ? agents::to_json(*c.attribution) : json(nullptr)},
          {"reconciler_reasoning", c.reconciler_reasoning},
          {"pass", to_string(c.pass)},
          {"low_confidence", c.low_confidence},
          {"inputs", {{"extraction_a", agents::to_json(c.extraction_a)}, {"extraction_b", agents::to_json(c.extraction_b)}}},
          {"pass1_rule", c.pass1_rule ? json(std::string(1, *c.pass1_rule)) : json(nullptr)},
          {"corrected_value", c.corrected_value ? json(*c.corrected_value) : json(nullptr)},
          {"verified_without_image", c.verified_without_image},
          {"forced_tool_rejections", c.forced_tool_rejections}};
}

ReconciledCell cell_from_json(const json& j) {
  ReconciledCell c;
  c.column_id = j.at("column_id").get<std::string>();
  c.final_value = j.at("final_value").get<std::string>();
  c.label = parse_label(j.at("label").get<std::string>());
  if (const auto& a = j.at("attribution"); !a.is_null()) c.attribution = agents::attribution_from_json(a);
  c.reconciler_reasoning = j.at("reconciler_reasoning").get<std::string>();
  const std::string pass = j.at("pass").get<std::string>();
  if (pass != "pass1" && pass != "pass2") throw ParseError("unknown pass '" + pass + "'");
  c.pass = pass == "pass1" ? Pass::kPass1 : Pass::kPass2;
  c.low_confidence = j.at("low_confidence").get<bool>();
  c.extraction_a = agents::extraction_from_json(j.at("inputs").at("extraction_a"));
  c.extraction_b = agents::extraction_from_json(j.at("inputs").at("extraction_b"));
  if (auto r = j.find("pass1_rule"); r != j.end() && r->is_string() && !r->get<std::string>().empty())
    c.pass1_rule = r->get<std::string>().front();
  if (auto v = j.find("corrected_value"); v != j.end() && v->is_string()) c.corrected_value = v->get<std::string>();
  c.verified_without_image = j.value("verified_without_image", false);
  c.forced_tool_rejections = j.value("forced_tool_rejections", 0);
  return c;
}

// ---------------------------------------------------------------------------
// Pass 1

bool same_value(std::string_view a, std::string_view b) {
  return text::normalize_whitespace(a) == text::normalize_whitespace(b);
}

bool is_strict_superset(std::string_view wider, std::string_view narrower) {
  std::map<std::string, int> counts;
  for (const auto& t : text::tokenize(wider)) ++counts[t.text];
  const auto small = text::tokenize(narrower);
  if (small.empty()) return false;
  for (const auto& t : small)
    if (--counts[t.text] < 0) return false;
  // Proper: at least one token of `wider` is left over.
  return std::any_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second > 0; });
}

std::optional<ReconciledCell> pass1_agree(const Extraction& a, const Extraction& b) {
  if (a.column_id != b.column_id) throw ValidationError("pass1_agree: extractions for different columns");
  if (a.failed || b.failed) return std::nullopt;

  ReconciledCell cell;
  cell.column_id = a.column_id;
  cell.label = Label::kBothCorrect;
  cell.pass = Pass::kPass1;
  cell.extraction_a = a;
  cell.extraction_b = b;

  const bool a_nr = text::is_not_reported(a.value);
  const bool b_nr = text::is_not_reported(b.value);
  if (a_nr && b_nr) {
    cell.final_value = std::string(text::kNotReported);
    cell.pass1_rule = 'a';
    cell.reconciler_reasoning = "Pass 1: both agents report Not reported.";
    return cell;
  }
  if (a_nr || b_nr) return std::nullopt;

  if (same_value(a.value, b.value)) {
    cell.final_value = text::normalize_whitespace(a.value);
    cell.attribution = a.attribution ? a.attribution : b.attribution;
    cell.pass1_rule = 'b';
    cell.reconciler_reasoning = "Pass 1: both agents report the same value.";
    return cell;
  }

  if (a.attribution && b.attribution && a.attribution->page == b.attribution->page &&
      a.attribution->modality == b.attribution->modality) {
    const Extraction* winner = nullptr;
    if (is_strict_superset(a.value, b.value)) winner = &a;
    else if (is_strict_superset(b.value, a.value)) winner = &b;
    if (winner != nullptr) {
      cell.final_value = winner->value;
      cell.attribution = winner->attribution;
      cell.pass1_rule = 'c';
      cell.reconciler_reasoning = std::string("Pass 1: same page and modality; ") +
                                  (winner == &a ? "agent A" : "agent B") +
                                  " gives the more complete value, which contains the other.";
      return cell;
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Pass 2

namespace {

json error_result(const std::string& message) { return {{"error", message}}; }

std::set<int> disputed_pages_of(const Extraction& a, const Extraction& b) {
  std::set<int> pages;
  if (a.attribution) pages.insert(a.attribution->page);
  if (b.attribution) pages.insert(b.attribution->page);
  return pages;
}

ReconciledCell both_wrong_cell(const Conflict& c, std::string reasoning) {
  ReconciledCell cell;
  cell.column_id = c.a.column_id;
  cell.final_value = std::string(text::kNotReported);
  cell.label = Label::kBothWrong;
  cell.pass = Pass::kPass2;
  cell.low_confidence = true;
  cell.extraction_a = c.a;
  cell.extraction_b = c.b;
  cell.reconciler_reasoning = std::move(reasoning);
  return cell;
}

json candidate_json(const Extraction& e) {
  return {{"value", e.value},
          {"reasoning", e.reasoning},
          {"attribution", e.attribution ? agents::to_json(*e.attribution) : json(nullptr)},
          {"failed", e.failed}};
}

}  // namespace

std::vector<backend::ToolSpec> reconciler_tools() {
  return {
      {"get_page",
       "Returns the full parsed text of a page and, when available, its rendered image.",
       {{"type", "object"},
        {"properties", {{"page", {{"type", "integer"}}}}},
        {"required", {"page"}},
        {"additionalProperties", false}}},
      {"submit_reconciliation",
       "Submits one verified decision per disputed column.",
       {{"type", "object"},
        {"properties",
         {{"decisions",
           {{"type", "array"},
            {"items",
             {{"type", "object"},
              {"properties",
               {{"column_id", {{"type", "string"}}},
                {"label", {{"type", "string"}, {"enum", {"both_correct", "a_correct_b_wrong", "b_correct_a_wrong", "both_wrong"}}}},
                {"final_value", {{"type", "string"}}},
                {"reasoning", {{"type", "string"}}},
                {"corrected_value", {{"type", {"string", "null"}}}}}},
              {"required", {"column_id", "label", "final_value", "reasoning", "corrected_value"}},
              {"additionalProperties", false}}}}}}},
        {"required", {"decisions"}},
        {"additionalProperties", false}}},
  };
}

std::vector<ReconciledCell> pass2_verify(const std::vector<Conflict>& conflicts, const docmodel::ParsedDocument& doc,
                                         backend::ModelBackend& model, backend::UsageLedger& ledger,
                                         const ReconcileOptions& options) {
  std::map<std::string, ReconciledCell> resolved;
  std::vector<const Conflict*> pending;
  for (const auto& c : conflicts) {
    if (c.a.column_id != c.b.column_id) throw ValidationError("pass2_verify: conflict pairs different columns");
    if (c.disputed_pages.empty())
      resolved.emplace(c.a.column_id,
                       both_wrong_cell(c, "Pass 2: neither agent produced an attributed value; nothing to verify."));
    else
      pending.push_back(&c);
  }

  auto finish = [&] {
    std::vector<ReconciledCell> out;
    for (const auto& c : conflicts) out.push_back(resolved.at(c.a.column_id));
    return out;
  };
  if (pending.empty()) return finish();

  json items = json::array();
  for (const Conflict* c : pending) {
    json item = {{"column_id", c->a.column_id},
                 {"disputed_pages", c->disputed_pages},
                 {"candidate_a", candidate_json(c->a)},
                 {"candidate_b", candidate_json(c->b)}};
    if (options.batch != nullptr)
      for (const auto& col : options.batch->columns)
        if (col.id == c->a.column_id) {
          item["name"] = col.name;
          item["definition"] = col.definition;
          item["category"] = schema::to_string(col.category);
        }
    items.push_back(std::move(item));
  }

  ModelRequest req;
  req.mode = backend::Mode::kToolLoop;
  req.agent = AgentRole::kReconciler;
  req.system_prompt = std::string(prompts::get(prompts::PromptId::kReconciler));
  req.user_content.push_back(Part::text_part(
      json{{"task", "reconcile"}, {"doc_id", doc.doc_id}, {"n_pages", doc.n_pages}, {"conflicts", items}}.dump()));
  req.tools = reconciler_tools();

  std::set<int> viewed;
  int rejections = 0;

  auto fail_pending = [&](const std::string& why) {
    for (const Conflict* c : pending) {
      auto cell = both_wrong_cell(*c, "Pass 2 failed: " + why);
      cell.forced_tool_rejections = rejections;
      resolved.insert_or_assign(c->a.column_id, std::move(cell));
    }
  };

  for (int turn = 0; turn < options.max_turns; ++turn) {
    backend::InvokeOptions inv;
    inv.retry_limit = options.retry_limit;
    inv.batch_id = options.batch_id;
    inv.turn = turn;
    inv.clock = options.clock;
    backend::InvokeResult result;
    try {
      result = backend::invoke(req, model, ledger, inv);
    } catch (const backend::InvocationFailed& e) {
      fail_pending(e.what());
      return finish();
    }
    const backend::ToolCall call = result.payload.call;
    backend::Turn exchange;
    exchange.call = call;

    if (call.name == "get_page") {
      const int page = call.arguments.at("page").get<int>();
      if (page < 1 || page > doc.n_pages) {
        exchange.is_error = true;
        exchange.result = error_result("page " + std::to_string(page) + " outside 1.." + std::to_string(doc.n_pages)).dump();
      } else {
        auto view = docmodel::get_page(doc, page);
        viewed.insert(page);
        exchange.result = json{{"page", page}, {"text", view.text},
                               {"image", view.image ? json(*view.image) : json(nullptr)}}.dump();
        if (view.image) exchange.attachments.push_back(Part::image(*view.image));
      }
      req.turns.push_back(std::move(exchange));
      continue;
    }

    // submit_reconciliation
    std::vector<std::string> unverified;
    for (const Conflict* c : pending) {
      const bool seen = std::any_of(c->disputed_pages.begin(), c->disputed_pages.end(),
                                    [&](int p) { return viewed.contains(p); });
      if (!seen) unverified.push_back(c->a.column_id);
    }
    if (!unverified.empty()) {
      ++rejections;
      std::string msg = "submission rejected: call get_page on a disputed page before submitting; unverified columns:";
      for (const auto& id : unverified) msg += " " + id;
      exchange.is_error = true;
      exchange.result = error_result(msg).dump();
      req.turns.push_back(std::move(exchange));
      continue;
    }

    std::map<std::string, const json*> decisions;
    std::vector<std::string> errs;
    for (const auto& d : call.arguments.at("decisions")) {
      const std::string id = d.at("column_id").get<std::string>();
      const bool known = std::any_of(pending.begin(), pending.end(), [&](const Conflict* c) { return c->a.column_id == id; });
      if (!known) errs.push_back("column_id '" + id + "' is not under dispute");
      else if (!decisions.emplace(id, &d).second) errs.push_back("column_id '" + id + "' decided twice");
    }
    for (const Conflict* c : pending) {
      auto it = decisions.find(c->a.column_id);
      if (it == decisions.end()) {
        errs.push_back("missing decision for column '" + c->a.column_id + "'");
        continue;
      }
      const json& d = *it->second;
      if (parse_label(d.at("label").get<std::string>()) == Label::kBothCorrect) {
        const std::string fv = d.at("final_value").get<std::string>();
        if (!same_value(fv, c->a.value) && !same_value(fv, c->b.value))
          errs.push_back("column '" + c->a.column_id + "': both_correct final_value must be one of the candidates");
      }
    }
    if (!errs.empty()) {
      std::string msg = "submission rejected:";
      for (const auto& e : errs) msg += " " + e + ";";
      exchange.is_error = true;
      exchange.result = error_result(msg).dump();
      req.turns.push_back(std::move(exchange));
      continue;
    }

    for (const Conflict* c : pending) {
      const json& d = *decisions.at(c->a.column_id);
      ReconciledCell cell;
      cell.column_id = c->a.column_id;
      cell.label = parse_label(d.at("label").get<std::string>());
      cell.pass = Pass::kPass2;
      cell.extraction_a = c->a;
      cell.extraction_b = c->b;
      cell.reconciler_reasoning = d.at("reasoning").get<std::string>();
      cell.forced_tool_rejections = rejections;
      cell.verified_without_image = std::none_of(c->disputed_pages.begin(), c->disputed_pages.end(),
                                                 [&](int p) { return viewed.contains(p) && doc.has_image(p); });
      switch (cell.label) {
        case Label::kACorrectBWrong:
          cell.final_value = c->a.value;
          cell.attribution = c->a.attribution;
          break;
        case Label::kBCorrectAWrong:
          cell.final_value = c->b.value;
          cell.attribution = c->b.attribution;
          break;
        case Label::kBothCorrect: {
          const Extraction& pick = same_value(d.at("final_value").get<std::string>(), c->a.value) ? c->a : c->b;
          cell.final_value = pick.value;
          cell.attribution = pick.attribution ? pick.attribution : (&pick == &c->a ? c->b.attribution : c->a.attribution);
          break;
        }
        case Label::kBothWrong:
          cell.final_value = std::string(text::kNotReported);
          cell.low_confidence = true;
          if (const auto& cv = d.at("corrected_value"); cv.is_string() && !cv.get<std::string>().empty())
            cell.corrected_value = cv.get<std::string>();
          break;
      }
      if (text::is_not_reported(cell.final_value)) cell.final_value = std::string(text::kNotReported);
      resolved.insert_or_assign(cell.column_id, std::move(cell));
    }
    return finish();
  }
  fail_pending("no accepted submission within " + std::to_string(options.max_turns) + " turns");
  return finish();
}

ReconciledCell pass2_verify(const Extraction& a, const Extraction& b, const docmodel::ParsedDocument& doc,
                            backend::ModelBackend& model, backend::UsageLedger& ledger,
                            const ReconcileOptions& options) {
  return pass2_verify(std::vector<Conflict>{{a, b, disputed_pages_of(a, b)}}, doc, model, ledger, options).front();
}

std::vector<ReconciledCell> reconcile_batch(const std::vector<Extraction>& extractions_a,
                                            const std::vector<Extraction>& extractions_b,
                                            const docmodel::ParsedDocument& doc, backend::ModelBackend& model,
                                            backend::UsageLedger& ledger, const ReconcileOptions& options) {
  if (extractions_a.size() != extractions_b.size())
    throw ValidationError("reconcile_batch: agents cover different column sets");
  std::map<std::string, const Extraction*> b_by_id;
  for (const auto& b : extractions_b) b_by_id[b.column_id] = &b;

  std::vector<std::optional<ReconciledCell>> slots;
  std::vector<Conflict> conflicts;
  for (const auto& a : extractions_a) {
    auto it = b_by_id.find(a.column_id);
    if (it == b_by_id.end()) throw ValidationError("reconcile_batch: agent B has no extraction for " + a.column_id);
    auto agreed = pass1_agree(a, *it->second);
    if (!agreed) conflicts.push_back({a, *it->second, disputed_pages_of(a, *it->second)});
    slots.push_back(std::move(agreed));
  }
  if (b_by_id.size() != extractions_a.size()) throw ValidationError("reconcile_batch: duplicate column ids");

  std::map<std::string, ReconciledCell> verified;
  if (!conflicts.empty())
    for (auto& cell : pass2_verify(conflicts, doc, model, ledger, options)) verified.emplace(cell.column_id, std::move(cell));

  std::vector<ReconciledCell> out;
  for (std::size_t i = 0; i < extractions_a.size(); ++i)
    out.push_back(slots[i] ? std::move(*slots[i]) : verified.at(extractions_a[i].column_id));
  return out;
}

}  // namespace evisearch::reconciler

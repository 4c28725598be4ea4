// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/evaluation.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/prompts.hpp"
#include "evisearch/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace evisearch::evaluation {

using nlohmann::json;

GoldDocument load_gold(const json& j) {
  if (!j.is_object() || !j.contains("doc_id") || !j.contains("cells") || !j["cells"].is_array())
    throw ParseError("gold: expected {doc_id, cells: [...]}");
  GoldDocument g;
  g.doc_id = j["doc_id"].get<std::string>();
  std::set<std::string> seen;
  for (const auto& c : j["cells"]) {
    GoldCell cell;
    cell.column_id = c.at("column_id").get<std::string>();
    cell.value = c.at("value").get<std::string>();
    if (auto a = c.find("attribution"); a != c.end() && !a->is_null()) cell.attribution = agents::attribution_from_json(*a);
    if (!seen.insert(cell.column_id).second) throw ValidationError("gold: duplicate column " + cell.column_id, {cell.column_id});
    g.cells.push_back(std::move(cell));
  }
  if (g.cells.empty()) throw ValidationError("gold for " + g.doc_id + " has no cells");
  return g;
}

GoldDocument load_gold_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("gold file not found: " + path.string());
  try {
    return load_gold(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("gold: invalid JSON: ") + e.what());
  }
}

NumericMatch numeric_match_detail(std::string_view pred, std::string_view gold, const Tolerance& tol) {
  const bool pred_nr = text::is_not_reported(pred);
  const bool gold_nr = text::is_not_reported(gold);
  if (pred_nr || gold_nr) return {pred_nr && gold_nr, false};

  const auto g = text::extract_numbers(gold);
  const auto p = text::extract_numbers(pred);
  if (g.empty() || p.empty()) return {false, true};
  if (p.size() < g.size()) return {false, false};

  auto close = [&](double pv, double gv) { return std::fabs(pv - gv) <= std::max(tol.abs_tol, tol.rel_tol * std::fabs(gv)); };
  // Kuhn's augmenting paths: gold numbers on the left, predicted on the right.
  std::vector<int> owner(p.size(), -1);
  std::function<bool(std::size_t, std::vector<char>&)> augment = [&](std::size_t gi, std::vector<char>& used) {
    for (std::size_t pi = 0; pi < p.size(); ++pi) {
      if (used[pi] || !close(p[pi], g[gi])) continue;
      used[pi] = 1;
      if (owner[pi] < 0 || augment(static_cast<std::size_t>(owner[pi]), used)) {
        owner[pi] = static_cast<int>(gi);
        return true;
      }
    }
    return false;
  };
  for (std::size_t gi = 0; gi < g.size(); ++gi) {
    std::vector<char> used(p.size(), 0);
    if (!augment(gi, used)) return {false, false};
  }
  return {true, false};
}

bool numeric_match(std::string_view pred, std::string_view gold, const Tolerance& tol) {
  return numeric_match_detail(pred, gold, tol).matched;
}

bool fallback_text_match(std::string_view pred, std::string_view gold) {
  const auto p = text::token_set(pred);
  const auto g = text::token_set(gold);
  if (p.empty() || g.empty()) return text::normalize_whitespace(pred) == text::normalize_whitespace(gold);
  return std::includes(p.begin(), p.end(), g.begin(), g.end()) || std::includes(g.begin(), g.end(), p.begin(), p.end());
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kCorrect: return "correct";
    case Verdict::kIncorrect: return "incorrect";
    case Verdict::kMissing: return "missing";
    case Verdict::kUnevaluated: return "unevaluated";
  }
  return "unevaluated";
}

namespace {

json judge_output_schema() {
  return {{"type", "object"},
          {"properties", {{"verdict", {{"type", "string"}, {"enum", {"correct", "incorrect"}}}}, {"reasoning", {{"type", "string"}}}}},
          {"required", {"verdict", "reasoning"}},
          {"additionalProperties", false}};
}

}  // namespace

Verdict judge_cell(const std::string& pred, bool failed, const GoldCell& gold, const schema::ColumnDef& column,
                   const JudgeContext& ctx, int call_index) {
  const bool pred_missing = failed || text::is_not_reported(pred);
  if (text::is_not_reported(gold.value)) return pred_missing ? Verdict::kCorrect : Verdict::kIncorrect;
  if (pred_missing) return Verdict::kMissing;

  if (column.category == schema::Category::kNumerical)
    return numeric_match(pred, gold.value, ctx.tolerance) ? Verdict::kCorrect : Verdict::kIncorrect;

  if (ctx.backend == nullptr) return fallback_text_match(pred, gold.value) ? Verdict::kCorrect : Verdict::kIncorrect;

  backend::ModelRequest req;
  req.mode = backend::Mode::kJudge;
  req.agent = backend::AgentRole::kJudge;
  req.system_prompt = std::string(prompts::get(prompts::PromptId::kJudgeFreeText));
  req.user_content.push_back(backend::Part::text_part(json{{"task", "judge"},
                                                           {"column", column.name},
                                                           {"definition", column.definition},
                                                           {"gold", gold.value},
                                                           {"prediction", pred}}
                                                          .dump()));
  req.output_schema = judge_output_schema();
  backend::UsageLedger scratch;
  backend::InvokeOptions inv;
  inv.retry_limit = ctx.retry_limit;
  inv.turn = call_index;
  try {
    auto res = backend::invoke(req, *ctx.backend, ctx.ledger != nullptr ? *ctx.ledger : scratch, inv);
    return res.payload.output.at("verdict").get<std::string>() == "correct" ? Verdict::kCorrect : Verdict::kIncorrect;
  } catch (const std::exception&) {
    return Verdict::kUnevaluated;
  }
}

void finalize(StratumScore& s) {
  s.correctness = s.attempted > 0 ? std::optional(100.0 * static_cast<double>(s.correct) / static_cast<double>(s.attempted)) : std::nullopt;
  s.completeness = s.gold_reported > 0 ? std::optional(100.0 * static_cast<double>(s.filled) / static_cast<double>(s.gold_reported)) : std::nullopt;
  if (s.correctness && s.completeness) s.overall = (*s.correctness + *s.completeness) / 2.0;
  else s.overall.reset();
}

namespace {

const char* const kStrata[] = {"numerical", "free_text", "all", "text", "table", "figure"};

void tally(EvalReport& rep) {
  rep.strata.clear();
  for (const char* s : kStrata) rep.strata[s] = StratumScore{};
  rep.unevaluated = 0;
  for (const auto& v : rep.verdicts) {
    if (v.verdict == Verdict::kUnevaluated) {
      ++rep.unevaluated;
      continue;
    }
    const bool attempted = !text::is_not_reported(v.predicted) && v.verdict != Verdict::kMissing;
    const bool gold_reported = !text::is_not_reported(v.gold);
    std::vector<std::string> keys = {v.category, "all"};
    if (v.gold_modality) keys.push_back(*v.gold_modality);
    for (const auto& k : keys) {
      auto& s = rep.strata[k];
      ++s.cells;
      if (attempted) {
        ++s.attempted;
        if (v.verdict == Verdict::kCorrect) ++s.correct;
      }
      if (gold_reported) {
        ++s.gold_reported;
        if (attempted) ++s.filled;
      }
    }
  }
  for (auto& [_, s] : rep.strata) finalize(s);
}

std::optional<agents::Attribution> effective_attribution(const store::CellRecord& r) {
  switch (r.review_status) {
    case store::ReviewStatus::kAcceptedA: return r.reconciled.extraction_a.attribution;
    case store::ReviewStatus::kAcceptedB: return r.reconciled.extraction_b.attribution;
    default: return r.reconciled.attribution;
  }
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *v);
  return buf;
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

EvalReport score_run(const std::vector<store::CellRecord>& cells, const GoldDocument& gold,
                     const schema::Schema& schema, const JudgeContext& ctx) {
  EvalReport rep;
  rep.doc_id = gold.doc_id;
  int call_index = 0;
  for (const auto& g : gold.cells) {
    const schema::ColumnDef* col = schema.find(g.column_id);
    if (col == nullptr) throw ValidationError("gold column '" + g.column_id + "' is not in schema " + schema.name, {g.column_id});
    auto rec = std::find_if(cells.begin(), cells.end(), [&](const store::CellRecord& r) { return r.column_id == g.column_id; });
    std::string pred(text::kNotReported);
    bool failed = true;
    if (rec != cells.end()) {
      pred = rec->effective_value();
      failed = rec->review_status == store::ReviewStatus::kUnreviewed && rec->reconciled.extraction_a.failed &&
               rec->reconciled.extraction_b.failed;
    }
    CellVerdict v;
    v.column_id = g.column_id;
    v.category = std::string(schema::to_string(col->category));
    if (g.attribution) v.gold_modality = std::string(docmodel::to_string(g.attribution->modality));
    v.predicted = failed ? std::string(text::kNotReported) : pred;
    v.gold = g.value;
    v.verdict = judge_cell(pred, failed, g, *col, ctx, call_index++);
    rep.verdicts.push_back(std::move(v));
  }
  tally(rep);

  for (const auto& r : cells) {
    if (text::is_not_reported(r.effective_value())) continue;
    ++rep.reported_predictions;
    if (effective_attribution(r)) ++rep.attributed_predictions;
  }
  if (rep.reported_predictions > 0)
    rep.attribution_coverage =
        100.0 * static_cast<double>(rep.attributed_predictions) / static_cast<double>(rep.reported_predictions);
  return rep;
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  EvalReport out;
  out.doc_id = "*";
  for (const auto& r : reports) {
    for (auto v : r.verdicts) {
      v.column_id = r.doc_id + "/" + v.column_id;
      out.verdicts.push_back(std::move(v));
    }
    out.reported_predictions += r.reported_predictions;
    out.attributed_predictions += r.attributed_predictions;
  }
  tally(out);
  if (out.reported_predictions > 0)
    out.attribution_coverage =
        100.0 * static_cast<double>(out.attributed_predictions) / static_cast<double>(out.reported_predictions);
  return out;
}

std::string category_table_csv(const EvalReport& r, const std::string& method) {
  std::ostringstream out;
  out << "Method,Numeric Corr.,Numeric Comp.,Numeric Ovrl.,Free-Text Corr.,Free-Text Comp.,Free-Text Ovrl.,"
         "All Corr.,All Comp.,All Ovrl.\n";
  out << method;
  for (const char* k : {"numerical", "free_text", "all"}) {
    const auto& s = r.strata.at(k);
    out << ',' << fmt(s.correctness) << ',' << fmt(s.completeness) << ',' << fmt(s.overall);
  }
  out << '\n';
  return out.str();
}

std::string modality_table_csv(const EvalReport& r, const std::string& method) {
  std::ostringstream out;
  out << "Method,Text,Table,Figure\n" << method;
  for (const char* k : {"text", "table", "figure"}) out << ',' << fmt(r.strata.at(k).overall);
  out << '\n';
  return out.str();
}

json to_json(const EvalReport& r) {
  json strata = json::object();
  for (const auto& [k, s] : r.strata)
    strata[k] = {{"cells", s.cells},
                 {"attempted", s.attempted},
                 {"correct", s.correct},
                 {"gold_reported", s.gold_reported},
                 {"filled", s.filled},
                 {"correctness", opt(s.correctness)},
                 {"completeness", opt(s.completeness)},
                 {"overall", opt(s.overall)}};
  return {{"doc_id", r.doc_id},
          {"strata", strata},
          {"attribution_coverage", opt(r.attribution_coverage)},
          {"unevaluated", r.unevaluated}};
}

std::string verdict_log_jsonl(const EvalReport& r) {
  std::string out;
  for (const auto& v : r.verdicts) {
    out += json{{"column_id", v.column_id},
                {"category", v.category},
                {"gold_modality", v.gold_modality ? json(*v.gold_modality) : json(nullptr)},
                {"predicted", v.predicted},
                {"gold", v.gold},
                {"verdict", to_string(v.verdict)}}
               .dump();
    out += '\n';
  }
  return out;
}

}  // namespace evisearch::evaluation

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/agents.hpp"
#include "evisearch/backend.hpp"
#include "evisearch/schema.hpp"
#include "evisearch/store.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace evisearch::evaluation {

struct GoldCell {
  std::string column_id;
  std::string value;
  std::optional<agents::Attribution> attribution;
};

struct GoldDocument {
  std::string doc_id;
  std::vector<GoldCell> cells;
};

/// {doc_id, cells: [{column_id, value, attribution: {page, modality}}]}; empty cells is an error.
GoldDocument load_gold(const nlohmann::json& j);
GoldDocument load_gold_file(const std::filesystem::path& path);

struct Tolerance {
  double rel_tol = 0.005;
  double abs_tol = 1e-9;
};

struct NumericMatch {
  bool matched = false;
  bool unparseable = false;  // a non-sentinel side had no numbers
};

/// Every gold number must be paired with a distinct predicted number within
/// max(abs_tol, rel_tol * |gold|). "Not reported" matches only itself.
NumericMatch numeric_match_detail(std::string_view pred, std::string_view gold, const Tolerance& tol = {});
bool numeric_match(std::string_view pred, std::string_view gold, const Tolerance& tol = {});

/// Order-insensitive token containment (either direction) after lowercasing.
bool fallback_text_match(std::string_view pred, std::string_view gold);

enum class Verdict { kCorrect, kIncorrect, kMissing, kUnevaluated };
std::string_view to_string(Verdict v);

struct JudgeContext {
  backend::ModelBackend* backend = nullptr;  // free-text judge; fallback when null
  backend::UsageLedger* ledger = nullptr;
  Tolerance tolerance;
  int retry_limit = backend::kDefaultRetryLimit;
};

/// `failed` marks a prediction that came from a failed extraction.
Verdict judge_cell(const std::string& pred, bool failed, const GoldCell& gold, const schema::ColumnDef& column,
                   const JudgeContext& ctx = {}, int call_index = 0);

struct StratumScore {
  std::size_t cells = 0;
  std::size_t attempted = 0;        // correctness denominator
  std::size_t correct = 0;
  std::size_t gold_reported = 0;    // completeness denominator
  std::size_t filled = 0;
  std::optional<double> correctness;   // percent
  std::optional<double> completeness;  // percent
  std::optional<double> overall;       // mean of the two
};

struct CellVerdict {
  std::string column_id;
  std::string category;
  std::optional<std::string> gold_modality;
  std::string predicted;
  std::string gold;
  Verdict verdict = Verdict::kIncorrect;
};

struct EvalReport {
  std::string doc_id;
  std::map<std::string, StratumScore> strata;  // numerical, free_text, all, text, table, figure
  std::optional<double> attribution_coverage;  // percent of reported predictions with attribution
  std::size_t reported_predictions = 0;
  std::size_t attributed_predictions = 0;
  std::size_t unevaluated = 0;
  std::vector<CellVerdict> verdicts;
};

/// Scores the effective values of a review table against gold.
EvalReport score_run(const std::vector<store::CellRecord>& cells, const GoldDocument& gold,
                     const schema::Schema& schema, const JudgeContext& ctx = {});

/// Pools several documents' verdicts into one report.
EvalReport merge_reports(const std::vector<EvalReport>& reports);

/// Recomputes rates of a stratum from its counts.
void finalize(StratumScore& s);

/// One row per method: Corr./Comp./Ovrl. for numeric, free-text and all columns.
std::string category_table_csv(const EvalReport& r, const std::string& method = "evisearch");
/// One row per method: overall score per gold evidence modality (text, table, figure).
std::string modality_table_csv(const EvalReport& r, const std::string& method = "evisearch");
nlohmann::json to_json(const EvalReport& r);
std::string verdict_log_jsonl(const EvalReport& r);

}  // namespace evisearch::evaluation

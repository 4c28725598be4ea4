// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/backend.hpp"
#include "evisearch/clock.hpp"
#include "evisearch/docmodel.hpp"
#include "evisearch/reconciler.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace evisearch::store {

using reconciler::ReconciledCell;

enum class ReviewStatus { kUnreviewed, kAcceptedA, kAcceptedB, kAcceptedReconciled, kHumanCorrected };

std::string_view to_string(ReviewStatus s);
ReviewStatus parse_review_status(std::string_view s);

struct ReviewAction {
  enum class Kind { kAcceptA, kAcceptB, kAcceptReconciled, kCorrect };
  Kind kind = Kind::kAcceptReconciled;
  std::string value;  // kCorrect only
  std::string note;

  static ReviewAction accept_a() { return {Kind::kAcceptA, {}, {}}; }
  static ReviewAction accept_b() { return {Kind::kAcceptB, {}, {}}; }
  static ReviewAction accept_reconciled() { return {Kind::kAcceptReconciled, {}, {}}; }
  static ReviewAction correct(std::string value, std::string note = {}) {
    return {Kind::kCorrect, std::move(value), std::move(note)};
  }
};

std::string_view to_string(ReviewAction::Kind k);
ReviewAction::Kind parse_action_kind(std::string_view s);

/// One line of the per-document review log.
struct ReviewEvent {
  std::int64_t seq = 0;  // 1-based, per document
  std::string timestamp;
  std::string doc_id;
  int run_version = 1;
  std::string column_id;
  std::string action;
  std::optional<std::string> value;
  std::optional<std::string> note;
  std::string before_value;
  std::string after_value;
  std::string before_status;
  std::string after_status;

  bool operator==(const ReviewEvent&) const = default;
};

nlohmann::json to_json(const ReviewEvent& e);
ReviewEvent review_event_from_json(const nlohmann::json& j);

struct CellRecord {
  std::string doc_id;
  std::string column_id;
  int run_version = 1;
  ReconciledCell reconciled;
  ReviewStatus review_status = ReviewStatus::kUnreviewed;
  std::optional<std::string> human_value;
  std::optional<std::string> reviewer_note;
  std::vector<ReviewEvent> history;

  /// human_value when corrected, the accepted candidate, else the reconciled value.
  std::string effective_value() const;
  bool operator==(const CellRecord&) const = default;
};

nlohmann::json to_json(const CellRecord& r);

/// Applies one action to a record in memory (no persistence). Throws
/// ValidationError for a correction with an empty value.
ReviewEvent apply_action(CellRecord& record, const ReviewAction& action, std::int64_t seq, std::string timestamp);

/// Rebuilds records of one run from the reconciled cells and the review log.
std::vector<CellRecord> replay(const std::string& doc_id, int run_version, const std::vector<ReconciledCell>& cells,
                               const std::vector<ReviewEvent>& events);

struct RunManifest {
  std::string doc_id;
  std::string schema_name;
  std::string schema_version;
  std::string mode = "evisearch";
  std::string extraction_backend;
  std::string reconciliation_backend;
  std::string embedder;
  std::string prompt_version;
  nlohmann::json batches = nlohmann::json::array();  // [{batch_id, columns, source_groups}]
  std::string started_at;
  std::string completed_at;
  backend::LedgerTotals ledger_totals;
  bool page_images_available = false;
  bool markdown_fallback_agent_a = false;
  nlohmann::json settings = nlohmann::json::object();  // batch_limit, k, max_turns, retry_limit
  int run_version = 0;  // assigned by the store

  std::vector<std::string> column_ids() const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

struct StoredRun {
  int version = 0;
  RunManifest manifest;
  std::vector<ReconciledCell> cells;
};

/// Directory-backed store:
///   <root>/<doc_id>/document.json
///   <root>/<doc_id>/runs/v0001/{cells.json, manifest.json, ledger.json, ledger.csv, extractions.json}
///   <root>/<doc_id>/reviews.jsonl
/// Runs become visible atomically (staged then renamed). Mutations of one
/// document are serialized; reads take no locks.
class Store {
 public:
  explicit Store(std::filesystem::path root, const Clock* clock = nullptr);

  const std::filesystem::path& root() const { return root_; }

  /// Validates every cell, then writes a new run version. Throws
  /// ValidationError (nothing written) listing offending cells.
  int persist_run(const std::string& doc_id, const std::vector<ReconciledCell>& cells, RunManifest manifest,
                  const backend::UsageLedger* ledger = nullptr, const docmodel::ParsedDocument* document = nullptr,
                  const nlohmann::json* extractions = nullptr);

  std::vector<std::string> list_documents() const;
  std::vector<int> run_versions(const std::string& doc_id) const;
  /// Latest run when version is omitted. Throws NotFoundError.
  StoredRun load_run(const std::string& doc_id, std::optional<int> version = std::nullopt) const;
  std::optional<docmodel::ParsedDocument> load_document(const std::string& doc_id) const;
  std::optional<backend::UsageLedger> load_ledger(const std::string& doc_id, std::optional<int> version = std::nullopt) const;

  std::vector<ReviewEvent> review_events(const std::string& doc_id) const;
  /// Records of the latest run with its review history replayed.
  std::vector<CellRecord> load_table(const std::string& doc_id) const;
  CellRecord load_cell(const std::string& doc_id, const std::string& column_id) const;

  CellRecord apply_review(const std::string& doc_id, const std::string& column_id, const ReviewAction& action);

  /// Preference/supervision records over the given documents (all when empty),
  /// ordered by doc_id then schema column order.
  std::vector<nlohmann::json> export_supervision(const std::vector<std::string>& doc_ids = {}) const;

 private:
  std::filesystem::path doc_dir(const std::string& doc_id) const;
  std::mutex& doc_mutex(const std::string& doc_id);

  std::filesystem::path root_;
  const Clock* clock_;
  std::mutex locks_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

/// Supervision records for one table (see Store::export_supervision).
std::vector<nlohmann::json> supervision_records(const std::vector<CellRecord>& table);

}  // namespace evisearch::store

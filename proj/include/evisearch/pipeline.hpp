// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/agents.hpp"
#include "evisearch/backend.hpp"
#include "evisearch/clock.hpp"
#include "evisearch/docmodel.hpp"
#include "evisearch/evaluation.hpp"
#include "evisearch/live.hpp"
#include "evisearch/reconciler.hpp"
#include "evisearch/retrieval.hpp"
#include "evisearch/schema.hpp"
#include "evisearch/store.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace evisearch::pipeline {

enum class Mode { kEviSearch, kAgentAOnly, kParsedSingle };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);  // evisearch | agent_a_only | parsed_single

inline live::BackendConfig hash_embedder_config() {
  live::BackendConfig c;
  c.name = "hash";
  return c;
}

struct PipelineConfig {
  std::filesystem::path schema_path;
  std::vector<std::filesystem::path> documents;
  std::filesystem::path output_dir;
  Mode mode = Mode::kEviSearch;
  live::BackendConfig extraction;
  live::BackendConfig reconciliation;
  std::optional<live::BackendConfig> judge;
  live::BackendConfig embedder = hash_embedder_config();
  std::size_t batch_limit = schema::kDefaultBatchLimit;
  std::size_t top_k = retrieval::kDefaultTopK;
  int max_turns = agents::kDefaultMaxTurns;
  int retry_limit = backend::kDefaultRetryLimit;
  int max_in_flight = 4;
  evaluation::Tolerance tolerance;
  /// ISO-8601 instant; when set, every timestamp of the run uses it.
  std::optional<std::string> fixed_time;
};

/// Relative paths resolve against `base_dir`. Throws ParseError / ValidationError.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config_file(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& c);

/// Range checks and path existence. Throws ValidationError listing every problem.
void validate_config(const PipelineConfig& c);

/// Native document JSON (has doc_id) or parser-native output (doc_id from the file stem).
docmodel::ParsedDocument load_any_document(const std::filesystem::path& path);

struct RunSettings {
  Mode mode = Mode::kEviSearch;
  std::size_t batch_limit = schema::kDefaultBatchLimit;
  std::size_t top_k = retrieval::kDefaultTopK;
  int max_turns = agents::kDefaultMaxTurns;
  int retry_limit = backend::kDefaultRetryLimit;
  int max_in_flight = 4;

  nlohmann::json to_json() const;
};

struct Backends {
  backend::ModelBackend& extraction;
  backend::ModelBackend& reconciliation;
  retrieval::EmbeddingProvider& embedder;
};

/// Everything one document run produced, before persistence.
struct DocumentRun {
  std::string doc_id;
  std::vector<schema::ColumnBatch> batches;
  std::vector<agents::Extraction> extractions_a;
  std::vector<agents::Extraction> extractions_b;
  std::vector<reconciler::ReconciledCell> cells;  // schema column order
  backend::UsageLedger ledger;
  store::RunManifest manifest;
  std::vector<int> agent_b_transmissions;  // pages whose full content reached Agent B
  std::size_t agent_b_transmitted_chars = 0;
  std::size_t pass2_invocations = 0;  // batches that needed a Pass-2 loop

  nlohmann::json extractions_json() const;
};

/// Agent A batches run concurrently; Agent B works through the batches in
/// order within one session; reconciliation runs per batch concurrently.
/// Concurrency is bounded by settings.max_in_flight.
DocumentRun run_document(const docmodel::ParsedDocument& doc, const schema::Schema& schema, const RunSettings& settings,
                         Backends& backends, const Clock& clock);

struct DocumentOutcome {
  std::filesystem::path source;
  std::string doc_id;
  bool ok = false;
  int run_version = 0;
  std::string error;
  backend::LedgerTotals totals;
};

struct ExtractSummary {
  std::vector<DocumentOutcome> documents;
  int exit_code() const;
};

/// Loads schema and documents, runs each document, persists runs to the
/// store at config.output_dir. A failing document does not stop the others.
/// Startup problems (config, schema, backends) throw before anything is written.
ExtractSummary cmd_extract(const PipelineConfig& config);

struct EvaluateOptions {
  /// A document directory (<store>/<doc_id>) or one run directory (<store>/<doc_id>/runs/vNNNN).
  std::filesystem::path run_dir;
  std::filesystem::path gold_path;
  std::filesystem::path schema_path;
  std::filesystem::path out_dir;
  std::optional<live::BackendConfig> judge;
  evaluation::Tolerance tolerance;
  std::string method = "evisearch";
};

/// Scores the run's effective values (reviews applied) and writes
/// report.json, category_table.csv, modality_table.csv and verdicts.jsonl.
/// Throws ValidationError on doc_id mismatch or an empty gold file.
evaluation::EvalReport cmd_evaluate(const EvaluateOptions& options);

}  // namespace evisearch::pipeline

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/store.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/text.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace evisearch::store {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ReviewStatus s) {
  switch (s) {
    case ReviewStatus::kUnreviewed: return "unreviewed";
    case ReviewStatus::kAcceptedA: return "accepted_a";
    case ReviewStatus::kAcceptedB: return "accepted_b";
    case ReviewStatus::kAcceptedReconciled: return "accepted_reconciled";
    case ReviewStatus::kHumanCorrected: return "human_corrected";
  }
  return "unreviewed";
}

ReviewStatus parse_review_status(std::string_view s) {
  for (auto st : {ReviewStatus::kUnreviewed, ReviewStatus::kAcceptedA, ReviewStatus::kAcceptedB,
                  ReviewStatus::kAcceptedReconciled, ReviewStatus::kHumanCorrected})
    if (to_string(st) == s) return st;
  throw ParseError("unknown review status '" + std::string(s) + "'");
}

std::string_view to_string(ReviewAction::Kind k) {
  switch (k) {
    case ReviewAction::Kind::kAcceptA: return "accept_a";
    case ReviewAction::Kind::kAcceptB: return "accept_b";
    case ReviewAction::Kind::kAcceptReconciled: return "accept_reconciled";
    case ReviewAction::Kind::kCorrect: return "correct";
  }
  return "accept_reconciled";
}

ReviewAction::Kind parse_action_kind(std::string_view s) {
  for (auto k : {ReviewAction::Kind::kAcceptA, ReviewAction::Kind::kAcceptB, ReviewAction::Kind::kAcceptReconciled,
                 ReviewAction::Kind::kCorrect})
    if (to_string(k) == s) return k;
  throw ParseError("unknown review action '" + std::string(s) + "'");
}

namespace {

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (auto it = j.find(key); it != j.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw NotFoundError("missing file " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("corrupt store file " + p.string() + ": " + e.what());
  }
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

void write_atomic(const fs::path& p, const std::string& content) {
  const fs::path tmp = p.string() + ".tmp";
  write_file(tmp, content);
  fs::rename(tmp, p);
}

std::string version_dir_name(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%04d", v);
  return buf;
}

void check_doc_id(const std::string& doc_id) {
  if (doc_id.empty() || doc_id == "." || doc_id == ".." || doc_id.find('/') != std::string::npos ||
      doc_id.find('\\') != std::string::npos)
    throw ValidationError("invalid doc_id '" + doc_id + "'");
}

}  // namespace

json to_json(const ReviewEvent& e) {
  return {{"seq", e.seq},
          {"timestamp", e.timestamp},
          {"doc_id", e.doc_id},
          {"run_version", e.run_version},
          {"column_id", e.column_id},
          {"action", e.action},
          {"value", opt(e.value)},
          {"note", opt(e.note)},
          {"before_value", e.before_value},
          {"after_value", e.after_value},
          {"before_status", e.before_status},
          {"after_status", e.after_status}};
}

ReviewEvent review_event_from_json(const json& j) {
  ReviewEvent e;
  e.seq = j.at("seq").get<std::int64_t>();
  e.timestamp = j.at("timestamp").get<std::string>();
  e.doc_id = j.at("doc_id").get<std::string>();
  e.run_version = j.at("run_version").get<int>();
  e.column_id = j.at("column_id").get<std::string>();
  e.action = j.at("action").get<std::string>();
  e.value = opt_string(j, "value");
  e.note = opt_string(j, "note");
  e.before_value = j.at("before_value").get<std::string>();
  e.after_value = j.at("after_value").get<std::string>();
  e.before_status = j.at("before_status").get<std::string>();
  e.after_status = j.at("after_status").get<std::string>();
  return e;
}

std::string CellRecord::effective_value() const {
  switch (review_status) {
    case ReviewStatus::kHumanCorrected: return human_value.value_or(reconciled.final_value);
    case ReviewStatus::kAcceptedA: return reconciled.extraction_a.value;
    case ReviewStatus::kAcceptedB: return reconciled.extraction_b.value;
    default: return reconciled.final_value;
  }
}

json to_json(const CellRecord& r) {
  json history = json::array();
  for (const auto& e : r.history) history.push_back(to_json(e));
  return {{"doc_id", r.doc_id},
          {"column_id", r.column_id},
          {"run_version", r.run_version},
          {"reconciled", reconciler::to_json(r.reconciled)},
          {"review_status", to_string(r.review_status)},
          {"human_value", opt(r.human_value)},
          {"reviewer_note", opt(r.reviewer_note)},
          {"effective_value", r.effective_value()},
          {"history", history}};
}

ReviewEvent apply_action(CellRecord& record, const ReviewAction& action, std::int64_t seq, std::string timestamp) {
  ReviewEvent ev;
  ev.seq = seq;
  ev.timestamp = std::move(timestamp);
  ev.doc_id = record.doc_id;
  ev.run_version = record.run_version;
  ev.column_id = record.column_id;
  ev.action = std::string(to_string(action.kind));
  ev.before_value = record.effective_value();
  ev.before_status = std::string(to_string(record.review_status));
  if (!action.note.empty()) ev.note = action.note;

  switch (action.kind) {
    case ReviewAction::Kind::kAcceptA: record.review_status = ReviewStatus::kAcceptedA; break;
    case ReviewAction::Kind::kAcceptB: record.review_status = ReviewStatus::kAcceptedB; break;
    case ReviewAction::Kind::kAcceptReconciled: record.review_status = ReviewStatus::kAcceptedReconciled; break;
    case ReviewAction::Kind::kCorrect: {
      const std::string v = text::normalize_whitespace(action.value);
      if (v.empty()) throw ValidationError("correction for " + record.column_id + " requires a non-empty value");
      record.review_status = ReviewStatus::kHumanCorrected;
      ev.value = v;
      break;
    }
  }
  record.human_value = ev.value;
  record.reviewer_note = ev.note;
  ev.after_value = record.effective_value();
  ev.after_status = std::string(to_string(record.review_status));
  record.history.push_back(ev);
  return ev;
}

std::vector<CellRecord> replay(const std::string& doc_id, int run_version, const std::vector<ReconciledCell>& cells,
                               const std::vector<ReviewEvent>& events) {
  std::vector<CellRecord> table;
  table.reserve(cells.size());
  for (const auto& c : cells) {
    CellRecord r;
    r.doc_id = doc_id;
    r.column_id = c.column_id;
    r.run_version = run_version;
    r.reconciled = c;
    table.push_back(std::move(r));
  }
  for (const auto& ev : events) {
    if (ev.run_version != run_version) continue;
    auto it = std::find_if(table.begin(), table.end(), [&](const CellRecord& r) { return r.column_id == ev.column_id; });
    if (it == table.end()) continue;
    ReviewAction action;
    action.kind = parse_action_kind(ev.action);
    action.value = ev.value.value_or("");
    action.note = ev.note.value_or("");
    apply_action(*it, action, ev.seq, ev.timestamp);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<std::string> RunManifest::column_ids() const {
  std::vector<std::string> ids;
  for (const auto& b : batches)
    for (const auto& c : b.at("columns")) ids.push_back(c.get<std::string>());
  return ids;
}

json to_json(const RunManifest& m) {
  return {{"doc_id", m.doc_id},
          {"schema", {{"name", m.schema_name}, {"version", m.schema_version}}},
          {"mode", m.mode},
          {"backends", {{"extraction", m.extraction_backend}, {"reconciliation", m.reconciliation_backend}, {"embedder", m.embedder}}},
          {"prompt_version", m.prompt_version},
          {"batches", m.batches},
          {"started_at", m.started_at},
          {"completed_at", m.completed_at},
          {"ledger_totals", backend::to_json(m.ledger_totals)},
          {"flags", {{"page_images_available", m.page_images_available}, {"markdown_fallback_agent_a", m.markdown_fallback_agent_a}}},
          {"settings", m.settings},
          {"run_version", m.run_version}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.doc_id = j.at("doc_id").get<std::string>();
  m.schema_name = j.at("schema").at("name").get<std::string>();
  m.schema_version = j.at("schema").at("version").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.extraction_backend = j.at("backends").at("extraction").get<std::string>();
  m.reconciliation_backend = j.at("backends").at("reconciliation").get<std::string>();
  m.embedder = j.at("backends").at("embedder").get<std::string>();
  m.prompt_version = j.at("prompt_version").get<std::string>();
  m.batches = j.at("batches");
  m.started_at = j.at("started_at").get<std::string>();
  m.completed_at = j.at("completed_at").get<std::string>();
  const auto& t = j.at("ledger_totals");
  m.ledger_totals = {t.at("input_tokens").get<std::int64_t>(), t.at("output_tokens").get<std::int64_t>(),
                     t.at("total_tokens").get<std::int64_t>(), t.at("api_calls").get<std::int64_t>()};
  m.page_images_available = j.at("flags").at("page_images_available").get<bool>();
  m.markdown_fallback_agent_a = j.at("flags").at("markdown_fallback_agent_a").get<bool>();
  m.settings = j.at("settings");
  m.run_version = j.at("run_version").get<int>();
  return m;
}

// ---------------------------------------------------------------------------
// Store

Store::Store(fs::path root, const Clock* clock) : root_(std::move(root)), clock_(clock) {
  fs::create_directories(root_);
}

fs::path Store::doc_dir(const std::string& doc_id) const {
  check_doc_id(doc_id);
  return root_ / doc_id;
}

std::mutex& Store::doc_mutex(const std::string& doc_id) {
  std::lock_guard lock(locks_mu_);
  auto& slot = locks_[doc_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

int Store::persist_run(const std::string& doc_id, const std::vector<ReconciledCell>& cells, RunManifest manifest,
                       const backend::UsageLedger* ledger, const docmodel::ParsedDocument* document,
                       const json* extractions) {
  const fs::path dir = doc_dir(doc_id);

  std::vector<std::string> errs;
  std::vector<std::string> offenders;
  for (const auto& c : cells) {
    auto e = reconciler::check_cell(c);
    if (!e.empty()) offenders.push_back(c.column_id);
    errs.insert(errs.end(), e.begin(), e.end());
  }
  std::multiset<std::string> have;
  for (const auto& c : cells) have.insert(c.column_id);
  std::set<std::string> unique(have.begin(), have.end());
  if (unique.size() != have.size()) errs.push_back("duplicate cells for one column");
  if (!manifest.batches.empty()) {
    const auto ids = manifest.column_ids();
    const std::set<std::string> expected(ids.begin(), ids.end());
    for (const auto& id : expected)
      if (!unique.contains(id)) {
        errs.push_back("missing cell for column " + id);
        offenders.push_back(id);
      }
    for (const auto& id : unique)
      if (!expected.contains(id)) {
        errs.push_back("cell for column " + id + " is not in the run's schema");
        offenders.push_back(id);
      }
  }
  if (!errs.empty()) {
    std::string msg = "persist_run(" + doc_id + ") rejected:";
    for (const auto& e : errs) msg += " " + e + ";";
    throw ValidationError(msg, offenders);
  }

  std::lock_guard lock(doc_mutex(doc_id));
  fs::create_directories(dir / "runs");
  const auto versions = run_versions(doc_id);
  const int version = versions.empty() ? 1 : versions.back() + 1;
  manifest.run_version = version;
  manifest.doc_id = doc_id;

  json cells_json = json::array();
  for (const auto& c : cells) cells_json.push_back(reconciler::to_json(c));

  const fs::path staging = dir / "runs" / (".staging-" + version_dir_name(version));
  fs::remove_all(staging);
  fs::create_directories(staging);
  write_file(staging / "cells.json", json{{"doc_id", doc_id}, {"run_version", version}, {"cells", cells_json}}.dump(2) + "\n");
  write_file(staging / "manifest.json", to_json(manifest).dump(2) + "\n");
  if (ledger != nullptr) {
    write_file(staging / "ledger.json", backend::ledger_to_json(*ledger).dump(2) + "\n");
    write_file(staging / "ledger.csv", backend::ledger_records_csv(*ledger));
    write_file(staging / "ledger_report.csv", backend::ledger_report_csv(backend::ledger_report(*ledger)));
  }
  if (extractions != nullptr) write_file(staging / "extractions.json", extractions->dump(2) + "\n");
  fs::rename(staging, dir / "runs" / version_dir_name(version));

  if (document != nullptr) write_atomic(dir / "document.json", docmodel::to_json(*document).dump(2) + "\n");
  return version;
}

std::vector<std::string> Store::list_documents() const {
  std::vector<std::string> out;
  if (!fs::exists(root_)) return out;
  for (const auto& entry : fs::directory_iterator(root_))
    if (entry.is_directory() && fs::exists(entry.path() / "runs")) out.push_back(entry.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> Store::run_versions(const std::string& doc_id) const {
  std::vector<int> out;
  const fs::path runs = doc_dir(doc_id) / "runs";
  if (!fs::exists(runs)) return out;
  for (const auto& entry : fs::directory_iterator(runs)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.size() != 5 || name[0] != 'v') continue;
    try {
      out.push_back(std::stoi(name.substr(1)));
    } catch (const std::exception&) {
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

StoredRun Store::load_run(const std::string& doc_id, std::optional<int> version) const {
  const auto versions = run_versions(doc_id);
  if (versions.empty()) throw NotFoundError("no runs stored for document " + doc_id);
  const int v = version.value_or(versions.back());
  if (std::find(versions.begin(), versions.end(), v) == versions.end())
    throw NotFoundError("document " + doc_id + " has no run v" + std::to_string(v));
  const fs::path dir = doc_dir(doc_id) / "runs" / version_dir_name(v);
  StoredRun run;
  run.version = v;
  run.manifest = manifest_from_json(read_json(dir / "manifest.json"));
  const json stored = read_json(dir / "cells.json");
  for (const auto& c : stored.at("cells")) run.cells.push_back(reconciler::cell_from_json(c));
  return run;
}

std::optional<docmodel::ParsedDocument> Store::load_document(const std::string& doc_id) const {
  const fs::path p = doc_dir(doc_id) / "document.json";
  if (!fs::exists(p)) return std::nullopt;
  return docmodel::load_document(read_json(p));
}

std::optional<backend::UsageLedger> Store::load_ledger(const std::string& doc_id, std::optional<int> version) const {
  const auto versions = run_versions(doc_id);
  if (versions.empty()) throw NotFoundError("no runs stored for document " + doc_id);
  const fs::path p = doc_dir(doc_id) / "runs" / version_dir_name(version.value_or(versions.back())) / "ledger.json";
  if (!fs::exists(p)) return std::nullopt;
  return backend::ledger_from_json(read_json(p));
}

std::vector<ReviewEvent> Store::review_events(const std::string& doc_id) const {
  std::vector<ReviewEvent> out;
  std::ifstream in(doc_dir(doc_id) / "reviews.jsonl");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(review_event_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError("corrupt review log for " + doc_id + ": " + e.what());
    }
  }
  return out;
}

std::vector<CellRecord> Store::load_table(const std::string& doc_id) const {
  const StoredRun run = load_run(doc_id);
  return replay(doc_id, run.version, run.cells, review_events(doc_id));
}

CellRecord Store::load_cell(const std::string& doc_id, const std::string& column_id) const {
  for (auto& r : load_table(doc_id))
    if (r.column_id == column_id) return r;
  throw NotFoundError("document " + doc_id + " has no cell " + column_id);
}

CellRecord Store::apply_review(const std::string& doc_id, const std::string& column_id, const ReviewAction& action) {
  const fs::path dir = doc_dir(doc_id);
  std::lock_guard lock(doc_mutex(doc_id));
  auto table = load_table(doc_id);
  auto it = std::find_if(table.begin(), table.end(), [&](const CellRecord& r) { return r.column_id == column_id; });
  if (it == table.end()) throw NotFoundError("document " + doc_id + " has no cell " + column_id);

  static const SystemClock system_clock;
  const Clock& clock = clock_ != nullptr ? *clock_ : system_clock;
  const auto events = review_events(doc_id);
  const ReviewEvent ev = apply_action(*it, action, static_cast<std::int64_t>(events.size()) + 1, iso8601(clock.now()));

  std::ofstream out(dir / "reviews.jsonl", std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append review log for " + doc_id);
  out << to_json(ev).dump() << '\n';
  out.flush();
  if (!out) throw std::runtime_error("review log write failed for " + doc_id);
  return *it;
}

std::vector<json> supervision_records(const std::vector<CellRecord>& table) {
  using reconciler::Label;
  std::vector<json> out;
  for (const auto& r : table) {
    const auto& a = r.reconciled.extraction_a;
    const auto& b = r.reconciled.extraction_b;
    json base = {{"doc_id", r.doc_id},
                 {"column_id", r.column_id},
                 {"run_version", r.run_version},
                 {"label", reconciler::to_string(r.reconciled.label)},
                 {"review_status", to_string(r.review_status)},
                 {"candidate_a", a.value},
                 {"candidate_b", b.value},
                 {"reconciled_value", r.reconciled.final_value}};

    if (r.review_status == ReviewStatus::kHumanCorrected) {
      const std::string target = r.effective_value();
      json negatives = json::array();
      for (const auto* cand : {&a, &b}) {
        if (reconciler::same_value(cand->value, target)) continue;
        bool dup = false;
        for (const auto& n : negatives) dup = dup || reconciler::same_value(n.get<std::string>(), cand->value);
        if (!dup) negatives.push_back(cand->value);
      }
      json rec = base;
      rec["kind"] = "supervision";
      rec["target"] = target;
      rec["negatives"] = negatives;
      rec["note"] = opt(r.reviewer_note);
      out.push_back(std::move(rec));
      continue;
    }

    auto preference = [&](bool a_wins, const char* source) {
      json rec = base;
      rec["kind"] = "preference";
      rec["chosen"] = a_wins ? "agent_a" : "agent_b";
      rec["rejected"] = a_wins ? "agent_b" : "agent_a";
      rec["chosen_value"] = a_wins ? a.value : b.value;
      rec["rejected_value"] = a_wins ? b.value : a.value;
      rec["source"] = source;
      out.push_back(std::move(rec));
    };
    const bool differ = !reconciler::same_value(a.value, b.value);
    if (r.review_status == ReviewStatus::kAcceptedA && differ) {
      preference(true, "reviewer");
    } else if (r.review_status == ReviewStatus::kAcceptedB && differ) {
      preference(false, "reviewer");
    } else if (r.reconciled.label == Label::kACorrectBWrong) {
      preference(true, "reconciler");
    } else if (r.reconciled.label == Label::kBCorrectAWrong) {
      preference(false, "reconciler");
    }
  }
  return out;
}

std::vector<json> Store::export_supervision(const std::vector<std::string>& doc_ids) const {
  std::vector<std::string> ids = doc_ids.empty() ? list_documents() : doc_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::vector<json> out;
  for (const auto& id : ids) {
    auto recs = supervision_records(load_table(id));
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

}  // namespace evisearch::store

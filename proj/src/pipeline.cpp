// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/pipeline.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/prompts.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace evisearch::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kEviSearch: return "evisearch";
    case Mode::kAgentAOnly: return "agent_a_only";
    case Mode::kParsedSingle: return "parsed_single";
  }
  return "evisearch";
}

Mode parse_mode(std::string_view s) {
  if (s == "evisearch") return Mode::kEviSearch;
  if (s == "agent_a_only") return Mode::kAgentAOnly;
  if (s == "parsed_single") return Mode::kParsedSingle;
  throw ParseError("unknown mode '" + std::string(s) + "' (expected evisearch, agent_a_only or parsed_single)");
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Runs fn(0..n-1) on at most `workers` threads; rethrows the first exception.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t count = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (count == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < count; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {"schema",     "documents", "output_dir",  "mode",       "backend",
                                             "backends",   "batch_limit", "k",        "max_turns",  "retry_limit",
                                             "max_in_flight", "tolerances", "fixed_time"};
  return keys;
}

reconciler::ReconciledCell single_agent_cell(const agents::Extraction& a) {
  reconciler::ReconciledCell cell;
  cell.column_id = a.column_id;
  cell.final_value = a.value;
  cell.label = reconciler::Label::kBothCorrect;
  cell.pass = reconciler::Pass::kPass1;
  cell.attribution = a.attribution;
  cell.extraction_a = a;
  cell.extraction_b = a;
  cell.reconciler_reasoning = "Single-agent run; value taken from the extraction without reconciliation.";
  return cell;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  std::vector<std::string> unknown;
  for (const auto& [k, v] : j.items())
    if (!config_keys().contains(k)) unknown.push_back(k);
  if (!unknown.empty()) throw ValidationError("unknown config keys", unknown);

  PipelineConfig c;
  try {
    if (j.contains("schema")) c.schema_path = resolve(base_dir, j.at("schema").get<std::string>());
    if (j.contains("documents"))
      for (const auto& d : j.at("documents")) c.documents.push_back(resolve(base_dir, d.get<std::string>()));
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    c.batch_limit = j.value("batch_limit", c.batch_limit);
    c.top_k = j.value("k", c.top_k);
    c.max_turns = j.value("max_turns", c.max_turns);
    c.retry_limit = j.value("retry_limit", c.retry_limit);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    if (j.contains("tolerances")) {
      const auto& t = j.at("tolerances");
      c.tolerance.rel_tol = t.value("rel_tol", c.tolerance.rel_tol);
      c.tolerance.abs_tol = t.value("abs_tol", c.tolerance.abs_tol);
    }
    if (j.contains("fixed_time") && !j.at("fixed_time").is_null()) c.fixed_time = j.at("fixed_time").get<std::string>();

    // Backend-level retry_limit / max_in_flight default to the top-level values.
    live::BackendConfig defaults;
    defaults.retry_limit = c.retry_limit;
    defaults.max_in_flight = c.max_in_flight;
    const std::string shorthand = j.value("backend", std::string("mock"));
    c.extraction = defaults;
    c.extraction.name = shorthand;
    c.reconciliation = c.extraction;
    if (j.contains("backends")) {
      const auto& b = j.at("backends");
      if (b.contains("extraction")) c.extraction = live::backend_config_from_json(b.at("extraction"), c.extraction);
      if (b.contains("reconciliation"))
        c.reconciliation = live::backend_config_from_json(b.at("reconciliation"), c.reconciliation);
      if (b.contains("judge") && !b.at("judge").is_null()) c.judge = live::backend_config_from_json(b.at("judge"), defaults);
      if (b.contains("embedder")) {
        live::BackendConfig e = defaults;
        e.name = "hash";
        c.embedder = live::backend_config_from_json(b.at("embedder"), e);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config_file(const fs::path& path) {
  return config_from_json(read_json_file(path), path.parent_path());
}

json to_json(const PipelineConfig& c) {
  json docs = json::array();
  for (const auto& d : c.documents) docs.push_back(d.string());
  return {{"schema", c.schema_path.string()},
          {"documents", docs},
          {"output_dir", c.output_dir.string()},
          {"mode", to_string(c.mode)},
          {"backends",
           {{"extraction", live::to_json(c.extraction)},
            {"reconciliation", live::to_json(c.reconciliation)},
            {"judge", c.judge ? live::to_json(*c.judge) : json(nullptr)},
            {"embedder", live::to_json(c.embedder)}}},
          {"batch_limit", c.batch_limit},
          {"k", c.top_k},
          {"max_turns", c.max_turns},
          {"retry_limit", c.retry_limit},
          {"max_in_flight", c.max_in_flight},
          {"tolerances", {{"rel_tol", c.tolerance.rel_tol}, {"abs_tol", c.tolerance.abs_tol}}},
          {"fixed_time", c.fixed_time ? json(*c.fixed_time) : json(nullptr)}};
}

void validate_config(const PipelineConfig& c) {
  std::vector<std::string> problems;
  if (c.schema_path.empty()) problems.push_back("schema path is required");
  else if (!fs::is_regular_file(c.schema_path)) problems.push_back("schema file not found: " + c.schema_path.string());
  if (c.documents.empty()) problems.push_back("at least one document is required");
  for (const auto& d : c.documents)
    if (!fs::is_regular_file(d)) problems.push_back("document not found: " + d.string());
  if (c.output_dir.empty()) problems.push_back("output_dir is required");
  if (c.batch_limit < 1 || c.batch_limit > 100) problems.push_back("batch_limit must be within 1..100");
  if (c.top_k < 1 || c.top_k > 50) problems.push_back("k must be within 1..50");
  if (c.max_turns < 1 || c.max_turns > 100) problems.push_back("max_turns must be within 1..100");
  if (c.retry_limit < 0 || c.retry_limit > 10) problems.push_back("retry_limit must be within 0..10");
  if (c.max_in_flight < 1 || c.max_in_flight > 64) problems.push_back("max_in_flight must be within 1..64");
  if (!(c.tolerance.rel_tol >= 0.0) || !(c.tolerance.abs_tol >= 0.0)) problems.push_back("tolerances must be >= 0");
  if (c.fixed_time) {
    try {
      parse_iso8601(*c.fixed_time);
    } catch (const ParseError& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) throw ValidationError("invalid configuration", problems);
}

docmodel::ParsedDocument load_any_document(const fs::path& path) {
  const json j = read_json_file(path);
  if (j.is_object() && j.contains("doc_id")) return docmodel::load_document(j);
  const std::string stem = path.stem().string();
  return docmodel::adapt_vendor_document(j, stem, j.value("title", stem));
}

json RunSettings::to_json() const {
  return {{"mode", pipeline::to_string(mode)},
          {"batch_limit", batch_limit},
          {"k", top_k},
          {"max_turns", max_turns},
          {"retry_limit", retry_limit},
          {"max_in_flight", max_in_flight}};
}

json DocumentRun::extractions_json() const {
  json a = json::array(), b = json::array();
  for (const auto& e : extractions_a) a.push_back(agents::to_json(e));
  for (const auto& e : extractions_b) b.push_back(agents::to_json(e));
  return {{"doc_id", doc_id},
          {"agent_a", a},
          {"agent_b", b},
          {"agent_b_session", {{"transmitted_pages", agent_b_transmissions}, {"transmitted_chars", agent_b_transmitted_chars}}},
          {"pass2_invocations", pass2_invocations}};
}

DocumentRun run_document(const docmodel::ParsedDocument& doc, const schema::Schema& schema, const RunSettings& settings,
                         Backends& backends, const Clock& clock) {
  DocumentRun run;
  run.doc_id = doc.doc_id;
  run.batches = schema::pack_batches(schema, settings.batch_limit);
  const std::string started = iso8601(clock.now());
  const std::size_t n = run.batches.size();

  agents::AgentOptions opts;
  opts.retry_limit = settings.retry_limit;
  opts.max_turns = settings.max_turns;
  opts.top_k = settings.top_k;
  opts.clock = &clock;
  if (settings.mode == Mode::kParsedSingle) opts.system_prompt = std::string(prompts::get(prompts::PromptId::kParsedSingle));

  std::vector<std::vector<agents::Extraction>> per_a(n), per_b(n);
  const bool dual = settings.mode == Mode::kEviSearch;

  if (dual) {
    const retrieval::DocumentIndex index = retrieval::build_index(doc, backends.embedder);
    agents::AgentBSession session(doc.doc_id);
    std::exception_ptr b_error;
    std::thread agent_b([&] {
      try {
        for (std::size_t i = 0; i < n; ++i)
          per_b[i] = agents::run_agent_b(doc, index, run.batches[i], backends.extraction, backends.embedder, session,
                                         run.ledger, opts);
      } catch (...) {
        b_error = std::current_exception();
      }
    });
    try {
      parallel_for(n, std::max(1, settings.max_in_flight - 1), [&](std::size_t i) {
        per_a[i] = agents::run_agent_a(doc, run.batches[i], backends.extraction, run.ledger, opts);
      });
    } catch (...) {
      agent_b.join();
      throw;
    }
    agent_b.join();
    if (b_error) std::rethrow_exception(b_error);
    run.agent_b_transmissions = session.cache.transmissions();
    run.agent_b_transmitted_chars = session.cache.transmitted_chars();
  } else {
    parallel_for(n, settings.max_in_flight, [&](std::size_t i) {
      per_a[i] = agents::run_agent_a(doc, run.batches[i], backends.extraction, run.ledger, opts);
    });
  }

  std::vector<std::vector<reconciler::ReconciledCell>> per_cells(n);
  if (dual) {
    parallel_for(n, settings.max_in_flight, [&](std::size_t i) {
      reconciler::ReconcileOptions ro;
      ro.retry_limit = settings.retry_limit;
      ro.max_turns = settings.max_turns;
      ro.batch_id = static_cast<int>(run.batches[i].batch_id);
      ro.clock = &clock;
      ro.batch = &run.batches[i];
      per_cells[i] = reconciler::reconcile_batch(per_a[i], per_b[i], doc, backends.reconciliation, run.ledger, ro);
    });
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& a : per_a[i]) per_cells[i].push_back(single_agent_cell(a));
  }

  std::map<std::string, reconciler::ReconciledCell> by_id;
  std::map<std::string, agents::Extraction> a_by_id, b_by_id;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& c : per_cells[i]) by_id.emplace(c.column_id, std::move(c));
    for (auto& e : per_a[i]) a_by_id.emplace(e.column_id, std::move(e));
    for (auto& e : per_b[i]) b_by_id.emplace(e.column_id, std::move(e));
  }
  for (const auto& col : schema.columns) {
    run.cells.push_back(by_id.at(col.id));
    run.extractions_a.push_back(a_by_id.at(col.id));
    if (dual) run.extractions_b.push_back(b_by_id.at(col.id));
  }

  std::set<int> reconciled_batches;
  for (const auto& r : run.ledger.records())
    if (r.agent == backend::AgentRole::kReconciler) reconciled_batches.insert(r.batch_id);
  run.pass2_invocations = reconciled_batches.size();

  store::RunManifest& m = run.manifest;
  m.doc_id = doc.doc_id;
  m.schema_name = schema.name;
  m.schema_version = schema.version;
  m.mode = std::string(to_string(settings.mode));
  m.extraction_backend = backends.extraction.name();
  if (dual) {
    m.reconciliation_backend = backends.reconciliation.name();
    m.embedder = backends.embedder.name();
  }
  m.prompt_version = std::string(prompts::version());
  for (const auto& b : run.batches) m.batches.push_back(schema::to_json(b));
  m.started_at = started;
  m.completed_at = iso8601(clock.now());
  m.ledger_totals = backend::ledger_report(run.ledger).total;
  m.page_images_available = !doc.page_images.empty();
  m.markdown_fallback_agent_a = !backends.extraction.native_documents();
  m.settings = settings.to_json();
  return run;
}

int ExtractSummary::exit_code() const {
  return std::all_of(documents.begin(), documents.end(), [](const DocumentOutcome& d) { return d.ok; }) ? 0 : 1;
}

ExtractSummary cmd_extract(const PipelineConfig& config) {
  validate_config(config);
  const schema::Schema schema = schema::load_schema_file(config.schema_path);
  auto extraction = live::make_backend(config.extraction);
  auto reconciliation = live::make_backend(config.reconciliation);
  auto embedder = live::make_embedder(config.embedder);

  SystemClock system_clock;
  std::optional<FixedClock> fixed;
  if (config.fixed_time) fixed.emplace(parse_iso8601(*config.fixed_time));
  const Clock& clock = fixed ? static_cast<const Clock&>(*fixed) : system_clock;

  RunSettings settings;
  settings.mode = config.mode;
  settings.batch_limit = config.batch_limit;
  settings.top_k = config.top_k;
  settings.max_turns = config.max_turns;
  settings.retry_limit = config.extraction.retry_limit;
  settings.max_in_flight = config.max_in_flight;

  fs::create_directories(config.output_dir);
  store::Store st(config.output_dir, &clock);
  Backends backends{*extraction, *reconciliation, *embedder};

  ExtractSummary summary;
  summary.documents.resize(config.documents.size());
  // Documents are independent; a failure is recorded and the others continue.
  parallel_for(config.documents.size(), std::max(1, config.max_in_flight / 2), [&](std::size_t i) {
    DocumentOutcome& out = summary.documents[i];
    out.source = config.documents[i];
    try {
      const docmodel::ParsedDocument doc = load_any_document(out.source);
      out.doc_id = doc.doc_id;
      DocumentRun run = run_document(doc, schema, settings, backends, clock);
      const json extractions = run.extractions_json();
      out.run_version = st.persist_run(doc.doc_id, run.cells, run.manifest, &run.ledger, &doc, &extractions);
      out.totals = run.manifest.ledger_totals;
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  });
  return summary;
}

evaluation::EvalReport cmd_evaluate(const EvaluateOptions& o) {
  fs::path doc_dir = o.run_dir;
  std::optional<int> version;
  if (fs::is_regular_file(o.run_dir / "manifest.json")) {
    doc_dir = o.run_dir.parent_path().parent_path();
    const std::string name = o.run_dir.filename().string();
    try {
      version = std::stoi(name.substr(1));
    } catch (const std::exception&) {
      throw ValidationError("run directory name must look like v0001: " + name);
    }
  }
  if (!fs::is_directory(doc_dir)) throw NotFoundError("run directory not found: " + o.run_dir.string());
  const std::string doc_id = doc_dir.filename().string();
  store::Store st(doc_dir.parent_path());
  const store::StoredRun run = st.load_run(doc_id, version);

  const evaluation::GoldDocument gold = evaluation::load_gold_file(o.gold_path);
  if (gold.doc_id != run.manifest.doc_id)
    throw ValidationError("gold doc_id '" + gold.doc_id + "' does not match run doc_id '" + run.manifest.doc_id + "'");
  const schema::Schema schema = schema::load_schema_file(o.schema_path);

  std::vector<store::ReviewEvent> events;
  for (auto& e : st.review_events(doc_id))
    if (e.run_version == run.version) events.push_back(std::move(e));
  const auto table = store::replay(doc_id, run.version, run.cells, events);

  std::unique_ptr<backend::ModelBackend> judge;
  backend::UsageLedger judge_ledger;
  evaluation::JudgeContext ctx;
  ctx.tolerance = o.tolerance;
  if (o.judge) {
    judge = live::make_backend(*o.judge);
    ctx.backend = judge.get();
    ctx.ledger = &judge_ledger;
    ctx.retry_limit = o.judge->retry_limit;
  }
  evaluation::EvalReport report = evaluation::score_run(table, gold, schema, ctx);

  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    write_text(o.out_dir / "report.json", evaluation::to_json(report).dump(2) + "\n");
    write_text(o.out_dir / "category_table.csv", evaluation::category_table_csv(report, o.method));
    write_text(o.out_dir / "modality_table.csv", evaluation::modality_table_csv(report, o.method));
    write_text(o.out_dir / "verdicts.jsonl", evaluation::verdict_log_jsonl(report));
    if (judge) write_text(o.out_dir / "judge_ledger.csv", backend::ledger_report_csv(backend::ledger_report(judge_ledger)));
  }
  return report;
}

}  // namespace evisearch::pipeline

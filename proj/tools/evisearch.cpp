// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
//
// evisearch extract | evaluate | serve | export-supervision

#include "evisearch/errors.hpp"
#include "evisearch/pipeline.hpp"
#include "evisearch/service.hpp"
#include "evisearch/store.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace evisearch;

namespace {

service::ReviewServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

void print_error(const std::exception& e) {
  std::cerr << "error: " << e.what() << "\n";
  if (const auto* v = dynamic_cast<const ValidationError*>(&e))
    for (const auto& o : v->offenders()) std::cerr << "  - " << o << "\n";
}

struct ExtractArgs {
  std::string config;
  std::string schema;
  std::vector<std::string> documents;
  std::string out;
  std::string mode;
  std::string backend;
  std::string fixed_time;
  int batch_limit = 0;
  int k = 0;
  int max_turns = 0;
  int max_in_flight = 0;
  int retry_limit = -1;
};

int run_extract(const ExtractArgs& a) {
  pipeline::PipelineConfig c;
  if (!a.config.empty()) c = pipeline::load_config_file(a.config);
  if (!a.schema.empty()) c.schema_path = a.schema;
  if (!a.documents.empty()) c.documents.assign(a.documents.begin(), a.documents.end());
  if (!a.out.empty()) c.output_dir = a.out;
  if (!a.mode.empty()) c.mode = pipeline::parse_mode(a.mode);
  if (!a.backend.empty()) c.extraction.name = c.reconciliation.name = a.backend;
  if (!a.fixed_time.empty()) c.fixed_time = a.fixed_time;
  if (a.batch_limit > 0) c.batch_limit = static_cast<std::size_t>(a.batch_limit);
  if (a.k > 0) c.top_k = static_cast<std::size_t>(a.k);
  if (a.max_turns > 0) c.max_turns = a.max_turns;
  if (a.max_in_flight > 0) c.max_in_flight = c.extraction.max_in_flight = c.reconciliation.max_in_flight = a.max_in_flight;
  if (a.retry_limit >= 0) c.retry_limit = c.extraction.retry_limit = c.reconciliation.retry_limit = a.retry_limit;

  const auto summary = pipeline::cmd_extract(c);
  std::size_t failed = 0;
  for (const auto& d : summary.documents) {
    if (d.ok) {
      std::printf("ok      %-24s run v%04d  api_calls=%lld  tokens=%lld\n", d.doc_id.c_str(), d.run_version,
                  static_cast<long long>(d.totals.api_calls), static_cast<long long>(d.totals.total_tokens));
    } else {
      ++failed;
      std::printf("FAILED  %s: %s\n", d.source.string().c_str(), d.error.c_str());
    }
  }
  std::printf("%zu document(s), %zu failed; store: %s\n", summary.documents.size(), failed, c.output_dir.string().c_str());
  return summary.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evidence-table extraction with two agents, reconciliation and review"};
  app.require_subcommand(1);

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "Run the extraction pipeline and persist runs to the store");
  extract->add_option("-c,--config", ex.config, "Pipeline config file (JSON)")->check(CLI::ExistingFile);
  extract->add_option("--schema", ex.schema, "Schema file; overrides the config");
  extract->add_option("--doc", ex.documents, "Parsed document file(s); override the config");
  extract->add_option("-o,--out", ex.out, "Store directory; overrides the config");
  extract->add_option("--mode", ex.mode, "evisearch | agent_a_only | parsed_single");
  extract->add_option("--backend", ex.backend, "Backend name for extraction and reconciliation");
  extract->add_option("--fixed-time", ex.fixed_time, "Use one ISO-8601 instant for every timestamp");
  extract->add_option("--batch-limit", ex.batch_limit, "Columns per batch");
  extract->add_option("--k", ex.k, "Search hits per query");
  extract->add_option("--max-turns", ex.max_turns, "Tool-loop turn budget");
  extract->add_option("--max-in-flight", ex.max_in_flight, "Concurrent requests");
  extract->add_option("--retry-limit", ex.retry_limit, "Retries on invalid output");

  pipeline::EvaluateOptions ev;
  std::string ev_run, ev_gold, ev_schema, ev_out, judge_name, judge_model, judge_endpoint, judge_key_env;
  auto* evaluate = app.add_subcommand("evaluate", "Score a stored run against gold annotations");
  evaluate->add_option("--run", ev_run, "Document directory or run directory in the store")->required();
  evaluate->add_option("--gold", ev_gold, "Gold file (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--schema", ev_schema, "Schema file (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-o,--out", ev_out, "Report directory")->required();
  evaluate->add_option("--method", ev.method, "Method name in the report tables");
  evaluate->add_option("--rel-tol", ev.tolerance.rel_tol, "Relative numeric tolerance");
  evaluate->add_option("--abs-tol", ev.tolerance.abs_tol, "Absolute numeric tolerance");
  evaluate->add_option("--judge", judge_name, "Free-text judge backend (token fallback when omitted)");
  evaluate->add_option("--judge-model", judge_model, "Judge model id");
  evaluate->add_option("--judge-endpoint", judge_endpoint, "Judge endpoint URL");
  evaluate->add_option("--judge-key-env", judge_key_env, "Environment variable with the judge API key");

  std::string store_dir, host = "127.0.0.1", cors = "*";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the review API under /api/v1");
  serve->add_option("--store", store_dir, "Store directory")->required()->check(CLI::ExistingDirectory);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--cors-origin", cors, "Allowed origin for the review UI");

  std::string sup_store, sup_out;
  std::vector<std::string> sup_docs;
  auto* sup = app.add_subcommand("export-supervision", "Write preference and supervision records as JSON lines");
  sup->add_option("--store", sup_store, "Store directory")->required()->check(CLI::ExistingDirectory);
  sup->add_option("--doc", sup_docs, "Restrict to these documents");
  sup->add_option("-o,--out", sup_out, "Output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*extract) return run_extract(ex);

    if (*evaluate) {
      ev.run_dir = ev_run;
      ev.gold_path = ev_gold;
      ev.schema_path = ev_schema;
      ev.out_dir = ev_out;
      if (!judge_name.empty()) {
        live::BackendConfig j;
        j.name = judge_name;
        j.model = judge_model;
        j.endpoint = judge_endpoint;
        j.api_key_env = judge_key_env;
        ev.judge = j;
      }
      const auto report = pipeline::cmd_evaluate(ev);
      std::cout << evaluation::category_table_csv(report, ev.method) << "\n"
                << evaluation::modality_table_csv(report, ev.method);
      if (report.unevaluated > 0) std::cerr << "warning: " << report.unevaluated << " cell(s) could not be judged\n";
      return 0;
    }

    if (*serve) {
      store::Store st(store_dir);
      service::ReviewServer server(st, cors);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << store_dir << " on http://" << host << ":" << port << "/api/v1\n";
      const bool clean = server.listen(host, port);
      g_server = nullptr;
      return clean ? 0 : 1;
    }

    if (*sup) {
      store::Store st(sup_store);
      const auto records = st.export_supervision(sup_docs);
      std::ofstream file;
      if (!sup_out.empty()) {
        file.open(sup_out, std::ios::trunc);
        if (!file) throw std::runtime_error("cannot write " + sup_out);
      }
      std::ostream& out = sup_out.empty() ? std::cout : file;
      for (const auto& r : records) out << r.dump() << "\n";
      std::cerr << records.size() << " record(s)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    print_error(e);
    return 2;
  }
  return 0;
}

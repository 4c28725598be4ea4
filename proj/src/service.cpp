// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/service.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/text.hpp"

#include <httplib.h>

#include <fstream>
#include <algorithm>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace evisearch::service {

using nlohmann::json;

namespace {

Response ok(json body) { return {200, std::move(body), {}, "application/json"}; }

Response error(int status, const std::string& message, const std::vector<std::string>& details = {}) {
  json body = {{"error", message}};
  if (!details.empty()) body["details"] = details;
  return {status, std::move(body), {}, "application/json"};
}

// Maps library exceptions onto HTTP statuses.
Response guarded(const std::function<Response()>& fn) {
  try {
    return fn();
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const ValidationError& e) {
    return error(422, e.what(), e.offenders());
  } catch (const ParseError& e) {
    return error(400, e.what());
  } catch (const RangeError& e) {
    return error(404, e.what());
  } catch (const json::exception& e) {
    return error(400, std::string("malformed request: ") + e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

std::optional<int> version_of(const Query& q) {
  auto it = q.find("version");
  if (it == q.end() || it->second.empty()) return std::nullopt;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ParseError("version must be an integer");
  }
}

// The first allowed format is the default.
std::string format_of(const Query& q, const std::vector<std::string>& allowed) {
  auto it = q.find("format");
  const std::string f = it == q.end() || it->second.empty() ? allowed.front() : it->second;
  if (std::find(allowed.begin(), allowed.end(), f) == allowed.end()) throw ParseError("unsupported format '" + f + "'");
  return f;
}

json page_json(const docmodel::PageView& v) {
  return {{"page", v.page}, {"text", v.text}, {"image", v.image ? json(*v.image) : json(nullptr)}, {"chunk_ids", v.chunk_ids}};
}

json candidate(const agents::Extraction& e) {
  return {{"value", e.value},
          {"reasoning", e.reasoning},
          {"attribution", e.attribution ? agents::to_json(*e.attribution) : json(nullptr)},
          {"failed", e.failed}};
}

}  // namespace

json cell_detail(const store::Store& store, const store::CellRecord& r) {
  const auto& c = r.reconciled;
  json detail = store::to_json(r);
  detail["label"] = reconciler::to_string(c.label);
  detail["low_confidence"] = c.low_confidence;
  detail["reconciler_reasoning"] = c.reconciler_reasoning;
  detail["candidates"] = {{"agent_a", candidate(c.extraction_a)}, {"agent_b", candidate(c.extraction_b)}};

  // Pages referenced by the verdict or either candidate, final attribution first.
  std::vector<std::pair<std::string, int>> refs;
  if (c.attribution) refs.emplace_back("final", c.attribution->page);
  if (c.extraction_a.attribution) refs.emplace_back("agent_a", c.extraction_a.attribution->page);
  if (c.extraction_b.attribution) refs.emplace_back("agent_b", c.extraction_b.attribution->page);
  json pages = json::array();
  json evidence = nullptr;
  const auto doc = store.load_document(r.doc_id);
  std::set<int> seen;
  for (const auto& [source, page] : refs) {
    if (!doc || page < 1 || page > doc->n_pages) continue;
    json p = page_json(docmodel::get_page(*doc, page));
    p["source"] = source;
    if (evidence.is_null()) evidence = p;
    if (seen.insert(page).second) pages.push_back(std::move(p));
  }
  detail["evidence"] = evidence;
  detail["pages"] = pages;
  return detail;
}

Response ReviewApi::list_documents() const {
  return guarded([&] {
    json docs = json::array();
    for (const auto& id : store_.list_documents()) {
      const auto versions = store_.run_versions(id);
      if (versions.empty()) continue;
      const auto table = store_.load_table(id);
      std::size_t flagged = 0, reviewed = 0;
      for (const auto& r : table) {
        flagged += r.reconciled.low_confidence ? 1 : 0;
        reviewed += r.review_status != store::ReviewStatus::kUnreviewed ? 1 : 0;
      }
      docs.push_back({{"doc_id", id},
                      {"run_versions", versions},
                      {"latest_run", versions.back()},
                      {"cells", table.size()},
                      {"low_confidence", flagged},
                      {"reviewed", reviewed}});
    }
    return ok({{"documents", docs}});
  });
}

Response ReviewApi::get_table(const std::string& doc_id) const {
  return guarded([&] {
    const auto run = store_.load_run(doc_id);
    json cells = json::array();
    std::size_t flagged = 0;
    for (const auto& r : store_.load_table(doc_id)) {
      flagged += r.reconciled.low_confidence ? 1 : 0;
      cells.push_back(store::to_json(r));
    }
    return ok({{"doc_id", doc_id},
               {"run_version", run.version},
               {"batches", run.manifest.batches},
               {"low_confidence", flagged},
               {"cells", cells}});
  });
}

Response ReviewApi::get_cell(const std::string& doc_id, const std::string& column_id) const {
  return guarded([&] { return ok(cell_detail(store_, store_.load_cell(doc_id, column_id))); });
}

Response ReviewApi::post_review(const std::string& doc_id, const std::string& column_id, const std::string& body) {
  return guarded([&] {
    const json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("request body must be a JSON object");
    store::ReviewAction action;
    action.kind = store::parse_action_kind(j.at("action").get<std::string>());
    if (j.contains("value") && !j.at("value").is_null()) action.value = j.at("value").get<std::string>();
    if (j.contains("note") && !j.at("note").is_null()) action.note = j.at("note").get<std::string>();
    if (action.kind == store::ReviewAction::Kind::kCorrect && text::normalize_whitespace(action.value).empty())
      throw ValidationError("a correction needs a non-empty value", {column_id});
    return ok(cell_detail(store_, store_.apply_review(doc_id, column_id, action)));
  });
}

Response ReviewApi::get_page(const std::string& doc_id, int page) const {
  return guarded([&] {
    const auto doc = store_.load_document(doc_id);
    if (!doc) throw NotFoundError("no parsed document stored for " + doc_id);
    return ok(page_json(docmodel::get_page(*doc, page)));
  });
}

Response ReviewApi::get_page_image(const std::string& doc_id, int page) const {
  return guarded([&] {
    const auto doc = store_.load_document(doc_id);
    if (!doc) throw NotFoundError("no parsed document stored for " + doc_id);
    auto it = doc->page_images.find(page);
    if (it == doc->page_images.end()) throw NotFoundError("page " + std::to_string(page) + " has no image");
    std::ifstream in(it->second, std::ios::binary);
    if (!in) throw NotFoundError("page image file missing: " + it->second);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string& path = it->second;
    const bool jpeg = path.size() > 4 && (path.ends_with(".jpg") || path.ends_with(".jpeg"));
    Response r;
    r.text = buf.str();
    r.content_type = jpeg ? "image/jpeg" : "image/png";
    return r;
  });
}

Response ReviewApi::get_manifest(const std::string& doc_id, const Query& query) const {
  return guarded([&] { return ok(store::to_json(store_.load_run(doc_id, version_of(query)).manifest)); });
}

Response ReviewApi::get_ledger(const std::string& doc_id, const Query& query) const {
  return guarded([&] {
    const std::string format = format_of(query, {"json", "csv"});
    const auto ledger = store_.load_ledger(doc_id, version_of(query));
    if (!ledger) throw NotFoundError("no ledger stored for " + doc_id);
    const auto report = backend::ledger_report(*ledger);
    if (format == "csv") {
      Response r;
      r.text = backend::ledger_report_csv(report);
      r.content_type = "text/csv";
      return r;
    }
    return ok({{"doc_id", doc_id}, {"report", backend::to_json(report)}, {"records", backend::ledger_to_json(*ledger)}});
  });
}

Response ReviewApi::get_supervision(const Query& query) const {
  return guarded([&] {
    const std::string format = format_of(query, {"json", "jsonl"});
    std::vector<std::string> ids;
    if (auto it = query.find("doc_id"); it != query.end()) {
      std::stringstream ss(it->second);
      for (std::string id; std::getline(ss, id, ',');)
        if (!id.empty()) ids.push_back(id);
    }
    const auto records = store_.export_supervision(ids);
    if (format == "jsonl") {
      Response r;
      for (const auto& rec : records) r.text += rec.dump() + "\n";
      r.content_type = "application/x-ndjson";
      return r;
    }
    return ok({{"records", records}});
  });
}

// ---------------------------------------------------------------------------

struct ReviewServer::Impl {
  ReviewApi api;
  std::string origin;
  httplib::Server server;
  std::thread worker;

  Impl(store::Store& store, std::string o) : api(store), origin(std::move(o)) {}

  static Query query_of(const httplib::Request& req) {
    Query q;
    for (const auto& [k, v] : req.params) q[k] = v;
    return q;
  }

  static void send(httplib::Response& res, const Response& r) {
    res.status = r.status;
    if (r.content_type == "application/json")
      res.set_content(r.body.dump(), "application/json");
    else
      res.set_content(r.text, r.content_type.c_str());
  }

  void routes() {
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Max-Age", "600"}});
    server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/api/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok"})", "application/json");
    });
    server.Get("/api/v1/documents",
               [this](const httplib::Request&, httplib::Response& res) { send(res, api.list_documents()); });
    server.Get(R"(/api/v1/documents/([^/]+)/table)", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.get_table(req.matches[1]));
    });
    server.Get(R"(/api/v1/documents/([^/]+)/cells/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.get_cell(req.matches[1], req.matches[2]));
    });
    server.Post(R"(/api/v1/documents/([^/]+)/cells/([^/]+)/review)",
                [this](const httplib::Request& req, httplib::Response& res) {
                  send(res, api.post_review(req.matches[1], req.matches[2], req.body));
                });
    server.Get(R"(/api/v1/documents/([^/]+)/pages/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.get_page(req.matches[1], std::stoi(req.matches[2])));
    });
    server.Get(R"(/api/v1/documents/([^/]+)/pages/(\d+)/image)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 send(res, api.get_page_image(req.matches[1], std::stoi(req.matches[2])));
               });
    server.Get(R"(/api/v1/documents/([^/]+)/manifest)", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.get_manifest(req.matches[1], query_of(req)));
    });
    server.Get(R"(/api/v1/documents/([^/]+)/ledger)", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.get_ledger(req.matches[1], query_of(req)));
    });
    server.Get("/api/v1/supervision", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.get_supervision(query_of(req)));
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) res.set_content(json{{"error", "not found"}}.dump(), "application/json");
    });
  }
};

ReviewServer::ReviewServer(store::Store& store, std::string cors_origin)
    : impl_(std::make_unique<Impl>(store, std::move(cors_origin))) {
  impl_->routes();
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

bool ReviewServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void ReviewServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

}  // namespace evisearch::service

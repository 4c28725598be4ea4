// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Review service. ReviewApi maps requests onto store calls and is usable
// without a network; ReviewServer binds it to HTTP under /api/v1.

#include "evisearch/store.hpp"

#include <nlohmann/json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>

namespace evisearch::service {

struct Response {
  int status = 200;
  nlohmann::json body;
  std::string text;  // non-JSON payloads (csv, jsonl, image bytes)
  std::string content_type = "application/json";
};

using Query = std::map<std::string, std::string>;

class ReviewApi {
 public:
  explicit ReviewApi(store::Store& store) : store_(store) {}

  Response list_documents() const;
  Response get_table(const std::string& doc_id) const;
  /// Both candidates, the verdict with reasoning, the pages they point at, and the review state.
  Response get_cell(const std::string& doc_id, const std::string& column_id) const;
  /// Body: {"action": accept_a|accept_b|accept_reconciled|correct, "value"?: string, "note"?: string}.
  Response post_review(const std::string& doc_id, const std::string& column_id, const std::string& body);
  Response get_page(const std::string& doc_id, int page) const;
  Response get_page_image(const std::string& doc_id, int page) const;
  /// query: version=N
  Response get_manifest(const std::string& doc_id, const Query& query = {}) const;
  /// query: version=N, format=json|csv
  Response get_ledger(const std::string& doc_id, const Query& query = {}) const;
  /// query: doc_id=a,b  format=json|jsonl
  Response get_supervision(const Query& query = {}) const;

 private:
  store::Store& store_;
};

/// Detail payload of one cell (shared by get_cell and post_review).
nlohmann::json cell_detail(const store::Store& store, const store::CellRecord& record);

class ReviewServer {
 public:
  ReviewServer(store::Store& store, std::string cors_origin = "*");
  ~ReviewServer();
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread; returns the port.
  int start(const std::string& host, int port);
  /// Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace evisearch::service

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evisearch::docmodel {

enum class Modality { kText, kTable, kFigure };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);  // throws ParseError

struct BBox {
  double left = 0, top = 0, right = 0, bottom = 0;
  bool operator==(const BBox&) const = default;
};

struct Chunk {
  std::string chunk_id;
  int page = 1;  // 1-based
  Modality modality = Modality::kText;
  std::string content;
  std::optional<BBox> bbox;

  bool operator==(const Chunk&) const = default;
};

struct ParsedDocument {
  std::string doc_id;
  std::string title;
  int n_pages = 1;
  std::vector<Chunk> chunks;                // (page, reading order)
  std::map<int, std::string> page_images;   // page -> image path or handle

  bool has_image(int page) const { return page_images.contains(page); }
  bool operator==(const ParsedDocument&) const = default;
};

struct PageView {
  int page = 1;
  std::string text;
  std::optional<std::string> image;
  std::vector<std::string> chunk_ids;

  bool operator==(const PageView&) const = default;
};

/// {doc_id, title, n_pages, chunks: [{chunk_id, page, modality, content, bbox?}], page_images?: {page: path}}
ParsedDocument load_document(const nlohmann::json& source);
ParsedDocument load_document_text(std::string_view text);
ParsedDocument load_document_file(const std::filesystem::path& path);

nlohmann::json to_json(const ParsedDocument& doc);

/// Converts a parser-native record ({chunks: [{id, type, markdown, grounding: {page, box}}]},
/// zero-based pages) to the native format. Element types other than text-like,
/// table and figure-like ones raise ParseError; nothing is silently dropped.
ParsedDocument adapt_vendor_document(const nlohmann::json& vendor, std::string doc_id, std::string title);

/// Line that prefixes each chunk in a PageView: "[[table:3:c12]]".
std::string chunk_marker(const Chunk& c);

PageView get_page(const ParsedDocument& doc, int page);  // throws RangeError

/// Chunk content as presented to models: HTML tables become pipe tables,
/// figures keep their caption/description text.
std::string render_chunk(const Chunk& c);

inline constexpr std::string_view kPageSeparator = "<!-- page-break -->";

/// Full-document markdown. Each page opens with "<!-- page N -->"; pages are
/// joined by exactly one kPageSeparator line.
std::string render_markdown(const ParsedDocument& doc);

/// Pipe-table helpers. Rows are split on '|', outer pipes optional, the
/// header delimiter row (---) is skipped.
std::string html_table_to_pipe(std::string_view html);
std::vector<std::vector<std::string>> parse_pipe_table(std::string_view text);
bool looks_like_pipe_row(std::string_view line);

}  // namespace evisearch::docmodel

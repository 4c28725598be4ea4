// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/docmodel.hpp"

#include "evisearch/errors.hpp"
#include "evisearch/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace evisearch::docmodel {

using nlohmann::json;

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kText: return "text";
    case Modality::kTable: return "table";
    case Modality::kFigure: return "figure";
  }
  return "text";
}

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::kText;
  if (s == "table") return Modality::kTable;
  if (s == "figure") return Modality::kFigure;
  throw ParseError("unknown modality '" + std::string(s) + "'");
}

namespace {

void validate(const ParsedDocument& doc) {
  if (doc.doc_id.empty()) throw ValidationError("document: empty doc_id");
  if (doc.n_pages < 1) throw ValidationError("document " + doc.doc_id + ": n_pages must be positive");
  std::set<std::string> ids;
  int last_page = 1;
  for (const auto& c : doc.chunks) {
    if (c.page < 1 || c.page > doc.n_pages)
      throw ValidationError("document " + doc.doc_id + ": chunk " + c.chunk_id + " references page " +
                                std::to_string(c.page) + " outside 1.." + std::to_string(doc.n_pages),
                            {c.chunk_id});
    if (c.page < last_page)
      throw ValidationError("document " + doc.doc_id + ": chunk " + c.chunk_id + " is out of page order",
                            {c.chunk_id});
    last_page = c.page;
    if (c.content.empty() && c.modality != Modality::kFigure)
      throw ValidationError("document " + doc.doc_id + ": chunk " + c.chunk_id + " has empty content",
                            {c.chunk_id});
    if (!ids.insert(c.chunk_id).second)
      throw ValidationError("document " + doc.doc_id + ": duplicate chunk id " + c.chunk_id, {c.chunk_id});
  }
  for (const auto& [page, _] : doc.page_images)
    if (page < 1 || page > doc.n_pages)
      throw ValidationError("document " + doc.doc_id + ": page image for page " + std::to_string(page) +
                            " out of range");
}

int require_int(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer())
    throw ParseError(where + ": field '" + key + "' missing or not an integer");
  return it->get<int>();
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw ParseError(where + ": field '" + key + "' missing or not a string");
  return it->get<std::string>();
}

std::string strip_tags(std::string_view s) {
  std::string out;
  bool in_tag = false;
  for (char c : s) {
    if (c == '<') in_tag = true;
    else if (c == '>') in_tag = false;
    else if (!in_tag) out.push_back(c);
  }
  const std::pair<std::string_view, std::string_view> entities[] = {
      {"&nbsp;", " "}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}, {"&amp;", "&"}};
  for (const auto& [from, to] : entities) {
    std::size_t pos = 0;
    while ((pos = out.find(from, pos)) != std::string::npos) {
      out.replace(pos, from.size(), to);
      pos += to.size();
    }
  }
  return text::normalize_whitespace(out);
}

std::string lower_copy(std::string_view s) { return text::to_lower(s); }

}  // namespace

ParsedDocument load_document(const json& source) {
  if (!source.is_object()) throw ParseError("document: top level must be an object");
  ParsedDocument doc;
  doc.doc_id = require_string(source, "doc_id", "document");
  doc.title = source.value("title", std::string{});
  doc.n_pages = require_int(source, "n_pages", "document " + doc.doc_id);
  auto chunks = source.find("chunks");
  if (chunks == source.end() || !chunks->is_array())
    throw ParseError("document " + doc.doc_id + ": 'chunks' missing or not an array");
  for (std::size_t i = 0; i < chunks->size(); ++i) {
    const json& e = (*chunks)[i];
    const std::string where = "document " + doc.doc_id + " chunks[" + std::to_string(i) + "]";
    if (!e.is_object()) throw ParseError(where + ": not an object");
    Chunk c;
    c.chunk_id = require_string(e, "chunk_id", where);
    c.page = require_int(e, "page", where);
    try {
      c.modality = parse_modality(require_string(e, "modality", where));
    } catch (const ParseError& err) {
      throw ParseError(where + ": " + err.what());
    }
    c.content = require_string(e, "content", where);
    if (auto b = e.find("bbox"); b != e.end() && !b->is_null()) {
      if (!b->is_array() || b->size() != 4) throw ParseError(where + ": bbox must be [left, top, right, bottom]");
      c.bbox = BBox{(*b)[0].get<double>(), (*b)[1].get<double>(), (*b)[2].get<double>(), (*b)[3].get<double>()};
    }
    doc.chunks.push_back(std::move(c));
  }
  if (auto imgs = source.find("page_images"); imgs != source.end() && !imgs->is_null()) {
    if (!imgs->is_object()) throw ParseError("document " + doc.doc_id + ": page_images must be an object");
    for (auto it = imgs->begin(); it != imgs->end(); ++it) {
      int page = 0;
      try {
        page = std::stoi(it.key());
      } catch (const std::exception&) {
        throw ParseError("document " + doc.doc_id + ": page_images key '" + it.key() + "' is not a page number");
      }
      doc.page_images[page] = it.value().get<std::string>();
    }
  }
  validate(doc);
  return doc;
}

ParsedDocument load_document_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("document: invalid JSON: ") + e.what());
  }
  return load_document(j);
}

ParsedDocument load_document_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("document file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_document_text(ss.str());
}

json to_json(const ParsedDocument& doc) {
  json chunks = json::array();
  for (const auto& c : doc.chunks) {
    json e = {{"chunk_id", c.chunk_id}, {"page", c.page}, {"modality", to_string(c.modality)}, {"content", c.content}};
    if (c.bbox) e["bbox"] = {c.bbox->left, c.bbox->top, c.bbox->right, c.bbox->bottom};
    chunks.push_back(std::move(e));
  }
  json out = {{"doc_id", doc.doc_id}, {"title", doc.title}, {"n_pages", doc.n_pages}, {"chunks", chunks}};
  if (!doc.page_images.empty()) {
    json imgs = json::object();
    for (const auto& [p, path] : doc.page_images) imgs[std::to_string(p)] = path;
    out["page_images"] = imgs;
  }
  return out;
}

ParsedDocument adapt_vendor_document(const json& vendor, std::string doc_id, std::string title) {
  if (!vendor.is_object() || !vendor.contains("chunks") || !vendor["chunks"].is_array())
    throw ParseError("vendor record: expected an object with a 'chunks' array");
  ParsedDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.title = std::move(title);
  int max_page = 0;
  const auto& chunks = vendor["chunks"];
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const json& e = chunks[i];
    const std::string where = "vendor chunks[" + std::to_string(i) + "]";
    if (!e.is_object()) throw ParseError(where + ": not an object");
    Chunk c;
    c.chunk_id = e.contains("id") ? e["id"].get<std::string>() : "chunk-" + std::to_string(i);
    const std::string type = require_string(e, "type", where);
    if (type == "text" || type == "marginalia" || type == "title" || type == "paragraph") {
      c.modality = Modality::kText;
    } else if (type == "table") {
      c.modality = Modality::kTable;
    } else if (type == "figure" || type == "chart" || type == "logo" || type == "image") {
      c.modality = Modality::kFigure;
    } else {
      throw ParseError(where + ": unsupported element type '" + type + "'");
    }
    c.content = e.value("markdown", e.value("text", std::string{}));
    auto g = e.find("grounding");
    if (g == e.end()) throw ParseError(where + ": missing grounding");
    const json& ground = g->is_array() ? (g->empty() ? json{} : (*g)[0]) : *g;
    if (!ground.is_object() || !ground.contains("page") || !ground["page"].is_number_integer())
      throw ParseError(where + ": grounding.page missing");
    c.page = ground["page"].get<int>() + 1;
    if (auto box = ground.find("box"); box != ground.end() && box->is_object())
      c.bbox = BBox{box->value("left", 0.0), box->value("top", 0.0), box->value("right", 0.0), box->value("bottom", 0.0)};
    max_page = std::max(max_page, c.page);
    doc.chunks.push_back(std::move(c));
  }
  doc.n_pages = max_page;
  if (auto meta = vendor.find("metadata"); meta != vendor.end() && meta->is_object() && meta->contains("page_count"))
    doc.n_pages = std::max(max_page, (*meta)["page_count"].get<int>());
  if (doc.n_pages < 1) throw ParseError("vendor record: no pages");
  std::stable_sort(doc.chunks.begin(), doc.chunks.end(),
                   [](const Chunk& a, const Chunk& b) { return a.page < b.page; });
  validate(doc);
  return doc;
}

std::string chunk_marker(const Chunk& c) {
  return "[[" + std::string(to_string(c.modality)) + ":" + std::to_string(c.page) + ":" + c.chunk_id + "]]";
}

std::string html_table_to_pipe(std::string_view html) {
  const std::string lower = lower_copy(html);
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while ((pos = lower.find("<tr", pos)) != std::string::npos) {
    const std::size_t row_end = std::min(lower.find("</tr>", pos), lower.size());
    std::vector<std::string> row;
    std::size_t cell = pos;
    while (true) {
      const std::size_t td = lower.find("<td", cell);
      const std::size_t th = lower.find("<th", cell);
      const std::size_t open = std::min(td, th);
      if (open == std::string::npos || open >= row_end) break;
      const std::size_t body = lower.find('>', open);
      if (body == std::string::npos) break;
      std::size_t close = std::min(lower.find("</t", body), row_end);
      std::string value = strip_tags(html.substr(body + 1, close - body - 1));
      std::string escaped;
      for (char ch : value) {
        if (ch == '|') escaped += "\\|";
        else escaped.push_back(ch);
      }
      row.push_back(std::move(escaped));
      cell = close + 1;
    }
    if (!row.empty()) rows.push_back(std::move(row));
    pos = row_end;
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out += "|";
    for (const auto& c : rows[r]) out += " " + c + " |";
    out += "\n";
    if (r == 0) {
      out += "|";
      for (std::size_t k = 0; k < rows[r].size(); ++k) out += " --- |";
      out += "\n";
    }
  }
  if (!out.empty()) out.pop_back();
  return out;
}

bool looks_like_pipe_row(std::string_view line) {
  const std::string t = text::normalize_whitespace(line);
  return t.size() >= 2 && t.front() == '|' && t.back() == '|';
}

std::vector<std::vector<std::string>> parse_pipe_table(std::string_view table) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in{std::string(table)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = text::normalize_whitespace(line);
    if (t.empty() || t.find('|') == std::string::npos) continue;
    if (t.front() == '|') t.erase(0, 1);
    if (!t.empty() && t.back() == '|' && !(t.size() >= 2 && t[t.size() - 2] == '\\')) t.pop_back();
    std::vector<std::string> cells;
    std::string cur;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] == '\\' && i + 1 < t.size() && t[i + 1] == '|') {
        cur.push_back('|');
        ++i;
      } else if (t[i] == '|') {
        cells.push_back(text::normalize_whitespace(cur));
        cur.clear();
      } else {
        cur.push_back(t[i]);
      }
    }
    cells.push_back(text::normalize_whitespace(cur));
    const bool delimiter = std::all_of(cells.begin(), cells.end(), [](const std::string& c) {
      return !c.empty() && c.find_first_not_of("-: ") == std::string::npos;
    });
    if (!delimiter) rows.push_back(std::move(cells));
  }
  return rows;
}

std::string render_chunk(const Chunk& c) {
  if (c.modality == Modality::kTable && lower_copy(c.content).find("<table") != std::string::npos)
    return html_table_to_pipe(c.content);
  return c.content;
}

PageView get_page(const ParsedDocument& doc, int page) {
  if (page < 1 || page > doc.n_pages)
    throw RangeError("page " + std::to_string(page) + " outside 1.." + std::to_string(doc.n_pages) +
                     " of document " + doc.doc_id);
  PageView view;
  view.page = page;
  for (const auto& c : doc.chunks) {
    if (c.page != page) continue;
    if (!view.text.empty()) view.text += "\n";
    view.text += chunk_marker(c) + "\n" + render_chunk(c);
    view.chunk_ids.push_back(c.chunk_id);
  }
  if (auto it = doc.page_images.find(page); it != doc.page_images.end()) view.image = it->second;
  return view;
}

std::string render_markdown(const ParsedDocument& doc) {
  std::string out = "# " + doc.title + "\n";
  for (int p = 1; p <= doc.n_pages; ++p) {
    if (p > 1) out += "\n" + std::string(kPageSeparator) + "\n";
    out += "\n<!-- page " + std::to_string(p) + " -->\n";
    for (const auto& c : doc.chunks) {
      if (c.page != p) continue;
      out += "\n<!-- chunk " + c.chunk_id + " " + std::string(to_string(c.modality)) + " -->\n";
      out += render_chunk(c) + "\n";
    }
  }
  return out;
}

}  // namespace evisearch::docmodel

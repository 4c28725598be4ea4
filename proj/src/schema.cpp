// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/schema.hpp"

#include "evisearch/errors.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace evisearch::schema {

using nlohmann::json;

std::string_view to_string(Category c) {
  return c == Category::kNumerical ? "numerical" : "free_text";
}

Category parse_category(std::string_view s) {
  if (s == "numerical") return Category::kNumerical;
  if (s == "free_text") return Category::kFreeText;
  throw ParseError("unknown column category '" + std::string(s) + "'");
}

const ColumnDef* Schema::find(std::string_view column_id) const {
  for (const auto& c : columns)
    if (c.id == column_id) return &c;
  return nullptr;
}

namespace {

std::string require_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string())
    throw ParseError(where + ": field '" + key + "' missing or not a string");
  return it->get<std::string>();
}

}  // namespace

Schema load_schema(const json& source) {
  if (!source.is_object()) throw ParseError("schema: top level must be an object");
  Schema out;
  out.name = require_string(source, "name", "schema");
  out.version = require_string(source, "version", "schema");
  auto cols = source.find("columns");
  if (cols == source.end() || !cols->is_array()) throw ParseError("schema: 'columns' missing or not an array");

  for (std::size_t i = 0; i < cols->size(); ++i) {
    const json& entry = (*cols)[i];
    std::string where = "columns[" + std::to_string(i) + "]";
    if (!entry.is_object()) throw ParseError(where + ": not an object");
    if (auto id = entry.find("id"); id != entry.end() && id->is_string()) where += " (" + id->get<std::string>() + ")";
    ColumnDef c;
    c.id = require_string(entry, "id", where);
    c.name = require_string(entry, "name", where);
    c.definition = require_string(entry, "definition", where);
    c.group = require_string(entry, "group", where);
    try {
      c.category = parse_category(require_string(entry, "category", where));
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (c.id.empty()) throw ParseError(where + ": empty id");
    if (c.definition.empty()) throw ParseError(where + ": empty definition");
    if (c.group.empty()) throw ParseError(where + ": empty group");
    out.columns.push_back(std::move(c));
  }

  std::set<std::string> seen;
  std::vector<std::string> dups;
  for (const auto& c : out.columns)
    if (!seen.insert(c.id).second) dups.push_back(c.id);
  if (!dups.empty()) {
    std::string msg = "schema: duplicate column ids:";
    for (const auto& d : dups) msg += " " + d;
    throw ValidationError(msg, dups);
  }
  return out;
}

Schema load_schema_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("schema: invalid JSON: ") + e.what());
  }
  return load_schema(j);
}

Schema load_schema_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("schema file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_schema_text(ss.str());
}

json to_json(const ColumnDef& c) {
  return {{"id", c.id},
          {"name", c.name},
          {"definition", c.definition},
          {"category", to_string(c.category)},
          {"group", c.group}};
}

json to_json(const Schema& s) {
  json cols = json::array();
  for (const auto& c : s.columns) cols.push_back(to_json(c));
  return {{"name", s.name}, {"version", s.version}, {"columns", cols}};
}

json to_json(const ColumnBatch& b) {
  json ids = json::array();
  for (const auto& c : b.columns) ids.push_back(c.id);
  return {{"batch_id", b.batch_id}, {"columns", ids}, {"source_groups", b.source_groups}};
}

std::vector<std::pair<std::string, std::vector<ColumnDef>>> grouped_columns(const Schema& schema) {
  std::vector<std::pair<std::string, std::vector<ColumnDef>>> groups;
  std::map<std::string, std::size_t> slot;
  for (const auto& c : schema.columns) {
    auto [it, fresh] = slot.try_emplace(c.group, groups.size());
    if (fresh) groups.emplace_back(c.group, std::vector<ColumnDef>{});
    groups[it->second].second.push_back(c);
  }
  return groups;
}

std::vector<ColumnBatch> pack_batches(const Schema& schema, std::size_t batch_limit) {
  if (batch_limit == 0) throw ValidationError("pack_batches: batch_limit must be >= 1");

  std::vector<ColumnBatch> batches;
  ColumnBatch open;
  auto flush = [&] {
    if (open.columns.empty()) return;
    open.batch_id = batches.size();
    batches.push_back(std::move(open));
    open = ColumnBatch{};
  };

  for (auto& [group, cols] : grouped_columns(schema)) {
    if (cols.size() > batch_limit) {
      flush();
      for (std::size_t start = 0; start < cols.size(); start += batch_limit) {
        const std::size_t end = std::min(cols.size(), start + batch_limit);
        open.columns.assign(cols.begin() + static_cast<std::ptrdiff_t>(start),
                            cols.begin() + static_cast<std::ptrdiff_t>(end));
        open.source_groups = {group};
        flush();
      }
      continue;
    }
    if (open.columns.size() + cols.size() > batch_limit) flush();
    open.columns.insert(open.columns.end(), cols.begin(), cols.end());
    open.source_groups.push_back(group);
  }
  flush();
  return batches;
}

}  // namespace evisearch::schema

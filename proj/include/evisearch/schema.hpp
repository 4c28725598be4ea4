// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace evisearch::schema {

enum class Category { kNumerical, kFreeText };

std::string_view to_string(Category c);
Category parse_category(std::string_view s);  // throws ParseError

struct ColumnDef {
  std::string id;
  std::string name;
  std::string definition;  // includes the fallback convention, e.g. "use Not reported if missing"
  Category category = Category::kFreeText;
  std::string group;       // clinical section

  bool operator==(const ColumnDef&) const = default;
};

struct Schema {
  std::string name;
  std::string version;
  std::vector<ColumnDef> columns;  // file order, stable

  const ColumnDef* find(std::string_view column_id) const;
};

inline constexpr std::size_t kDefaultBatchLimit = 15;

struct ColumnBatch {
  std::size_t batch_id = 0;
  std::vector<ColumnDef> columns;
  std::vector<std::string> source_groups;

  bool operator==(const ColumnBatch&) const = default;
};

/// Parses and validates a schema document:
/// {name, version, columns: [{id, name, definition, category, group}]}.
///
/// Malformed entries raise ParseError naming the entry index and id;
/// duplicate ids raise ValidationError with the duplicates as offenders.
/// A group whose columns are not contiguous in the file is still one group:
/// its columns are collected in file order.
Schema load_schema(const nlohmann::json& source);
Schema load_schema_text(std::string_view text);
Schema load_schema_file(const std::filesystem::path& path);

nlohmann::json to_json(const ColumnDef& c);
nlohmann::json to_json(const Schema& s);
nlohmann::json to_json(const ColumnBatch& b);

/// Group-aware packing.
///
/// Groups are taken in order of first appearance. A group larger than
/// batch_limit is emitted as consecutive pure sub-batches of batch_limit
/// (the last one possibly shorter); those sub-batches never absorb other
/// groups. Whole groups that fit are merged greedily into an open batch
/// until the next whole group would overflow it.
std::vector<ColumnBatch> pack_batches(const Schema& schema, std::size_t batch_limit = kDefaultBatchLimit);

/// Column groups in order of first appearance, each with its columns in schema order.
std::vector<std::pair<std::string, std::vector<ColumnDef>>> grouped_columns(const Schema& schema);

}  // namespace evisearch::schema

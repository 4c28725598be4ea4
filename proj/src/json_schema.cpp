// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/json_schema.hpp"

#include <cmath>

namespace evisearch::jsonschema {
namespace {

using nlohmann::json;

bool type_matches(const std::string& type, const json& v) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && std::floor(d) == d;
    }
    return false;
  }
  return false;
}

void check(const json& schema, const json& v, const std::string& path, std::vector<std::string>& errs) {
  if (!schema.is_object()) return;

  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    std::string expected;
    if (it->is_string()) {
      expected = it->get<std::string>();
      ok = type_matches(expected, v);
    } else if (it->is_array()) {
      for (const auto& t : *it) {
        if (!expected.empty()) expected += "|";
        expected += t.get<std::string>();
        ok = ok || type_matches(t.get<std::string>(), v);
      }
    }
    if (!ok) {
      errs.push_back(path + ": expected " + expected + ", got " + v.type_name());
      return;
    }
  }

  if (auto it = schema.find("enum"); it != schema.end() && it->is_array()) {
    bool found = false;
    for (const auto& e : *it) found = found || e == v;
    if (!found) errs.push_back(path + ": value " + v.dump() + " not in enum " + it->dump());
  }

  if (v.is_string()) {
    if (auto it = schema.find("minLength"); it != schema.end() &&
                                           v.get_ref<const std::string&>().size() < it->get<std::size_t>())
      errs.push_back(path + ": string shorter than " + it->dump());
  }

  if (v.is_number()) {
    const double d = v.get<double>();
    if (auto it = schema.find("minimum"); it != schema.end() && d < it->get<double>())
      errs.push_back(path + ": below minimum " + it->dump());
    if (auto it = schema.find("maximum"); it != schema.end() && d > it->get<double>())
      errs.push_back(path + ": above maximum " + it->dump());
  }

  if (v.is_array()) {
    if (auto it = schema.find("minItems"); it != schema.end() && v.size() < it->get<std::size_t>())
      errs.push_back(path + ": fewer than " + it->dump() + " items");
    if (auto it = schema.find("maxItems"); it != schema.end() && v.size() > it->get<std::size_t>())
      errs.push_back(path + ": more than " + it->dump() + " items");
    if (auto it = schema.find("items"); it != schema.end())
      for (std::size_t i = 0; i < v.size(); ++i) check(*it, v[i], path + "[" + std::to_string(i) + "]", errs);
  }

  if (v.is_object()) {
    const json* props = nullptr;
    if (auto it = schema.find("properties"); it != schema.end()) props = &*it;
    if (auto it = schema.find("required"); it != schema.end())
      for (const auto& name : *it)
        if (!v.contains(name.get<std::string>()))
          errs.push_back(path + ": missing required field '" + name.get<std::string>() + "'");
    const auto ap = schema.find("additionalProperties");
    const bool closed = ap != schema.end() && ap->is_boolean() && !ap->get<bool>();
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (props != nullptr && props->contains(it.key())) {
        check((*props)[it.key()], it.value(), path + "." + it.key(), errs);
      } else if (closed) {
        errs.push_back(path + ": unexpected field '" + it.key() + "'");
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate(const nlohmann::json& schema, const nlohmann::json& instance) {
  std::vector<std::string> errs;
  check(schema, instance, "$", errs);
  return errs;
}

}  // namespace evisearch::jsonschema

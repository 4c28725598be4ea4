// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace evisearch::jsonschema {

// Strict subset of JSON Schema used for model outputs and tool arguments:
// type (string or list), properties, required, additionalProperties (bool),
// enum, items, minItems, maxItems, minLength, minimum, maximum.
// Unsupported keywords are ignored.

/// Returns one message per violation ("$.entries[2].page: expected integer").
/// Empty result means the instance conforms.
std::vector<std::string> validate(const nlohmann::json& schema, const nlohmann::json& instance);

inline bool conforms(const nlohmann::json& schema, const nlohmann::json& instance) {
  return validate(schema, instance).empty();
}

}  // namespace evisearch::jsonschema

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace evisearch::prompts {

enum class PromptId { kAgentA, kAgentB, kReconciler, kJudgeNumerical, kJudgeFreeText, kParsedSingle };

/// Templates live in config/prompts/<version>/ and are compiled in.
std::string_view version();
std::string_view get(PromptId id);

}  // namespace evisearch::prompts

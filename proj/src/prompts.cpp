// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/prompts.hpp"

#include "prompts_generated.hpp"

namespace evisearch::prompts {

std::string_view version() { return generated::kVersion; }

std::string_view get(PromptId id) {
  switch (id) {
    case PromptId::kAgentA: return generated::kAgentA;
    case PromptId::kAgentB: return generated::kAgentB;
    case PromptId::kReconciler: return generated::kReconciler;
    case PromptId::kJudgeNumerical: return generated::kJudgeNumerical;
    case PromptId::kJudgeFreeText: return generated::kJudgeFreeText;
    case PromptId::kParsedSingle: return generated::kParsedSingle;
  }
  return {};
}

}  // namespace evisearch::prompts

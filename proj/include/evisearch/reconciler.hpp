// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/agents.hpp"
#include "evisearch/backend.hpp"
#include "evisearch/docmodel.hpp"
#include "evisearch/schema.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace evisearch::reconciler {

using agents::Attribution;
using agents::Extraction;

enum class Label { kBothCorrect, kACorrectBWrong, kBCorrectAWrong, kBothWrong };
enum class Pass { kPass1, kPass2 };

std::string_view to_string(Label l);
Label parse_label(std::string_view s);
std::string_view to_string(Pass p);

struct ReconciledCell {
  std::string column_id;
  std::string final_value;
  Label label = Label::kBothCorrect;
  std::optional<Attribution> attribution;
  std::string reconciler_reasoning;
  Pass pass = Pass::kPass1;
  bool low_confidence = false;
  Extraction extraction_a;
  Extraction extraction_b;
  /// Which Pass-1 rule fired: 'a' dual sentinel, 'b' identical, 'c' superset.
  std::optional<char> pass1_rule;
  /// A value read from the page under both_wrong; never promoted to final_value.
  std::optional<std::string> corrected_value;
  bool verified_without_image = false;
  int forced_tool_rejections = 0;

  bool operator==(const ReconciledCell&) const = default;
};

/// Invariant violations of a cell (empty when valid).
std::vector<std::string> check_cell(const ReconciledCell& cell);

nlohmann::json to_json(const ReconciledCell& c);
ReconciledCell cell_from_json(const nlohmann::json& j);

/// True iff `wider` strictly contains `narrower`: narrower's token multiset is a
/// proper sub-multiset of wider's (numbers compared by value, punctuation ignored).
bool is_strict_superset(std::string_view wider, std::string_view narrower);

/// Identity after whitespace collapsing; case-sensitive.
bool same_value(std::string_view a, std::string_view b);

/// Rule-based agreement; no model calls. Failed extractions never agree.
std::optional<ReconciledCell> pass1_agree(const Extraction& a, const Extraction& b);

struct Conflict {
  Extraction a;
  Extraction b;
  std::set<int> disputed_pages;  // union of attributed pages
};

struct ReconcileOptions {
  int retry_limit = backend::kDefaultRetryLimit;
  int max_turns = agents::kDefaultMaxTurns;
  int batch_id = -1;
  const Clock* clock = nullptr;
  /// Column definitions shown to the verifier, when available.
  const schema::ColumnBatch* batch = nullptr;
};

std::vector<backend::ToolSpec> reconciler_tools();

/// One verification loop over all conflicts of a batch. A submission is
/// rejected until every conflict has had at least one disputed page fetched
/// with get_page. Conflicts with no attributed page at all resolve to
/// both_wrong without a model call.
std::vector<ReconciledCell> pass2_verify(const std::vector<Conflict>& conflicts, const docmodel::ParsedDocument& doc,
                                         backend::ModelBackend& model, backend::UsageLedger& ledger,
                                         const ReconcileOptions& options = {});

/// Single-column convenience wrapper over the batched form.
ReconciledCell pass2_verify(const Extraction& a, const Extraction& b, const docmodel::ParsedDocument& doc,
                            backend::ModelBackend& model, backend::UsageLedger& ledger,
                            const ReconcileOptions& options = {});

/// Two-pass protocol over one batch; output follows the order of `extractions_a`.
std::vector<ReconciledCell> reconcile_batch(const std::vector<Extraction>& extractions_a,
                                            const std::vector<Extraction>& extractions_b,
                                            const docmodel::ParsedDocument& doc, backend::ModelBackend& model,
                                            backend::UsageLedger& ledger, const ReconcileOptions& options = {});

}  // namespace evisearch::reconciler

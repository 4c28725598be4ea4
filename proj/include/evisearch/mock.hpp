// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Offline backends: a deterministic heuristic reader ("mock"), a scripted
// backend for tests, and a fault-injecting wrapper.

#include "evisearch/backend.hpp"
#include "evisearch/docmodel.hpp"

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace evisearch::mock {

/// A "label: value" line or a two-column table row found in rendered content.
struct EvidenceLine {
  int page = 1;
  docmodel::Modality modality = docmodel::Modality::kText;
  std::string chunk_id;
  std::string label;
  std::string value;
  std::string line;
};

/// Reads the full-document markdown produced by render_markdown.
std::vector<EvidenceLine> evidence_from_markdown(std::string_view markdown);
/// Reads PageView text (chunks prefixed by "[[modality:page:id]]" markers).
std::vector<EvidenceLine> evidence_from_page_text(std::string_view text);

/// Lowercase content words of a column name.
std::vector<std::string> column_keywords(std::string_view name);

struct LabelScore {
  double recall = 0.0;     // share of keywords present in the label
  double precision = 0.0;  // share of label words that are keywords
};
LabelScore score_label(const std::vector<std::string>& keywords, std::string_view label);

/// Deterministic stand-in for a model. Agent A takes the first fully matching
/// line in reading order (figures included) and quotes it; Agent B searches,
/// keeps the most specific non-figure line and drops trailing parentheticals
/// from numeric values; the reconciler views every disputed page and keeps
/// the candidates the page supports. Token counts are whitespace counts.
class HeuristicBackend : public backend::ModelBackend {
 public:
  explicit HeuristicBackend(int max_searches_per_batch = 6) : max_searches_(max_searches_per_batch) {}
  backend::RawResponse complete(const backend::ModelRequest& request) override;
  std::string name() const override { return "mock"; }

 private:
  int max_searches_;
};

struct ScriptStep {
  enum class Kind { kOutput, kToolCall, kTransportError };
  Kind kind = Kind::kOutput;
  std::string tool;  // for kToolCall
  std::string text;  // structured output or tool arguments
  std::int64_t input_tokens = 10;
  std::int64_t output_tokens = 5;

  static ScriptStep output(std::string text, std::int64_t in = 10, std::int64_t out = 5);
  static ScriptStep tool_call(std::string tool, std::string args, std::int64_t in = 10, std::int64_t out = 5);
  static ScriptStep transport_error();
};

/// Replays a queue of responses and records every request it receives. When
/// the queue is empty it defers to `fallback`, or throws std::logic_error.
class ScriptedBackend : public backend::ModelBackend {
 public:
  explicit ScriptedBackend(backend::ModelBackend* fallback = nullptr) : fallback_(fallback) {}
  void push(ScriptStep step);
  backend::RawResponse complete(const backend::ModelRequest& request) override;
  std::string name() const override { return "scripted"; }

  std::vector<backend::ModelRequest> requests() const;
  std::size_t remaining() const;

 private:
  backend::ModelBackend* fallback_;
  mutable std::mutex mu_;
  std::deque<ScriptStep> script_;
  std::vector<backend::ModelRequest> requests_;
};

enum class Fault { kNone, kMalformed, kTransport };

/// Wraps a backend, counts calls per agent and corrupts the calls selected by
/// `policy` (called with the request and the zero-based global call index).
class FaultInjectingBackend : public backend::ModelBackend {
 public:
  using Policy = std::function<Fault(const backend::ModelRequest&, std::size_t)>;

  FaultInjectingBackend(backend::ModelBackend& inner, Policy policy) : inner_(inner), policy_(std::move(policy)) {}
  backend::RawResponse complete(const backend::ModelRequest& request) override;
  std::string name() const override { return inner_.name(); }
  bool native_documents() const override { return inner_.native_documents(); }

  std::map<backend::AgentRole, std::size_t> calls() const;
  std::size_t faults() const;

 private:
  backend::ModelBackend& inner_;
  Policy policy_;
  mutable std::mutex mu_;
  std::size_t next_ = 0;
  std::size_t faults_ = 0;
  std::map<backend::AgentRole, std::size_t> calls_;
};

}  // namespace evisearch::mock

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared helpers for the unit and acceptance suites. The oracles here are
// written independently of the library code they check.

#include "evisearch/agents.hpp"
#include "evisearch/docmodel.hpp"
#include "evisearch/evaluation.hpp"
#include "evisearch/reconciler.hpp"
#include "evisearch/retrieval.hpp"
#include "evisearch/schema.hpp"
#include "evisearch/store.hpp"
#include "evisearch/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef EVISEARCH_TEST_FIXTURES
#error "EVISEARCH_TEST_FIXTURES must point at tests/fixtures"
#endif

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& name) { return fs::path(EVISEARCH_TEST_FIXTURES) / name; }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("evisearch-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline evisearch::agents::Extraction extraction(const std::string& column, const std::string& value, int page,
                                                evisearch::docmodel::Modality modality,
                                                evisearch::agents::AgentId agent = evisearch::agents::AgentId::kAgentA) {
  evisearch::agents::Extraction e;
  e.column_id = column;
  e.value = value;
  e.reasoning = "fixture";
  e.agent = agent;
  if (page > 0) e.attribution = evisearch::agents::Attribution{page, modality, std::nullopt};
  return e;
}

inline evisearch::schema::ColumnDef column(const std::string& id, const std::string& group,
                                           evisearch::schema::Category cat = evisearch::schema::Category::kFreeText) {
  return {id, id, "definition of " + id + "; use Not reported if missing", cat, group};
}

/// A valid reconciled cell. Pass 1 both_correct unless a Pass-2 label is given.
inline evisearch::reconciler::ReconciledCell cell(const std::string& column, const std::string& a_value,
                                                  const std::string& b_value,
                                                  evisearch::reconciler::Label label =
                                                      evisearch::reconciler::Label::kBothCorrect,
                                                  int page = 1) {
  using namespace evisearch;
  reconciler::ReconciledCell c;
  c.column_id = column;
  c.label = label;
  c.extraction_a = extraction(column, a_value, text::is_not_reported(a_value) ? 0 : page, docmodel::Modality::kText);
  c.extraction_b = extraction(column, b_value, text::is_not_reported(b_value) ? 0 : page, docmodel::Modality::kText,
                              agents::AgentId::kAgentB);
  c.reconciler_reasoning = "fixture";
  const bool pass2 = label != reconciler::Label::kBothCorrect || !reconciler::same_value(a_value, b_value);
  c.pass = pass2 ? reconciler::Pass::kPass2 : reconciler::Pass::kPass1;
  if (!pass2) c.pass1_rule = text::is_not_reported(a_value) ? 'a' : 'b';
  switch (label) {
    case reconciler::Label::kBothCorrect:
    case reconciler::Label::kACorrectBWrong: c.final_value = a_value; c.attribution = c.extraction_a.attribution; break;
    case reconciler::Label::kBCorrectAWrong: c.final_value = b_value; c.attribution = c.extraction_b.attribution; break;
    case reconciler::Label::kBothWrong:
      c.final_value = std::string(text::kNotReported);
      c.low_confidence = true;
      break;
  }
  return c;
}

struct EvalFixture {
  evisearch::schema::Schema schema;
  evisearch::evaluation::GoldDocument gold;
  std::vector<evisearch::store::CellRecord> records;
};

/// Ten gold-reported cells: nine attempted predictions, eight correct, one
/// abstention. Four cells carry table evidence, three of them correct.
inline EvalFixture ten_cell_fixture() {
  using namespace evisearch;
  struct Row {
    const char* id;
    schema::Category cat;
    docmodel::Modality modality;
    const char* gold;
    const char* pred;
  };
  const auto num = schema::Category::kNumerical;
  const auto ft = schema::Category::kFreeText;
  const std::vector<Row> rows = {
      {"median_os", num, docmodel::Modality::kTable, "14.2", "14.2 months"},
      {"os_hr", num, docmodel::Modality::kTable, "0.62 (0.51-0.76)", "0.62 (95% CI 0.51-0.76)"},
      {"patients", num, docmodel::Modality::kText, "1,150", "1150"},
      {"orr", num, docmodel::Modality::kTable, "62%", "62"},
      {"median_age", num, docmodel::Modality::kTable, "68", "71"},
      {"blinding", ft, docmodel::Modality::kText, "double-blind", "double-blind"},
      {"trial_name", ft, docmodel::Modality::kText, "ARISE-3", "ARISE-3"},
      {"primary_endpoint", ft, docmodel::Modality::kText, "overall survival", "Overall survival"},
      {"design", ft, docmodel::Modality::kText, "open-label", "open-label"},
      {"rpfs_curve", ft, docmodel::Modality::kFigure, "separated at 6 months", "Not reported"},
  };
  EvalFixture f;
  f.schema.name = "ten";
  f.schema.version = "1";
  f.gold.doc_id = "ten-cell";
  for (const auto& r : rows) {
    f.schema.columns.push_back(column(r.id, "g", r.cat));
    f.gold.cells.push_back({r.id, r.gold, agents::Attribution{1, r.modality, std::nullopt}});
    store::CellRecord rec;
    rec.doc_id = "ten-cell";
    rec.column_id = r.id;
    rec.reconciled = cell(r.id, r.pred, r.pred);
    f.records.push_back(std::move(rec));
  }
  return f;
}

struct NumericCase {
  const char* pred;
  const char* gold;
  bool expected;
};

/// Hand-derived outcomes under rel_tol 0.005, abs_tol 1e-9: every gold number
/// needs its own predicted number within max(abs, rel * |gold|).
inline const std::vector<NumericCase>& numeric_cases() {
  static const std::vector<NumericCase> cases = {
      // rounding
      {"14.24", "14.2", true},
      {"14.3", "14.2", false},
      {"0.601", "0.6", true},
      {"0.62", "0.6", false},
      {"100.4", "100", true},
      {"100.6", "100", false},
      {"0.00", "0", true},
      {"1,150", "1150", true},
      {"1150 patients", "1,150", true},
      // CI brackets
      {"0.62 (95% CI 0.51\xe2\x80\x93" "0.76)", "0.62 (0.51-0.76)", true},
      {"0.62", "0.62 (0.51-0.76)", false},
      {"0.62 (0.51-0.77)", "0.62 (0.51-0.76)", false},
      {"HR 0.76 (0.51, 0.62)", "0.62 (0.51-0.76)", true},
      {"HR 0.62; 95% CI, 0.51 to 0.76; P<.001", "0.62 (0.51-0.76)", true},
      // ranges
      {"10-20", "10 to 20", true},
      {"10-21", "10-20", false},
      {"median 68 (range 45-89)", "68 (45-89)", true},
      {"68 (range 45-89)", "68 (45-90)", false},
      {"grade 3-4", "grade 3 or 4", true},
      {"3", "3 and 3", false},
      // percent
      {"62%", "62", true},
      {"62", "62%", true},
      {"0.62", "62%", false},
      {"12 of 20 (60%)", "60%", true},
      // signs and sentinels
      {"-0.5", "0.5", false},
      {"Not reported", "Not reported", true},
      {" not  REPORTED", "Not reported", true},
      {"Not reported", "14.2", false},
      {"14.2", "Not reported", false},
      {"two", "2", false},
  };
  return cases;
}

// ---------------------------------------------------------------------------
// Oracles

/// Expected batch sizes, recomputed from the packing rule: oversized groups
/// split into pure chunks of `limit`; whole groups merge greedily in order.
/// Returns one list of (group, count) runs per batch.
inline std::vector<std::vector<std::pair<std::string, std::size_t>>> packing_oracle(
    const std::vector<std::pair<std::string, std::size_t>>& group_sizes, std::size_t limit) {
  std::vector<std::vector<std::pair<std::string, std::size_t>>> out;
  std::vector<std::pair<std::string, std::size_t>> open;
  std::size_t fill = 0;
  for (const auto& [g, n] : group_sizes) {
    if (n > limit) {
      if (!open.empty()) out.push_back(open);
      open.clear();
      fill = 0;
      for (std::size_t left = n; left > 0;) {
        const std::size_t take = std::min(left, limit);
        out.push_back({{g, take}});
        left -= take;
      }
      continue;
    }
    if (fill + n > limit) {
      out.push_back(open);
      open.clear();
      fill = 0;
    }
    open.emplace_back(g, n);
    fill += n;
  }
  if (!open.empty()) out.push_back(open);
  return out;
}

/// Violations of partition / bound / contiguity / consecutive ids.
inline std::vector<std::string> check_batches(const evisearch::schema::Schema& s,
                                              const std::vector<evisearch::schema::ColumnBatch>& batches,
                                              std::size_t limit) {
  std::vector<std::string> errs;
  std::map<std::string, std::size_t> schema_pos;
  for (std::size_t i = 0; i < s.columns.size(); ++i) schema_pos[s.columns[i].id] = i;
  std::map<std::string, int> seen;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& batch = batches[b];
    if (batch.batch_id != b) errs.push_back("batch ids not consecutive at " + std::to_string(b));
    if (batch.columns.empty() || batch.columns.size() > limit) errs.push_back("batch size out of bounds");
    std::vector<std::string> run_groups;
    std::map<std::string, std::size_t> last_pos;
    for (const auto& c : batch.columns) {
      ++seen[c.id];
      if (run_groups.empty() || run_groups.back() != c.group) {
        if (std::find(run_groups.begin(), run_groups.end(), c.group) != run_groups.end())
          errs.push_back("group " + c.group + " not contiguous in batch " + std::to_string(b));
        run_groups.push_back(c.group);
      }
      auto it = last_pos.find(c.group);
      if (it != last_pos.end() && schema_pos[c.id] < it->second) errs.push_back("group order broken for " + c.id);
      last_pos[c.group] = schema_pos[c.id];
    }
    if (run_groups != batch.source_groups) errs.push_back("source_groups mismatch in batch " + std::to_string(b));
  }
  for (const auto& c : s.columns)
    if (seen[c.id] != 1) errs.push_back("column " + c.id + " appears " + std::to_string(seen[c.id]) + " times");
  if (seen.size() != s.columns.size()) errs.push_back("batches contain columns outside the schema");
  return errs;
}

inline double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  return static_cast<double>(dot / (std::sqrt(na) * std::sqrt(nb)));
}

struct OracleHit {
  int page;
  double score;
};

/// Full sort of every page by (score desc, page asc), truncated to k.
inline std::vector<OracleHit> oracle_rank(const std::vector<std::pair<int, std::vector<double>>>& pages,
                                          const std::vector<double>& q, std::size_t k) {
  std::vector<OracleHit> all;
  for (const auto& [p, v] : pages) all.push_back({p, oracle_cosine(v, q)});
  std::sort(all.begin(), all.end(), [](const OracleHit& x, const OracleHit& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.page < y.page;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// Token-subset oracle for the Pass-1 superset rule: every token of the
/// narrower value is consumed by a distinct token of the wider one (by
/// trying every assignment), and something of the wider one is left over.
inline bool oracle_strict_superset(const std::vector<std::string>& wider, const std::vector<std::string>& narrower) {
  if (narrower.empty() || narrower.size() >= wider.size()) return false;
  std::vector<char> used(wider.size(), 0);
  std::function<bool(std::size_t)> place = [&](std::size_t i) {
    if (i == narrower.size()) return true;
    for (std::size_t j = 0; j < wider.size(); ++j) {
      if (used[j] || wider[j] != narrower[i]) continue;
      used[j] = 1;
      if (place(i + 1)) return true;
      used[j] = 0;
    }
    return false;
  };
  return place(0);
}

/// Brute-force numeric coverage: some injective assignment of gold numbers
/// to predicted numbers keeps every pair within tolerance.
inline bool oracle_numeric_cover(const std::vector<double>& pred, const std::vector<double>& gold, double rel_tol,
                                 double abs_tol) {
  if (gold.empty() || pred.empty() || pred.size() < gold.size()) return false;
  std::vector<std::size_t> perm(pred.size());
  std::iota(perm.begin(), perm.end(), 0);
  do {
    bool ok = true;
    for (std::size_t i = 0; i < gold.size() && ok; ++i)
      ok = std::fabs(pred[perm[i]] - gold[i]) <= std::max(abs_tol, rel_tol * std::fabs(gold[i]));
    if (ok) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

/// Embedder backed by an explicit text -> vector table; unknown texts are errors.
class TableEmbedder final : public evisearch::retrieval::EmbeddingProvider {
 public:
  std::map<std::string, std::vector<double>> table;
  std::size_t calls = 0;
  std::vector<std::size_t> batch_sizes;

  std::vector<evisearch::retrieval::EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    ++calls;
    batch_sizes.push_back(texts.size());
    std::vector<evisearch::retrieval::EmbeddingVector> out;
    for (const auto& t : texts) out.push_back(table.at(t));
    return out;
  }
  std::string name() const override { return "table"; }
};

/// One text chunk per page, content "page <n> <suffix>".
inline evisearch::docmodel::ParsedDocument simple_document(const std::string& doc_id, int pages,
                                                           const std::string& suffix = "") {
  evisearch::docmodel::ParsedDocument d;
  d.doc_id = doc_id;
  d.title = doc_id;
  d.n_pages = pages;
  for (int p = 1; p <= pages; ++p) {
    evisearch::docmodel::Chunk c;
    c.chunk_id = "p" + std::to_string(p) + "-c1";
    c.page = p;
    c.content = "page " + std::to_string(p) + " " + suffix;
    d.chunks.push_back(c);
  }
  return d;
}

}  // namespace testsupport

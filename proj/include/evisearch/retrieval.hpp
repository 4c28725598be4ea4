// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "evisearch/docmodel.hpp"
#include "evisearch/errors.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace evisearch::retrieval {

using EmbeddingVector = std::vector<double>;

/// embed() must preserve input order and return one vector per text.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string name() const = 0;
};

/// Feature-hashing embedder: lowercased word/number tokens are hashed into
/// `dimension` signed buckets and the result is L2-normalized. Stable across
/// runs and platforms; texts sharing vocabulary land close together.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(std::size_t dimension = 256);
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
  std::string name() const override { return "hash"; }
  std::size_t dimension() const { return dimension_; }

 private:
  std::size_t dimension_;
};

/// Provider failure for texts [first, last) of the request being indexed.
class EmbeddingError : public RetryableError {
 public:
  EmbeddingError(const std::string& what, std::size_t first, std::size_t last)
      : RetryableError(what), first_(first), last_(last) {}
  std::size_t first() const noexcept { return first_; }
  std::size_t last() const noexcept { return last_; }

 private:
  std::size_t first_;
  std::size_t last_;
};

inline constexpr std::size_t kEmbeddingBatchSize = 100;
inline constexpr std::size_t kDefaultTopK = 5;
inline constexpr std::size_t kSummaryChars = 160;

struct IndexEntry {
  int page = 1;
  EmbeddingVector vector;
  std::string summary;  // first kSummaryChars of content
  std::string content;  // full PageView text
};

struct DocumentIndex {
  std::string doc_id;
  std::size_t dimension = 0;
  std::vector<IndexEntry> entries;  // ascending page
};

struct SearchHit {
  int page = 1;
  double score = 0.0;
  std::string content;
};

/// dot(a,b) / (|a||b|), clamped to [-1, 1]. Throws ValidationError on
/// dimension mismatch or an all-zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// One entry per page with at least one chunk, embedded from the page's
/// PageView text. Requests go out in batches of at most batch_size texts.
DocumentIndex build_index(const docmodel::ParsedDocument& doc, EmbeddingProvider& embedder,
                          std::size_t batch_size = kEmbeddingBatchSize);

/// Exhaustive scan; min(k, entries) hits by descending score, ascending page on ties.
std::vector<SearchHit> search(const DocumentIndex& index, const std::string& query, EmbeddingProvider& embedder,
                              std::size_t k = kDefaultTopK);

/// Ranking step of search() for a precomputed query vector.
std::vector<SearchHit> rank(const DocumentIndex& index, std::span<const double> query, std::size_t k);

}  // namespace evisearch::retrieval

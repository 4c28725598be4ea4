// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/retrieval.hpp"

#include "evisearch/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace evisearch::retrieval {
namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 1469598103934665603ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

HashEmbedder::HashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ValidationError("HashEmbedder: dimension must be positive");
}

std::vector<EmbeddingVector> HashEmbedder::embed(const std::vector<std::string>& texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    EmbeddingVector v(dimension_, 0.0);
    auto add = [&](std::string_view feature, double weight) {
      const std::uint64_t h = fnv1a(feature);
      const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
      v[h % dimension_] += sign * weight;
    };
    for (const auto& tok : text::tokenize(t))
      add(tok.kind == text::TokenKind::kWord ? text::to_lower(tok.text) : tok.text, 1.0);
    // Whole-text feature keeps punctuation-only texts away from the zero vector.
    if (!t.empty()) add(t, 0.25);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ValidationError("cosine_similarity: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

DocumentIndex build_index(const docmodel::ParsedDocument& doc, EmbeddingProvider& embedder, std::size_t batch_size) {
  if (batch_size == 0) throw ValidationError("build_index: batch_size must be positive");
  DocumentIndex index;
  index.doc_id = doc.doc_id;
  for (int p = 1; p <= doc.n_pages; ++p) {
    auto view = docmodel::get_page(doc, p);
    if (view.chunk_ids.empty()) continue;
    IndexEntry e;
    e.page = p;
    e.summary = view.text.substr(0, kSummaryChars);
    e.content = std::move(view.text);
    index.entries.push_back(std::move(e));
  }
  if (index.entries.empty()) throw ValidationError("build_index: document " + doc.doc_id + " has no content");

  for (std::size_t first = 0; first < index.entries.size(); first += batch_size) {
    const std::size_t last = std::min(index.entries.size(), first + batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = first; i < last; ++i) texts.push_back(index.entries[i].content);
    std::vector<EmbeddingVector> vectors;
    try {
      vectors = embedder.embed(texts);
    } catch (const std::exception& e) {
      throw EmbeddingError("embedding provider '" + embedder.name() + "' failed for pages [" +
                               std::to_string(first) + ", " + std::to_string(last) + "): " + e.what(),
                           first, last);
    }
    if (vectors.size() != texts.size())
      throw EmbeddingError("embedding provider returned " + std::to_string(vectors.size()) + " vectors for " +
                               std::to_string(texts.size()) + " texts",
                           first, last);
    for (std::size_t i = first; i < last; ++i) {
      auto& v = vectors[i - first];
      if (index.dimension == 0) index.dimension = v.size();
      if (v.size() != index.dimension || v.empty())
        throw EmbeddingError("embedding provider returned inconsistent dimensions", first, last);
      if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); }))
        throw EmbeddingError("embedding provider returned non-finite values", first, last);
      index.entries[i].vector = std::move(v);
    }
  }
  return index;
}

std::vector<SearchHit> rank(const DocumentIndex& index, std::span<const double> query, std::size_t k) {
  std::vector<SearchHit> hits;
  hits.reserve(index.entries.size());
  for (const auto& e : index.entries) hits.push_back({e.page, cosine_similarity(query, e.vector), {}});
  std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.page < b.page;
  });
  hits.resize(std::min(k, hits.size()));
  for (auto& h : hits) {
    auto it = std::lower_bound(index.entries.begin(), index.entries.end(), h.page,
                               [](const IndexEntry& e, int page) { return e.page < page; });
    h.content = it->content;
  }
  return hits;
}

std::vector<SearchHit> search(const DocumentIndex& index, const std::string& query, EmbeddingProvider& embedder,
                              std::size_t k) {
  if (index.entries.empty()) throw ValidationError("search: empty index");
  if (k == 0) throw ValidationError("search: k must be positive");
  std::vector<EmbeddingVector> q;
  try {
    q = embedder.embed({query});
  } catch (const std::exception& e) {
    throw RetryableError("embedding provider '" + embedder.name() + "' failed for query: " + e.what());
  }
  if (q.size() != 1) throw RetryableError("embedding provider returned no query vector");
  return rank(index, q.front(), k);
}

}  // namespace evisearch::retrieval

// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "evisearch/docmodel.hpp"
#include "evisearch/errors.hpp"
#include "evisearch/retrieval.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace evisearch;
using namespace evisearch::retrieval;

namespace {

class FailingEmbedder final : public EmbeddingProvider {
 public:
  std::size_t fail_on_call = 1;
  std::size_t calls = 0;
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    if (++calls == fail_on_call) throw std::runtime_error("quota exceeded");
    return std::vector<EmbeddingVector>(texts.size(), EmbeddingVector{1.0, 0.0});
  }
  std::string name() const override { return "failing"; }
};

class ShortEmbedder final : public EmbeddingProvider {
 public:
  std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
    return std::vector<EmbeddingVector>(texts.size() > 1 ? texts.size() - 1 : 0, EmbeddingVector{1.0});
  }
  std::string name() const override { return "short"; }
};

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("cosine examples and errors") {
  const std::vector<double> a{1, 0}, b{0, 1}, c{-2, 0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(cosine_similarity(a, c) == doctest::Approx(-1.0));
  const std::vector<double> zero{0, 0}, three{1, 2, 3};
  CHECK_THROWS_AS(cosine_similarity(a, zero), ValidationError);
  CHECK_THROWS_AS(cosine_similarity(a, three), ValidationError);
}

TEST_CASE("cosine properties on random pairs") {
  std::mt19937 rng(3);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> scale(0.01, 100);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> x(16), y(16);
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng);
    const double s = scale(rng);
    std::vector<double> sx = x;
    for (auto& v : sx) v *= s;
    CHECK(std::fabs(cosine_similarity(x, y) - cosine_similarity(y, x)) <= 1e-12);
    CHECK(std::fabs(cosine_similarity(sx, y) - cosine_similarity(x, y)) <= 1e-9);
    CHECK(std::fabs(cosine_similarity(x, x) - 1.0) <= 1e-9);
    CHECK(std::fabs(cosine_similarity(x, y) - testsupport::oracle_cosine(x, y)) <= 1e-9);
  }
}

TEST_CASE("hash embedder is stable and normalized") {
  HashEmbedder e(32);
  const auto v = e.embed({"Median overall survival 14.2 months", "Median overall survival 14.2 months", "!!"});
  REQUIRE(v.size() == 3);
  CHECK(v[0] == v[1]);
  double norm = 0;
  for (double x : v[0]) norm += x * x;
  CHECK(norm == doctest::Approx(1.0));
  double norm2 = 0;
  for (double x : v[2]) norm2 += x * x;
  CHECK(norm2 == doctest::Approx(1.0));
  CHECK_THROWS_AS(HashEmbedder(0), ValidationError);
  const auto related = e.embed({"overall survival median", "adverse events grade 3"});
  CHECK(cosine_similarity(v[0], related[0]) > cosine_similarity(v[0], related[1]));
}

TEST_CASE("index covers non-empty pages and batches embedding requests") {
  auto doc = testsupport::simple_document("d", 250);
  doc.chunks.erase(doc.chunks.begin() + 9);  // page 10 left empty
  testsupport::TableEmbedder emb;
  for (int p = 1; p <= 250; ++p) emb.table[docmodel::get_page(doc, p).text] = {1.0, static_cast<double>(p)};
  const auto index = build_index(doc, emb);
  CHECK(index.entries.size() == 249);
  CHECK(emb.calls == 3);
  CHECK(emb.batch_sizes == std::vector<std::size_t>{100, 100, 49});
  CHECK(index.dimension == 2);
  CHECK(std::none_of(index.entries.begin(), index.entries.end(), [](const IndexEntry& e) { return e.page == 10; }));
  CHECK(index.entries[0].summary == index.entries[0].content.substr(0, kSummaryChars));
}

TEST_CASE("embedding failures name the affected range") {
  const auto doc = testsupport::simple_document("d", 250);
  FailingEmbedder emb;
  emb.fail_on_call = 2;
  try {
    build_index(doc, emb);
    FAIL("expected EmbeddingError");
  } catch (const EmbeddingError& e) {
    CHECK(e.first() == 100);
    CHECK(e.last() == 200);
  }
  ShortEmbedder shorty;
  CHECK_THROWS_AS(build_index(doc, shorty), EmbeddingError);
  docmodel::ParsedDocument blank = testsupport::simple_document("b", 2);
  blank.chunks.clear();
  HashEmbedder h(8);
  CHECK_THROWS_AS(build_index(blank, h), ValidationError);
}

TEST_CASE("search ranks by score then page") {
  const auto doc = testsupport::simple_document("d", 4);
  testsupport::TableEmbedder emb;
  emb.table[docmodel::get_page(doc, 1).text] = {1, 0};
  emb.table[docmodel::get_page(doc, 2).text] = {0, 1};
  emb.table[docmodel::get_page(doc, 3).text] = {1, 0};
  emb.table[docmodel::get_page(doc, 4).text] = {1, 1};
  emb.table["q"] = {1, 0};
  const auto index = build_index(doc, emb);
  const auto hits = search(index, "q", emb, 3);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].page == 1);
  CHECK(hits[1].page == 3);
  CHECK(hits[2].page == 4);
  CHECK(hits[0].content == docmodel::get_page(doc, 1).text);
  CHECK(search(index, "q", emb, 10).size() == 4);
  CHECK_THROWS_AS(search(index, "q", emb, 0), ValidationError);
  CHECK_THROWS_AS(search(DocumentIndex{}, "q", emb, 1), ValidationError);
  FailingEmbedder fail;
  CHECK_THROWS_AS(search(index, "q", fail, 1), RetryableError);
}

TEST_CASE("search agrees with a brute-force ranking") {
  std::mt19937 rng(21);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int pages = std::uniform_int_distribution<int>(1, 60)(rng);
    const auto doc = testsupport::simple_document("d" + std::to_string(trial), pages);
    testsupport::TableEmbedder emb;
    std::vector<std::pair<int, std::vector<double>>> vectors;
    for (int p = 1; p <= pages; ++p) {
      std::vector<double> v(8);
      if (p > 1 && p % 4 == 0) v = vectors[static_cast<std::size_t>(p) - 2].second;  // exact tie
      else
        for (auto& x : v) x = n(rng);
      vectors.emplace_back(p, v);
      emb.table[docmodel::get_page(doc, p).text] = v;
    }
    std::vector<double> q(8);
    for (auto& x : q) x = n(rng);
    emb.table["query"] = q;
    const auto index = build_index(doc, emb);
    const auto got = search(index, "query", emb, 5);
    const auto want = testsupport::oracle_rank(vectors, q, 5);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].page == want[i].page);
      CHECK(std::fabs(got[i].score - want[i].score) <= 1e-9);
    }
  }
}

}  // TEST_SUITE

#include "rehab/error.hpp"
#include "rehab/knowledge_retrieval.hpp"
#include "rehab/tokenizer.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

using namespace rehab;
using namespace rehab::knowledge;

namespace {

std::string words(std::size_t n, const std::string& stem = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += stem + std::to_string(i);
  }
  return out;
}

std::vector<float> gaussian(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return v;
}

VectorIndex random_index(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  VectorIndex index("synthetic", dim);
  for (std::size_t i = 0; i < n; ++i) {
    KnowledgeChunk c;
    c.chunk_id = "c" + std::to_string(i);
    c.text = "chunk " + std::to_string(i);
    c.source_doc = "doc";
    c.token_count = 2;
    c.embedding = gaussian(rng, dim);
    index.add(std::move(c));
  }
  return index;
}

// Full scan in double precision over the raw embeddings.
std::vector<std::pair<std::string, double>> brute_force(const VectorIndex& index, const std::vector<float>& q,
                                                        std::size_t k) {
  auto norm = [](const std::vector<float>& v) {
    double s = 0.0;
    for (float x : v) s += static_cast<double>(x) * x;
    return std::sqrt(s);
  };
  std::vector<std::pair<std::string, double>> all;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto& e = index.chunk(i).embedding;
    double dot = 0.0;
    for (std::size_t d = 0; d < e.size(); ++d) dot += static_cast<double>(e[d]) * q[d];
    all.emplace_back(index.chunk(i).chunk_id, dot / (norm(e) * norm(q)));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

class CountingEmbedder final : public Embedder {
 public:
  std::string fingerprint() const override { return inner.fingerprint(); }
  std::size_t dim() const override { return inner.dim(); }
  std::vector<float> embed(std::string_view text) override {
    ++calls;
    return inner.embed(text);
  }
  HashEmbedder inner{64};
  int calls = 0;
};

}  // namespace

TEST_CASE("word tokenizer") {
  const text::WordTokenizer tok;
  CHECK(tok.words("Raise the arm, slowly!") == std::vector<std::string>{"Raise", "the", "arm", ",", "slowly", "!"});
  CHECK(tok.count("") == 0);
  CHECK(tok.count("   ") == 0);
  CHECK(tok.words("héllo wörld").size() == 2);
  CHECK(text::lowercase("AbC") == "abc");
  CHECK(text::fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(text::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("chunk_corpus splits into fixed token counts") {
  const text::WordTokenizer tok;
  std::vector<Document> docs = {{"long", words(250), ""}, {"short", words(100), ""}, {"empty", "", ""}};
  const ChunkingResult r = chunk_corpus(docs, tok, 100);
  REQUIRE(r.chunks.size() == 4);
  CHECK(r.chunks[0].token_count == 100);
  CHECK(r.chunks[1].token_count == 100);
  CHECK(r.chunks[2].token_count == 50);
  CHECK(r.chunks[3].token_count == 100);
  CHECK(r.chunks[3].source_doc == "short");
  CHECK(r.warnings.size() == 1);

  // Chunk text is an exact substring that rejoins to the document.
  CHECK(docs[0].text.find(r.chunks[1].text) != std::string::npos);
  CHECK(r.chunks[0].text.rfind("w0", 0) == 0);
  CHECK(r.chunks[2].text.find("w249") != std::string::npos);
  std::set<std::string> ids;
  for (const auto& c : r.chunks) ids.insert(c.chunk_id);
  CHECK(ids.size() == r.chunks.size());

  CHECK_THROWS_AS(chunk_corpus(docs, tok, 0), ValidationError);
}

TEST_CASE("hash embedder is deterministic and normalised") {
  HashEmbedder e(128);
  const auto a = e.embed("raise the arm");
  const auto b = e.embed("raise the arm");
  CHECK(a == b);
  double n = 0.0;
  for (float x : a) n += static_cast<double>(x) * x;
  CHECK(n == doctest::Approx(1.0));
  const auto empty = e.embed("");
  double en = 0.0;
  for (float x : empty) en += static_cast<double>(x) * x;
  CHECK(en > 0.0);
  CHECK(HashEmbedder(128, 1).fingerprint() != HashEmbedder(128, 2).fingerprint());
}

TEST_CASE("top-3 retrieval equals a brute-force scan") {
  std::mt19937_64 rng(2024);
  const VectorIndex index = random_index(rng, 1000, 32);
  CHECK(index.size() == 1000);
  for (int q = 0; q < 100; ++q) {
    const auto query = gaussian(rng, 32);
    const SearchResult got = index.search(query, 3);
    const auto want = brute_force(index, query, 3);
    REQUIRE(got.hits.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(got.hits[r].chunk_id == want[r].first);
      CHECK(got.hits[r].score == doctest::Approx(want[r].second).epsilon(1e-5));
      CHECK(got.hits[r].rank == r + 1);
      if (r) CHECK(got.hits[r].score <= got.hits[r - 1].score);
    }
  }
}

TEST_CASE("retrieval edge cases") {
  std::mt19937_64 rng(1);
  VectorIndex index = random_index(rng, 5, 8);
  const auto self = index.search(index.chunk(3).embedding, 1);
  CHECK(self.hits.at(0).chunk_id == "c3");
  CHECK(self.hits.at(0).score == doctest::Approx(1.0));

  const auto all = index.search(gaussian(rng, 8), 10);
  CHECK(all.truncated);
  CHECK(all.hits.size() == 5);

  CHECK_THROWS_AS(index.search(gaussian(rng, 8), 0), ValidationError);
  CHECK_THROWS_AS(index.search(gaussian(rng, 4), 1), ValidationError);
  CHECK_THROWS_AS(index.search(std::vector<float>(8, 0.0f), 1), ValidationError);

  KnowledgeChunk dup = index.chunk(0);
  CHECK_THROWS_AS(index.add(dup), ValidationError);

  VectorIndex single("synthetic", 8);
  single.add(index.chunk(2));
  CHECK(single.search(gaussian(rng, 8), 1).hits.at(0).chunk_id == "c2");
}

TEST_CASE("index save and load preserve results") {
  std::mt19937_64 rng(9);
  const VectorIndex index = random_index(rng, 200, 16);
  testing::TempDir dir("index");
  index.save(dir / "kb.idx");
  const VectorIndex back = VectorIndex::load(dir / "kb.idx");
  CHECK(back.content_fingerprint() == index.content_fingerprint());
  const auto q = gaussian(rng, 16);
  const auto a = index.search(q, 3);
  const auto b = back.search(q, 3);
  for (std::size_t r = 0; r < 3; ++r) CHECK(a.hits[r].chunk_id == b.hits[r].chunk_id);

  HashEmbedder other(16);
  CHECK_THROWS_AS(VectorIndex::load(dir / "kb.idx", other), ConfigError);
  CHECK_THROWS_AS(VectorIndex::load(dir / "missing.idx"), NotFoundError);
}

TEST_CASE("concatenate_hits respects the token budget") {
  VectorIndex index("synthetic", 2);
  index.add({"a", words(10, "a"), "docA", 10, {1.0f, 0.0f}});
  index.add({"b", words(10, "b"), "docB", 10, {0.0f, 1.0f}});
  const std::vector<RetrievalHit> hits = {{"a", 0.9, 1}, {"b", 0.8, 2}};
  CHECK(concatenate_hits(hits, index, 100) == "[1] (docA) " + words(10, "a") + "\n[2] (docB) " + words(10, "b"));
  CHECK(concatenate_hits(hits, index, 13) == "[1] (docA) " + words(10, "a") + "\n[2] (docB) b0 b1 b2");
}

TEST_CASE("consolidation caches per class and refreshes on corpus change") {
  const ClassCatalog catalog = testing::fixture_catalog();
  const text::WordTokenizer tok;
  CountingEmbedder embedder;
  std::vector<Document> docs;
  for (const auto& c : catalog.classes()) docs.push_back({"doc" + std::to_string(c.class_id), c.description, ""});
  auto chunks = chunk_corpus(docs, tok, 20).chunks;
  const VectorIndex index = VectorIndex::build(chunks, embedder);

  MemoryCacheStore store;
  const auto first = consolidate(catalog, embedder, index, store);
  CHECK(first.recomputed);
  CHECK(first.cache.entries.size() == 15);
  CHECK(first.cache.version == 1);
  for (const auto& [id, entry] : first.cache.entries) {
    CHECK(entry.hits.size() == 3);
    CHECK_FALSE(entry.concatenated_text.empty());
  }
  // A description is its own best match.
  CHECK(index.chunk(first.cache.entries.at(4).hits[0].chunk_id).source_doc == "doc4");

  const auto queries_before = index.query_count();
  const int embeds_before = embedder.calls;
  const auto second = consolidate(catalog, embedder, index, store);
  CHECK_FALSE(second.recomputed);
  CHECK(index.query_count() == queries_before);
  CHECK(embedder.calls == embeds_before);
  CHECK(cache_to_json(second.cache) == cache_to_json(first.cache));

  docs[3].text = "Shrug both shoulders up towards the ears, hold, then relax them down slowly.";
  const VectorIndex edited = VectorIndex::build(chunk_corpus(docs, tok, 20).chunks, embedder);
  const auto third = consolidate(catalog, embedder, edited, store);
  CHECK(third.recomputed);
  CHECK(third.cache.version == 2);
  CHECK(third.cache.index_fingerprint != first.cache.index_fingerprint);
  CHECK(cache_to_json(third.cache) != cache_to_json(first.cache));

  const KnowledgeBase kb(third.cache);
  CHECK(kb.for_action(4).action_class_id == 4);
  CHECK_THROWS_AS(kb.for_action(0), ConfigError);

  HashEmbedder wrong(32);
  CHECK_THROWS_AS(consolidate(catalog, wrong, index, store), ConfigError);
}

TEST_CASE("knowledge cache json and file store round trip") {
  KnowledgeCache cache;
  cache.version = 3;
  cache.index_fingerprint = "f";
  cache.descriptions_hash = "d";
  cache.entries[2] = {2, {{"c1", 0.5, 1}}, "[1] (x) text"};
  testing::TempDir dir("cache");
  JsonFileCacheStore store(dir / "cache.json");
  CHECK_FALSE(store.load().has_value());
  store.save(cache);
  const auto back = store.load();
  REQUIRE(back.has_value());
  CHECK(cache_to_json(*back) == cache_to_json(cache));
}

TEST_CASE("corpus directory loader reads text files in name order") {
  testing::TempDir dir("corpus");
  std::ofstream(dir / "b.txt") << "second document";
  std::ofstream(dir / "a.txt") << "first document";
  std::ofstream(dir / "a.meta.json") << R"({"source": "Guide p. 3"})";
  const auto docs = load_corpus_dir(dir.path());
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].text == "first document");
  CHECK(docs[0].source == "Guide p. 3");
  CHECK(docs[1].doc_id == "b");
  CHECK_THROWS_AS(load_corpus_dir(dir / "nope"), NotFoundError);
}

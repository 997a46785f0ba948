#pragma once

#include "rehab/catalog.hpp"
#include "rehab/tokenizer.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rehab::knowledge {

inline constexpr std::size_t kDefaultChunkTokens = 100;
inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr std::size_t kDefaultKnowledgeTokenBudget = 300;

struct Document {
  std::string doc_id;
  std::string text;
  std::string source;  // citation label; defaults to doc_id
};

struct KnowledgeChunk {
  std::string chunk_id;
  std::string text;
  std::string source_doc;
  std::size_t token_count = 0;
  std::vector<float> embedding;
};

struct ChunkingResult {
  std::vector<KnowledgeChunk> chunks;
  std::vector<std::string> warnings;
};

/// Sequential non-overlapping chunks of `chunk_tokens` tokens; the last chunk
/// of a document may be shorter. Chunk text is the exact source substring.
ChunkingResult chunk_corpus(std::span<const Document> documents, const text::WordTokenizer& tokenizer,
                            std::size_t chunk_tokens = kDefaultChunkTokens);

/// Reads `*.txt` documents from a directory, with optional `<name>.meta.json`
/// sidecars ({"source": "...", "doc_id": "..."}). Sorted by file name.
std::vector<Document> load_corpus_dir(const std::filesystem::path& dir);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string fingerprint() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<float> embed(std::string_view text) = 0;
};

/// Deterministic feature-hashing embedder over lower-cased word unigrams and
/// bigrams with signed buckets, L2-normalised. Never returns a zero vector.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 17);
  std::string fingerprint() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<float> embed(std::string_view text) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  text::WordTokenizer tokenizer_;
};

/// Sentence-embedding provider speaking the OpenAI-compatible
/// `POST <base_url>/v1/embeddings` protocol.
class HttpEmbedder final : public Embedder {
 public:
  struct Options {
    std::string base_url;  // e.g. http://localhost:8080
    std::string model;
    std::string api_key;
    std::size_t dim = 0;
    int timeout_seconds = 30;
  };
  explicit HttpEmbedder(Options options);
  std::string fingerprint() const override;
  std::size_t dim() const override { return options_.dim; }
  std::vector<float> embed(std::string_view text) override;

 private:
  Options options_;
};

struct RetrievalHit {
  std::string chunk_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based
};

struct SearchResult {
  std::vector<RetrievalHit> hits;
  bool truncated = false;  // k exceeded the index size
};

/// Exact cosine-similarity index. Immutable once shared; build a new one and
/// swap it in to change the corpus.
class VectorIndex {
 public:
  VectorIndex(std::string embedder_fingerprint, std::size_t dim);

  static VectorIndex build(std::vector<KnowledgeChunk> chunks, Embedder& embedder);

  void add(KnowledgeChunk chunk);
  /// Appends another index built with the same embedder.
  void merge(const VectorIndex& other);

  /// Top-k by cosine similarity, descending; equal scores ordered by chunk id.
  SearchResult search(std::span<const float> query, std::size_t k) const;

  std::size_t size() const noexcept { return chunks_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& embedder_fingerprint() const noexcept { return fingerprint_; }
  const KnowledgeChunk& chunk(std::size_t i) const { return chunks_.at(i); }
  const KnowledgeChunk& chunk(const std::string& chunk_id) const;
  /// Hash over embedder fingerprint, chunk ids, texts and embeddings.
  std::string content_fingerprint() const;
  std::uint64_t query_count() const noexcept { return queries_.load(); }

  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);
  /// Loads and checks the stored embedder fingerprint.
  static VectorIndex load(const std::filesystem::path& path, const Embedder& expected);

  VectorIndex(const VectorIndex& other);
  VectorIndex& operator=(const VectorIndex& other);
  VectorIndex(VectorIndex&& other) noexcept;
  VectorIndex& operator=(VectorIndex&& other) noexcept;

 private:
  std::string fingerprint_;
  std::size_t dim_;
  std::vector<KnowledgeChunk> chunks_;
  std::vector<float> normalized_;  // size() x dim_, row-major
  std::map<std::string, std::size_t> by_id_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

struct ConsolidatedKnowledge {
  dataset::LabelId action_class_id = 0;
  std::vector<RetrievalHit> hits;
  std::string concatenated_text;
};

struct KnowledgeCache {
  std::uint64_t version = 0;
  std::string index_fingerprint;
  std::string descriptions_hash;
  std::size_t k = kDefaultTopK;
  std::map<dataset::LabelId, ConsolidatedKnowledge> entries;
};

std::string cache_to_json(const KnowledgeCache& cache);
KnowledgeCache cache_from_json(const std::string& text);

class KnowledgeCacheStore {
 public:
  virtual ~KnowledgeCacheStore() = default;
  virtual std::optional<KnowledgeCache> load() = 0;
  virtual void save(const KnowledgeCache& cache) = 0;
};

class JsonFileCacheStore final : public KnowledgeCacheStore {
 public:
  explicit JsonFileCacheStore(std::filesystem::path path) : path_(std::move(path)) {}
  std::optional<KnowledgeCache> load() override;
  void save(const KnowledgeCache& cache) override;

 private:
  std::filesystem::path path_;
};

class MemoryCacheStore final : public KnowledgeCacheStore {
 public:
  std::optional<KnowledgeCache> load() override { return cache_; }
  void save(const KnowledgeCache& cache) override { cache_ = cache; }

 private:
  std::optional<KnowledgeCache> cache_;
};

struct ConsolidateOptions {
  std::size_t k = kDefaultTopK;
  std::size_t token_budget = kDefaultKnowledgeTokenBudget;
  /// Classes that need knowledge; defaults to the 15 action classes.
  std::vector<dataset::LabelId> classes;
};

struct ConsolidateResult {
  KnowledgeCache cache;
  bool recomputed = false;
  std::vector<std::string> warnings;
};

/// Joins hits as "[n] (source) text" blocks, cut to `token_budget` tokens.
std::string concatenate_hits(std::span<const RetrievalHit> hits, const VectorIndex& index, std::size_t token_budget);

/// Computes the per-class top-k once, keyed by the description's embedding,
/// and persists it. An unchanged corpus, catalog and k leave the stored cache
/// untouched; any change recomputes every entry and bumps the version.
ConsolidateResult consolidate(const ClassCatalog& catalog, Embedder& embedder, const VectorIndex& index,
                              KnowledgeCacheStore& store, const ConsolidateOptions& options = {});

/// Read-only view used at inference time; never touches an index.
class KnowledgeBase {
 public:
  explicit KnowledgeBase(KnowledgeCache cache) : cache_(std::move(cache)) {}
  const ConsolidatedKnowledge& for_action(dataset::LabelId action) const;
  const KnowledgeCache& cache() const noexcept { return cache_; }

 private:
  KnowledgeCache cache_;
};

}  // namespace rehab::knowledge

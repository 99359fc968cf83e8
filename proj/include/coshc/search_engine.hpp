#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coshc/category_predictor.hpp"
#include "coshc/cluster.hpp"
#include "coshc/deep_hash.hpp"
#include "coshc/embedding_store.hpp"
#include "coshc/packed_codes.hpp"

namespace coshc {

/// Number of differing bits. Throws ShapeError on a word-count mismatch.
std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

/// Unchecked XOR/popcount kernel for the scan loops.
inline std::uint32_t hamming_words(const std::uint64_t* a, const std::uint64_t* b,
                                   std::size_t words) noexcept {
  std::uint32_t sum = 0;
  for (std::size_t w = 0; w < words; ++w) {
    sum += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
  }
  return sum;
}

/// cos(a, b) accumulated in double; 0 when either vector is all zeros.
double cosine(std::span<const float> a, std::span<const float> b) noexcept;

struct IndexConfig {
  std::size_t k = 10;
  std::size_t bits = 128;
  std::size_t recall = 100;  // default total recall N
};

/// Items of one category with their codes stored contiguously.
struct CategoryBucket {
  std::vector<std::uint32_t> ids;  // ascending item ids
  PackedCodeMatrix codes;          // row r is the code of ids[r]
};

struct ScoredItem {
  std::uint32_t id = 0;
  double score = 0.0;
  bool operator==(const ScoredItem&) const = default;
};

struct RecallResult {
  std::vector<std::uint32_t> ids;        // concatenated per category, category order
  std::vector<std::uint32_t> distances;  // Hamming distance of ids[i] to the query code
  std::vector<std::size_t> per_category;  // how many ids each category contributed
};

struct QueryResult {
  std::vector<ScoredItem> ranked;  // cosine descending, ties by ascending id
  std::vector<std::size_t> budgets;
  std::vector<std::uint32_t> recalled_distances;
};

/// Immutable two-stage search index.
class SearchIndex {
 public:
  SearchIndex() = default;

  [[nodiscard]] const IndexConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t size() const noexcept { return embeddings_.count(); }
  [[nodiscard]] std::size_t dim() const noexcept { return embeddings_.dim(); }
  [[nodiscard]] const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }
  [[nodiscard]] const std::vector<CategoryBucket>& buckets() const noexcept { return buckets_; }
  /// Category of every item, indexed by item id.
  [[nodiscard]] const std::vector<std::uint32_t>& categories() const noexcept {
    return categories_;
  }
  [[nodiscard]] const ClusterModel& clusters() const noexcept { return clusters_; }
  [[nodiscard]] const ClassifierModel& classifier() const noexcept { return classifier_; }
  [[nodiscard]] const HashingModel& code_hash() const noexcept { return code_hash_; }
  [[nodiscard]] const HashingModel& desc_hash() const noexcept { return desc_hash_; }
  /// Packed code of an item, looked up through its bucket.
  [[nodiscard]] std::span<const std::uint64_t> code_of(std::uint32_t id) const;

  /// Copy of this index with a different query classifier.
  [[nodiscard]] SearchIndex with_classifier(ClassifierModel classifier) const;

  friend SearchIndex build_index(const EmbeddingMatrix&, const ClusterModel&, const HashingModel&,
                                 const HashingModel&, const ClassifierModel&, const IndexConfig&);
  friend SearchIndex load_index(const std::filesystem::path&);

 private:
  IndexConfig config_;
  EmbeddingMatrix embeddings_;
  std::vector<std::uint32_t> categories_;
  std::vector<std::uint32_t> slot_;  // row of each item inside its bucket
  std::vector<CategoryBucket> buckets_;
  ClusterModel clusters_;
  ClassifierModel classifier_;
  HashingModel code_hash_;
  HashingModel desc_hash_;
};

/// Buckets every corpus item by its nearest centroid and stores its code.
SearchIndex build_index(const EmbeddingMatrix& code_embeddings, const ClusterModel& clusters,
                        const HashingModel& code_hash, const HashingModel& desc_hash,
                        const ClassifierModel& classifier, const IndexConfig& config);

/// Per category i, the min(R_i, |bucket i|) items nearest to the query code
/// in Hamming distance, ties broken by ascending id. Uses one bounded max-heap
/// per category.
RecallResult recall(const SearchIndex& index, std::span<const std::uint64_t> query_code,
                    const RecallAllocation& allocation);

/// Category-blind recall: the `total` nearest codes over the whole corpus.
RecallResult recall_global(const SearchIndex& index, std::span<const std::uint64_t> query_code,
                           std::size_t total);

/// Candidates sorted by cosine to the query embedding (descending, ties by id).
QueryResult rerank(const SearchIndex& index, std::span<const float> query,
                   std::span<const std::uint32_t> candidates);

/// Full online path: classifier -> budgets -> query hash -> recall -> rerank.
QueryResult search(const SearchIndex& index, std::span<const float> query, std::size_t total);

/// Online path with caller-chosen budgets.
QueryResult search_with_allocation(const SearchIndex& index, std::span<const float> query,
                                   const RecallAllocation& allocation);

/// Exact cosine ranking over every row of `corpus`.
std::vector<ScoredItem> exact_search(const EmbeddingMatrix& corpus, std::span<const float> query);

/// Persists the index as a directory with a manifest.json that lists every
/// file with its FNV-1a checksum. `extra_files` (already present in `dir`)
/// are checksummed under "extra".
void save_index(const SearchIndex& index, const std::filesystem::path& dir,
                std::span<const std::string> extra_files = {});

/// Loads and verifies a persisted index. Throws FormatError on any checksum
/// or consistency failure.
SearchIndex load_index(const std::filesystem::path& dir);

}  // namespace coshc

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "coshc/embedding_store.hpp"
#include "coshc/search_engine.hpp"

namespace coshc {

/// Fraction of queries whose truth id sits at 1-based rank <= k. A truth id
/// missing from its list counts as a miss. Throws InvalidArgument when k < 1.
double success_rate_at_k(std::span<const std::vector<std::uint32_t>> results,
                         std::span<const std::uint32_t> truth, std::size_t k);

enum class AblationVariant {
  kFull,                   // probability-weighted budgets
  kWithoutClassification,  // global Hamming top-N
  kOneClassification,      // N-k+1 slots to the argmax category
  kIdealClassification,    // N-k+1 slots to the true category
};

std::string_view variant_name(AblationVariant v);
/// Accepts "full", "without_classification"/"wo", "one_classification"/"one",
/// "ideal_classification"/"ideal".
AblationVariant parse_variant(std::string_view name);
inline constexpr AblationVariant kAllVariants[] = {
    AblationVariant::kFull, AblationVariant::kWithoutClassification,
    AblationVariant::kOneClassification, AblationVariant::kIdealClassification};

struct VariantMetrics {
  std::string name;
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  std::size_t queries = 0;
};

struct StageTimings {
  std::string mode;
  double similarity_seconds = 0.0;  // totals over all queries, median of repeats
  double sorting_seconds = 0.0;
  double total_seconds = 0.0;
  std::size_t queries = 0;
  std::size_t repeats = 0;

  [[nodiscard]] double per_query(double seconds) const noexcept {
    return queries == 0 ? 0.0 : seconds / static_cast<double>(queries);
  }
};

struct EvalReport {
  std::size_t corpus_size = 0;
  std::size_t dim = 0;
  std::size_t bits = 0;
  std::size_t k = 0;
  std::size_t recall = 0;
  std::size_t queries = 0;
  VariantMetrics exact;  // full-corpus cosine ranking
  std::vector<VariantMetrics> variants;
  std::optional<double> classifier_accuracy;
  std::vector<StageTimings> timings;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Flat "variant,metric,value" rows.
  [[nodiscard]] std::string to_csv() const;
};

/// Queries aligned with the index item that answers each of them.
struct QuerySet {
  EmbeddingMatrix queries;
  std::vector<std::uint32_t> truth;                 // item id per query
  std::optional<std::vector<std::uint32_t>> labels;  // true category per query

  void validate(const SearchIndex& index) const;
};

/// Ranked ids per query for the variant's recall rule.
std::vector<std::vector<std::uint32_t>> run_variant(const SearchIndex& index,
                                                    const QuerySet& queries,
                                                    AblationVariant variant, std::size_t total);

/// R@1/5/10 of one variant. The ideal variant throws InvalidArgument("ideal
/// variant requires labels") when queries.labels is empty.
VariantMetrics run_ablation(const SearchIndex& index, const QuerySet& queries,
                            AblationVariant variant, std::size_t total);

/// R@1/5/10 of exact full-corpus cosine search.
VariantMetrics run_exact(const SearchIndex& index, const QuerySet& queries);

/// Fraction of argmax predictions equal to the labels.
double classifier_accuracy(const ClassifierModel& model, const EmbeddingMatrix& desc,
                           std::span<const std::uint32_t> labels);

enum class TimingMode { kBaselineLinearScan, kCoshc };

/// Single-threaded per-stage wall-clock timing over `queries`, repeated
/// `repeats` times; each stage reports its median total.
///
/// Baseline: f32 cosine over every item, then a full sort.
/// CoSHC: classifier + query hash + Hamming scan, then per-category bounded
/// selection and the cosine re-rank of the recalled candidates.
StageTimings bench_timing(const SearchIndex& index, const EmbeddingMatrix& queries,
                          std::size_t total, TimingMode mode, std::size_t repeats = 5);

/// Runs the requested variants (plus exact search and classifier accuracy
/// when labels are present) and optional timings.
EvalReport evaluate(const SearchIndex& index, const QuerySet& queries,
                    std::span<const AblationVariant> variants, std::size_t total, bool timing,
                    std::size_t timing_repeats = 5);

}  // namespace coshc

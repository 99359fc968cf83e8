#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coshc/embedding_store.hpp"
#include "coshc/mlp.hpp"

namespace coshc {

/// Description -> category classifier: three FC layers (hidden width = input
/// dim) with a softmax over the k categories.
struct ClassifierModel {
  Mlp net;

  [[nodiscard]] std::size_t input_dim() const noexcept { return net.input_dim(); }
  [[nodiscard]] std::size_t k() const noexcept { return net.output_dim(); }

  static ClassifierModel random(std::size_t input_dim, std::size_t k, std::mt19937_64& rng);

  void save(const std::filesystem::path& dir) const;
  static ClassifierModel load(const std::filesystem::path& dir);

  bool operator==(const ClassifierModel&) const = default;
};

struct ClassifierTrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ClassifierTraining {
  ClassifierModel model;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

/// Cross-entropy training on (description, category) pairs. Parameters are
/// rounded to f32 on return.
ClassifierTraining train_classifier(const EmbeddingMatrix& desc,
                                    std::span<const std::uint32_t> labels, std::size_t k,
                                    const ClassifierTrainConfig& cfg);

/// Category probabilities for one query.
std::vector<double> predict_proba(const ClassifierModel& model, std::span<const float> query);

/// Row-wise probabilities for a batch, count x k.
Matrix predict_proba(const ClassifierModel& model, const EmbeddingMatrix& queries);

/// Numerically stable row-wise softmax.
Matrix softmax_rows(const Matrix& logits);

/// Per-category recall budgets for one query.
struct RecallAllocation {
  std::vector<std::size_t> budgets;  // R_1..R_k, each >= 1
  std::size_t total = 0;             // N

  [[nodiscard]] std::size_t sum() const noexcept;
};

/// R_i = max(floor(p_i * (N - k)), 1).
///
/// Every category keeps at least one slot and sum(R_i) <= N. Throws
/// InvalidArgument("recall budget too small") unless N > k.
RecallAllocation allocate_recall(std::span<const double> probabilities, std::size_t total);

/// N - k + 1 slots for `category`, one for every other category.
RecallAllocation allocate_single_category(std::size_t k, std::size_t category, std::size_t total);

}  // namespace coshc

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coshc/category_predictor.hpp"
#include "coshc/deep_hash.hpp"
#include "coshc/eval_bench.hpp"
#include "coshc/search_engine.hpp"
#include "coshc/target_similarity.hpp"

namespace coshc {

/// Every hyperparameter of the offline pipeline. Defaults: 10 categories,
/// 128-bit codes, total recall 100, beta/eta/mu/lambda1/lambda2 =
/// 0.6/0.4/1.5/0.1/0.1, AdamW with weight decay 0.01.
struct PipelineConfig {
  std::size_t k = 10;
  std::size_t bits = 128;
  std::size_t recall = 100;
  double beta = 0.6;
  double eta = 0.4;
  double mu = 1.5;
  double lambda1 = 0.1;
  double lambda2 = 0.1;
  std::size_t hash_batch_size = 64;
  std::size_t hash_epochs = 20;
  double hash_learning_rate = 1e-4;
  std::size_t classifier_batch_size = 64;
  std::size_t classifier_epochs = 20;
  double classifier_learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t kmeans_max_iter = 100;
  double test_fraction = 0.05;
  std::uint64_t seed = 42;
  std::string code_path;
  std::string desc_path;
  std::string index_dir;

  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw InvalidArgument.
  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);

  [[nodiscard]] SimilarityConfig similarity() const;
  [[nodiscard]] HashTrainConfig hashing() const;
  [[nodiscard]] ClassifierTrainConfig classifier() const;
  [[nodiscard]] KMeansOptions kmeans() const;
  [[nodiscard]] IndexConfig index() const;

  // Stage seeds are fixed offsets from the global seed.
  [[nodiscard]] std::uint64_t kmeans_seed() const noexcept { return seed + 1; }
  [[nodiscard]] std::uint64_t hashing_seed() const noexcept { return seed + 2; }
  [[nodiscard]] std::uint64_t classifier_seed() const noexcept { return seed + 3; }
  [[nodiscard]] std::uint64_t split_seed() const noexcept { return seed + 4; }
};

struct TrainTestSplit {
  std::vector<std::uint32_t> train;  // ascending
  std::vector<std::uint32_t> test;   // ascending
};

/// Seeded held-out split: round(n * test_fraction) pairs go to test.
TrainTestSplit split_pairs(std::size_t n, double test_fraction, std::uint64_t seed);

struct BuildResult {
  SearchIndex index;
  TrainTestSplit split;
  std::vector<double> kmeans_inertia;
  std::vector<double> hash_loss;
  std::vector<double> classifier_loss;
  double train_classifier_accuracy = 0.0;
};

using LogFn = std::function<void(const std::string&)>;

/// kmeans -> hashing -> classifier -> index, all trained on the train split
/// only. Errors are rethrown with the failing stage's name prepended.
BuildResult build_pipeline(const PairedCorpus& corpus, const PipelineConfig& cfg,
                           const LogFn& log = {});

/// Writes the index plus test_ids.u32, test_queries.cosh, train_log.json and
/// config.json into `dir`.
void write_build(const BuildResult& result, const PairedCorpus& corpus,
                 const PipelineConfig& cfg, const std::filesystem::path& dir);

/// Held-out queries recorded by write_build, labelled with the index
/// category of each query's paired code.
QuerySet load_test_split(const std::filesystem::path& dir, const SearchIndex& index);

}  // namespace coshc

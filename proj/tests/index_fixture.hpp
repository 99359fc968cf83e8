#pragma once

#include <random>

#include "coshc/category_predictor.hpp"
#include "coshc/cluster.hpp"
#include "coshc/deep_hash.hpp"
#include "coshc/search_engine.hpp"
#include "test_support.hpp"

namespace coshc::testing {

struct IndexFixture {
  EmbeddingMatrix corpus;
  SearchIndex index;
};

// Index over random embeddings with untrained (random) hashing and
// classifier networks; enough to exercise every code path.
inline IndexFixture random_index(std::size_t n, std::size_t dim, std::size_t k, std::size_t bits,
                                 std::uint64_t seed, std::size_t kmeans_iters = 20,
                                 std::size_t kmeans_restarts = 1) {
  IndexFixture f;
  f.corpus = random_embeddings(n, dim, seed);
  std::mt19937_64 rng(seed + 1);
  const auto clusters = kmeans_fit(
      f.corpus, {.k = k, .max_iter = kmeans_iters, .n_init = kmeans_restarts, .seed = seed});
  auto code_hash = HashingModel::random(dim, bits, rng);
  auto desc_hash = HashingModel::random(dim, bits, rng);
  auto classifier = ClassifierModel::random(dim, k, rng);
  // Persisted tensors are f32, as after training.
  code_hash.net.round_to_f32();
  desc_hash.net.round_to_f32();
  classifier.net.round_to_f32();
  f.index = build_index(f.corpus, clusters, code_hash, desc_hash, classifier,
                        {.k = k, .bits = bits, .recall = 100});
  return f;
}

}  // namespace coshc::testing

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coshc/embedding_store.hpp"

namespace coshc {

/// K-means partition of the code embeddings into k categories.
struct ClusterModel {
  std::size_t k = 0;
  EmbeddingMatrix centroids;              // k x dim
  std::vector<std::uint32_t> assignments;  // one per fitted point, in [0, k)
  double inertia = 0.0;                    // sum of squared distances to assigned centroid
  std::vector<double> inertia_history;     // inertia after every assignment pass
  std::size_t iterations = 0;
  bool converged = false;

  [[nodiscard]] std::size_t dim() const noexcept { return centroids.dim(); }
};

struct KMeansOptions {
  std::size_t k = 10;
  std::size_t max_iter = 100;
  /// Independent seedings; the run with the lowest final inertia wins.
  std::size_t n_init = 10;
  std::uint64_t seed = 0;
  /// D^2 draws per seeding step; the draw giving the lowest potential is kept.
  std::size_t seed_trials = 16;
};

/// Lloyd's algorithm with greedy k-means++ seeding.
///
/// Each of n_init runs iterates until an assignment pass changes nothing or
/// max_iter passes have run. A cluster left empty by an assignment pass is
/// reseeded with the point farthest from its own centroid. All runs draw from
/// one RNG seeded with `seed`. Throws InvalidArgument("insufficient points")
/// when code.count() < k.
ClusterModel kmeans_fit(const EmbeddingMatrix& code, const KMeansOptions& options);

/// Index of the nearest centroid (squared Euclidean) for every row; ties go
/// to the lowest centroid index.
std::vector<std::uint32_t> assign(const ClusterModel& model, const EmbeddingMatrix& vectors);

/// Squared Euclidean distance accumulated in double.
double squared_distance(std::span<const float> a, std::span<const float> b) noexcept;

}  // namespace coshc

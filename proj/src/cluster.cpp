#include "coshc/cluster.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "coshc/error.hpp"

namespace coshc {

double squared_distance(std::span<const float> a, std::span<const float> b) noexcept {
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = static_cast<double>(a[j]) - b[j];
    sum += diff * diff;
  }
  return sum;
}

namespace {

struct Nearest {
  std::uint32_t index;
  double distance;
};

Nearest nearest_centroid(const EmbeddingMatrix& centroids, std::span<const float> point) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.count(); ++c) {
    const double d = squared_distance(point, centroids.row(c));
    if (d < best.distance) {
      best = {static_cast<std::uint32_t>(c), d};
    }
  }
  return best;
}

// Greedy k-means++: the first center is uniform; every further center is the
// best of several D^2-weighted draws, judged by the resulting potential.
EmbeddingMatrix seed_plus_plus(const EmbeddingMatrix& code, std::size_t k, std::size_t trials,
                               std::mt19937_64& rng) {
  const std::size_t n = code.count();
  EmbeddingMatrix centroids(k, code.dim());
  std::vector<double> d2(n);
  std::vector<double> trial_d2(n);
  std::vector<double> best_d2(n);

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t chosen = pick(rng);
  double potential = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d2[i] = squared_distance(code.row(i), code.row(chosen));
    potential += d2[i];
  }
  auto copy_row = [&](std::size_t c, std::size_t src) {
    const auto r = code.row(src);
    std::copy(r.begin(), r.end(), centroids.row(c).begin());
  };
  copy_row(0, chosen);

  for (std::size_t c = 1; c < k; ++c) {
    if (potential <= 0.0) {
      // Every point coincides with a chosen center.
      chosen = (chosen + 1) % n;
      copy_row(c, chosen);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, potential);
    double best_potential = std::numeric_limits<double>::infinity();
    std::size_t best = n;
    for (std::size_t t = 0; t < trials; ++t) {
      const double target = u(rng);
      double acc = 0.0;
      std::size_t candidate = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target && d2[i] > 0.0) {
          candidate = i;
          break;
        }
      }
      double trial_potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        trial_d2[i] = std::min(d2[i], squared_distance(code.row(i), code.row(candidate)));
        trial_potential += trial_d2[i];
      }
      if (trial_potential < best_potential) {
        best_potential = trial_potential;
        best = candidate;
        best_d2.swap(trial_d2);
      }
    }
    chosen = best;
    d2.swap(best_d2);
    potential = best_potential;
    copy_row(c, chosen);
  }
  return centroids;
}

void update_means(const EmbeddingMatrix& code, std::span<const std::uint32_t> assignments,
                  EmbeddingMatrix& centroids) {
  const std::size_t dim = code.dim();
  std::vector<double> sums(centroids.count() * dim, 0.0);
  std::vector<std::size_t> counts(centroids.count(), 0);
  for (std::size_t i = 0; i < code.count(); ++i) {
    const auto c = assignments[i];
    ++counts[c];
    const auto r = code.row(i);
    double* s = sums.data() + c * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      s[j] += r[j];
    }
  }
  for (std::size_t c = 0; c < centroids.count(); ++c) {
    if (counts[c] == 0) {
      continue;
    }
    auto out = centroids.row(c);
    const double* s = sums.data() + c * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      out[j] = static_cast<float>(s[j] / static_cast<double>(counts[c]));
    }
  }
}


ClusterModel lloyd(const EmbeddingMatrix& code, const KMeansOptions& options,
                   std::mt19937_64& rng) {
  const std::size_t n = code.count();
  const std::size_t k = options.k;

  ClusterModel model;
  model.k = k;
  model.centroids = seed_plus_plus(code, k, options.seed_trials, rng);
  model.assignments.assign(n, std::numeric_limits<std::uint32_t>::max());

  std::vector<double> dist(n);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < options.max_iter; ++iter) {
    bool changed = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto best = nearest_centroid(model.centroids, code.row(i));
      changed |= best.index != model.assignments[i];
      model.assignments[i] = best.index;
      dist[i] = best.distance;
      ++counts[best.index];
    }

    // Empty-cluster repair: move the worst-fitting point of a multi-member
    // cluster into the empty one and make it that cluster's centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) {
        continue;
      }
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[model.assignments[i]] > 1 && (far == n || dist[i] > dist[far])) {
          far = i;
        }
      }
      if (far == n) {
        throw InvariantError("kmeans: no point available to reseed an empty cluster");
      }
      --counts[model.assignments[far]];
      model.assignments[far] = static_cast<std::uint32_t>(c);
      counts[c] = 1;
      dist[far] = 0.0;
      const auto src = code.row(far);
      std::copy(src.begin(), src.end(), model.centroids.row(c).begin());
      changed = true;
    }

    double inertia = 0.0;
    for (double d : dist) {
      inertia += d;
    }
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);
    model.iterations = iter + 1;
    if (!changed) {
      model.converged = true;
      break;
    }
    update_means(code, model.assignments, model.centroids);
  }

  if (!model.converged) {
    // Leave the model self-consistent: assignments against the final centroids.
    model.assignments = assign(model, code);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += squared_distance(code.row(i), model.centroids.row(model.assignments[i]));
    }
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);
  }
  return model;
}

}  // namespace

ClusterModel kmeans_fit(const EmbeddingMatrix& code, const KMeansOptions& options) {
  if (options.k == 0) {
    throw InvalidArgument("k must be positive");
  }
  if (options.max_iter == 0 || options.n_init == 0 || options.seed_trials == 0) {
    throw InvalidArgument("max_iter, n_init and seed_trials must be positive");
  }
  if (code.count() < options.k) {
    throw InvalidArgument("insufficient points: " + std::to_string(code.count()) +
                          " points for k=" + std::to_string(options.k));
  }
  std::mt19937_64 rng(options.seed);
  ClusterModel best;
  for (std::size_t run = 0; run < options.n_init; ++run) {
    ClusterModel model = lloyd(code, options, rng);
    if (run == 0 || model.inertia < best.inertia) {
      best = std::move(model);
    }
  }
  return best;
}

std::vector<std::uint32_t> assign(const ClusterModel& model, const EmbeddingMatrix& vectors) {
  if (vectors.dim() != model.dim()) {
    throw ShapeError("assign: vector dim " + std::to_string(vectors.dim()) +
                     " != centroid dim " + std::to_string(model.dim()));
  }
  std::vector<std::uint32_t> out(vectors.count());
  for (std::size_t i = 0; i < vectors.count(); ++i) {
    out[i] = nearest_centroid(model.centroids, vectors.row(i)).index;
  }
  return out;
}

}  // namespace coshc

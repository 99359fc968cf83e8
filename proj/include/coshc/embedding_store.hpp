#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace coshc {

/// Row-major dense matrix of f32 embedding vectors, one row per item.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Zero-filled count x dim matrix. Throws InvalidArgument when dim == 0.
  EmbeddingMatrix(std::size_t count, std::size_t dim);
  /// Takes ownership of `data`, which must hold exactly count * dim values.
  EmbeddingMatrix(std::size_t count, std::size_t dim, std::vector<float> data);

  [[nodiscard]] std::size_t count() const noexcept { return count_; }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] bool empty() const noexcept { return count_ == 0; }

  [[nodiscard]] std::span<const float> row(std::size_t i) const noexcept {
    return {data_.data() + i * dim_, dim_};
  }
  [[nodiscard]] std::span<float> row(std::size_t i) noexcept {
    return {data_.data() + i * dim_, dim_};
  }
  [[nodiscard]] float operator()(std::size_t i, std::size_t j) const noexcept {
    return data_[i * dim_ + j];
  }
  [[nodiscard]] float& operator()(std::size_t i, std::size_t j) noexcept {
    return data_[i * dim_ + j];
  }
  [[nodiscard]] std::span<const float> data() const noexcept { return data_; }
  [[nodiscard]] std::span<float> data() noexcept { return data_; }

  /// New matrix made of the listed rows, in list order.
  [[nodiscard]] EmbeddingMatrix select_rows(std::span<const std::uint32_t> ids) const;

  /// Throws FormatError naming the first NaN/Inf as "(row,col)".
  void check_finite() const;

  /// Bitwise comparison of shape and payload.
  [[nodiscard]] bool bit_equal(const EmbeddingMatrix& other) const noexcept;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

/// Aligned <description, code> pairs: row i of `code` answers row i of `desc`.
struct PairedCorpus {
  EmbeddingMatrix code;
  EmbeddingMatrix desc;
  std::vector<std::string> ids;  // optional external identifiers

  [[nodiscard]] std::size_t size() const noexcept { return code.count(); }
  /// Throws ShapeError if the two sides disagree in count or dim.
  void validate() const;
};

struct SyntheticSpec {
  std::size_t n_pairs = 1000;
  std::size_t dim = 64;
  std::size_t n_latent_clusters = 10;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCorpus {
  PairedCorpus corpus;
  std::vector<std::uint32_t> latent_labels;
};

/// Spread (expected norm) of an item's offset from its latent cluster center.
inline constexpr double kSyntheticClusterSpread = 0.6;

/// Deterministic synthetic corpus.
///
/// Cluster centers are uniform on the unit sphere. Item i belongs to cluster
/// i mod n_latent_clusters and gets a latent point center + spread * g with
/// g ~ N(0, I/dim). Its code and description rows are the latent point plus
/// independent N(0, sigma^2 I/dim) noise, so noise_sigma is the expected norm
/// of the perturbation regardless of dim and sigma = 0 makes the two rows equal.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Row-wise l2 normalization; all-zero rows are passed through unchanged.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);

/// Header size of the COSH embedding file.
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

}  // namespace coshc

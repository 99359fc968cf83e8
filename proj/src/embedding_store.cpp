#include "coshc/embedding_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "coshc/binary_io.hpp"
#include "coshc/error.hpp"

namespace coshc {

namespace {

constexpr char kMagic[4] = {'C', 'O', 'S', 'H'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t count, std::size_t dim)
    : EmbeddingMatrix(count, dim, std::vector<float>(count * dim, 0.0f)) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t count, std::size_t dim, std::vector<float> data)
    : count_(count), dim_(dim), data_(std::move(data)) {
  if (dim_ == 0) {
    throw InvalidArgument("embedding dim must be positive");
  }
  if (data_.size() != count_ * dim_) {
    throw ShapeError("embedding data holds " + std::to_string(data_.size()) +
                     " values, expected " + std::to_string(count_ * dim_));
  }
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::uint32_t> ids) const {
  EmbeddingMatrix out(ids.size(), dim_);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= count_) {
      throw InvalidArgument("row id " + std::to_string(ids[r]) + " out of range");
    }
    const auto src = row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void EmbeddingMatrix::check_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw FormatError("non-finite value at (" + std::to_string(i / dim_) + "," +
                        std::to_string(i % dim_) + ")");
    }
  }
}

bool EmbeddingMatrix::bit_equal(const EmbeddingMatrix& other) const noexcept {
  return count_ == other.count_ && dim_ == other.dim_ &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

void PairedCorpus::validate() const {
  if (code.count() != desc.count() || code.dim() != desc.dim()) {
    throw ShapeError("paired corpus mismatch: code " + std::to_string(code.count()) + "x" +
                     std::to_string(code.dim()) + " vs desc " + std::to_string(desc.count()) +
                     "x" + std::to_string(desc.dim()));
  }
  if (!ids.empty() && ids.size() != code.count()) {
    throw ShapeError("paired corpus has " + std::to_string(ids.size()) + " ids for " +
                     std::to_string(code.count()) + " pairs");
  }
}

void SyntheticSpec::validate() const {
  if (n_pairs == 0) throw InvalidArgument("n_pairs must be positive");
  if (dim == 0) throw InvalidArgument("dim must be positive");
  if (n_latent_clusters == 0) throw InvalidArgument("n_latent_clusters must be positive");
  if (n_latent_clusters > n_pairs) {
    throw InvalidArgument("n_latent_clusters must not exceed n_pairs");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw InvalidArgument("noise_sigma must be >= 0");
  }
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t dim = spec.dim;
  const double unit = 1.0 / std::sqrt(static_cast<double>(dim));

  std::vector<double> centers(spec.n_latent_clusters * dim);
  for (std::size_t c = 0; c < spec.n_latent_clusters; ++c) {
    double* center = centers.data() + c * dim;
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        center[j] = gauss(rng);
        norm2 += center[j] * center[j];
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < dim; ++j) {
      center[j] *= inv;
    }
  }

  SyntheticCorpus out;
  out.corpus.code = EmbeddingMatrix(spec.n_pairs, dim);
  out.corpus.desc = EmbeddingMatrix(spec.n_pairs, dim);
  out.latent_labels.resize(spec.n_pairs);
  std::vector<double> latent(dim);
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    const auto label = static_cast<std::uint32_t>(i % spec.n_latent_clusters);
    out.latent_labels[i] = label;
    const double* center = centers.data() + label * dim;
    for (std::size_t j = 0; j < dim; ++j) {
      latent[j] = center[j] + kSyntheticClusterSpread * unit * gauss(rng);
    }
    auto code = out.corpus.code.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      code[j] = static_cast<float>(latent[j] + spec.noise_sigma * unit * gauss(rng));
    }
    auto desc = out.corpus.desc.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      desc[j] = static_cast<float>(latent[j] + spec.noise_sigma * unit * gauss(rng));
    }
  }
  return out;
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  for (std::size_t i = 0; i < out.count(); ++i) {
    auto r = out.row(i);
    double norm2 = 0.0;
    for (float v : r) {
      norm2 += static_cast<double>(v) * v;
    }
    if (norm2 == 0.0) {
      continue;
    }
    const double norm = std::sqrt(norm2);
    for (float& v : r) {
      v = static_cast<float>(v / norm);
    }
  }
  return out;
}

void write_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  m.check_finite();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out.write(kMagic, sizeof(kMagic));
  io::put_le<std::uint8_t>(out, kVersion);
  io::put_le<std::uint8_t>(out, kDtypeF32);
  io::put_le<std::uint16_t>(out, 0);
  io::put_le<std::uint64_t>(out, m.count());
  io::put_le<std::uint64_t>(out, m.dim());
  io::put_f32_block(out, m.data());
  if (!out.flush()) {
    throw IoError("write failed: " + path.string());
  }
}

EmbeddingMatrix read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  const std::string where = path.string() + ": ";
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic))) {
    throw FormatError(where + "truncated header");
  }
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(where + "bad magic");
  }
  std::uint8_t version = 0;
  std::uint8_t dtype = 0;
  std::uint16_t pad = 0;
  std::uint64_t count = 0;
  std::uint64_t dim = 0;
  if (!io::get_le(in, version) || !io::get_le(in, dtype) || !io::get_le(in, pad) ||
      !io::get_le(in, count) || !io::get_le(in, dim)) {
    throw FormatError(where + "truncated header");
  }
  if (version != kVersion) {
    throw FormatError(where + "version mismatch (found " + std::to_string(version) + ")");
  }
  if (dtype != kDtypeF32) {
    throw FormatError(where + "unsupported dtype " + std::to_string(dtype));
  }
  if (pad != 0) {
    throw FormatError(where + "nonzero header padding");
  }
  if (dim == 0) {
    throw FormatError(where + "dim must be positive");
  }
  const std::uint64_t available = io::remaining_bytes(in);
  if (count > available / sizeof(float) / dim) {
    throw FormatError(where + "truncated payload");
  }
  const std::uint64_t payload = count * dim * sizeof(float);
  if (available > payload) {
    throw FormatError(where + "trailing bytes after payload");
  }
  std::vector<float> data(count * dim);
  if (!io::get_f32_block(in, data)) {
    throw FormatError(where + "truncated payload");
  }
  EmbeddingMatrix m(count, dim, std::move(data));
  try {
    m.check_finite();
  } catch (const FormatError& e) {
    throw FormatError(where + e.what());
  }
  return m;
}

}  // namespace coshc

#pragma once

#include "coshc/embedding_store.hpp"
#include "coshc/linalg.hpp"

namespace coshc {

struct SimilarityConfig {
  double beta = 0.6;  // weight of the code-side similarity
  double eta = 0.4;   // weight of the high-order neighborhood term

  void validate() const;
};

/// S = V^ V^T with V^ the row-normalized batch; zero rows give zero rows.
/// The result is exactly symmetric and clamped to [-1, 1].
Matrix cosine_similarity_matrix(const Matrix& batch);
Matrix cosine_similarity_matrix(const EmbeddingMatrix& batch);

/// Joint supervision target for one mini-batch of m pairs:
///
///   S~  = beta * S_code + (1 - beta) * S_desc
///   S   = (1 - eta) * S~ + eta * S~ S~^T / m
///   S_F = S with its diagonal set to exactly 1
///
/// S~ S~^T uses S~ with its original diagonal; the diagonal is replaced once,
/// at the end.
Matrix build_target(const Matrix& code_batch, const Matrix& desc_batch,
                    const SimilarityConfig& cfg);
Matrix build_target(const EmbeddingMatrix& code_batch, const EmbeddingMatrix& desc_batch,
                    const SimilarityConfig& cfg);

}  // namespace coshc

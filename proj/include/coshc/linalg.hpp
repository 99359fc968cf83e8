#pragma once

#include <Eigen/Dense>

#include "coshc/embedding_store.hpp"

namespace coshc {

/// Dense double-precision matrix used by the training code.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Widens an embedding matrix to double.
Matrix to_matrix(const EmbeddingMatrix& m);

/// Rounds a double matrix to f32 embedding storage.
EmbeddingMatrix to_embeddings(const Matrix& m);

/// Replaces m by (m + m^T) / 2 so the result is exactly symmetric.
void symmetrize(Matrix& m);

}  // namespace coshc

#include "coshc/linalg.hpp"

namespace coshc {

Matrix to_matrix(const EmbeddingMatrix& m) {
  Matrix out(static_cast<Eigen::Index>(m.count()), static_cast<Eigen::Index>(m.dim()));
  const auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.data()[i] = data[i];
  }
  return out;
}

EmbeddingMatrix to_embeddings(const Matrix& m) {
  EmbeddingMatrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<float>(m.data()[i]);
  }
  return out;
}

void symmetrize(Matrix& m) {
  const Eigen::Index n = m.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double avg = 0.5 * (m(i, j) + m(j, i));
      m(i, j) = avg;
      m(j, i) = avg;
    }
  }
}

}  // namespace coshc

#include "coshc/target_similarity.hpp"

#include <string>

#include "coshc/error.hpp"

namespace coshc {

void SimilarityConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) {
    throw InvalidArgument("beta must lie in [0, 1]");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw InvalidArgument("eta must lie in [0, 1]");
  }
}

Matrix cosine_similarity_matrix(const Matrix& batch) {
  if (batch.rows() == 0) {
    throw InvalidArgument("cosine_similarity_matrix: empty batch");
  }
  Matrix unit = batch;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) {
      unit.row(i) /= norm;
    }
  }
  Matrix s = unit * unit.transpose();
  symmetrize(s);
  return s.cwiseMax(-1.0).cwiseMin(1.0);
}

Matrix cosine_similarity_matrix(const EmbeddingMatrix& batch) {
  return cosine_similarity_matrix(to_matrix(batch));
}

Matrix build_target(const Matrix& code_batch, const Matrix& desc_batch,
                    const SimilarityConfig& cfg) {
  cfg.validate();
  if (code_batch.rows() != desc_batch.rows() || code_batch.cols() != desc_batch.cols()) {
    throw ShapeError("build_target: batch size mismatch (" + std::to_string(code_batch.rows()) +
                     " code rows vs " + std::to_string(desc_batch.rows()) + " desc rows)");
  }
  const auto m = static_cast<double>(code_batch.rows());
  const Matrix joint = cfg.beta * cosine_similarity_matrix(code_batch) +
                       (1.0 - cfg.beta) * cosine_similarity_matrix(desc_batch);
  Matrix high_order = joint * joint.transpose();
  symmetrize(high_order);
  Matrix target = (1.0 - cfg.eta) * joint + (cfg.eta / m) * high_order;
  target.diagonal().setOnes();
  return target;
}

Matrix build_target(const EmbeddingMatrix& code_batch, const EmbeddingMatrix& desc_batch,
                    const SimilarityConfig& cfg) {
  return build_target(to_matrix(code_batch), to_matrix(desc_batch), cfg);
}

}  // namespace coshc

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "coshc/embedding_store.hpp"
#include "coshc/linalg.hpp"
#include "coshc/mlp.hpp"
#include "coshc/packed_codes.hpp"
#include "coshc/target_similarity.hpp"

namespace coshc {

/// Hashing network: three FC layers (hidden width = input dim) whose last
/// pre-activation H is squashed by tanh(alpha * H) while training and by
/// sign(H) when emitting binary codes.
struct HashingModel {
  Mlp net;
  double alpha = 1.0;  // scale in effect when the model was last trained/saved

  [[nodiscard]] std::size_t input_dim() const noexcept { return net.input_dim(); }
  [[nodiscard]] std::size_t bits() const noexcept { return net.output_dim(); }

  static HashingModel random(std::size_t input_dim, std::size_t bits, std::mt19937_64& rng);

  void save(const std::filesystem::path& dir) const;
  static HashingModel load(const std::filesystem::path& dir);

  bool operator==(const HashingModel&) const = default;
};

struct HashTrainConfig {
  std::size_t bits = 128;
  double mu = 1.5;
  double lambda1 = 0.1;  // code-code term
  double lambda2 = 0.1;  // desc-desc term
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  /// alpha(epoch) = alpha_start + alpha_step * (epoch - 1), epochs counted from 1.
  double alpha_start = 1.0;
  double alpha_step = 1.0;
  /// Start the description network from a copy of the code network's
  /// initialization instead of an independent draw.
  bool shared_init = true;
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] double alpha_for_epoch(std::size_t epoch) const noexcept {
    return alpha_start + alpha_step * static_cast<double>(epoch - 1);
  }
};

/// tanh(alpha * H) for every row of the batch.
Matrix forward_soft(const HashingModel& model, const Matrix& batch, double alpha);
Matrix forward_soft(const HashingModel& model, const EmbeddingMatrix& batch, double alpha);

/// ||T - Bc Bd^T/d||^2 + lambda1 ||T - Bc Bc^T/d||^2 + lambda2 ||T - Bd Bd^T/d||^2
/// with T = min(mu * S_F, 1) elementwise and d the code length.
double hash_loss(const Matrix& code_soft, const Matrix& desc_soft, const Matrix& target,
                 const HashTrainConfig& cfg);

struct HashLossGradient {
  double loss = 0.0;
  Matrix d_code;  // dL/dBc
  Matrix d_desc;  // dL/dBd
};

/// hash_loss together with its gradient with respect to both soft code matrices.
HashLossGradient hash_loss_backward(const Matrix& code_soft, const Matrix& desc_soft,
                                    const Matrix& target, const HashTrainConfig& cfg);

struct HashGradients {
  double loss = 0.0;
  Mlp code;  // gradient for every parameter of the code network
  Mlp desc;
};

/// Loss and parameter gradients of both networks on one batch, differentiating
/// through the tanh(alpha * H) head and both hidden tanh layers.
HashGradients hash_loss_gradients(const HashingModel& code_model, const HashingModel& desc_model,
                                  const Matrix& code_batch, const Matrix& desc_batch,
                                  const Matrix& target, const HashTrainConfig& cfg, double alpha);

struct HashingPair {
  HashingModel code;
  HashingModel desc;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double alpha, double mean_loss)>;

/// Trains the code and description networks jointly on shuffled mini-batches.
/// The returned parameters are rounded to f32.
HashingPair train_hashing(const PairedCorpus& corpus, const SimilarityConfig& sim_cfg,
                          const HashTrainConfig& cfg, const EpochCallback& on_epoch = {});

/// sign(H) packed per row: bit set iff H > 0, so H == 0 maps to -1.
PackedCodeMatrix binarize(const HashingModel& model, const EmbeddingMatrix& vectors);
/// Single-vector variant used on the query path.
PackedCodeMatrix binarize(const HashingModel& model, std::span<const float> vector);
/// Packs the signs of an arbitrary real matrix.
PackedCodeMatrix sign_pack(const Matrix& values);

}  // namespace coshc

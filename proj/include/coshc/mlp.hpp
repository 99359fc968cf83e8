#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string_view>
#include <vector>
#include <string>

#include "coshc/linalg.hpp"

namespace coshc {

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

/// Three fully-connected layers, in -> hidden -> hidden -> out, with tanh on
/// the two hidden layers. The output layer is left linear; callers apply their
/// own head (scaled tanh for hashing, softmax for classification).
class Mlp {
 public:
  static constexpr std::size_t kLayers = 3;

  /// Intermediate values kept by forward() for backward().
  struct Trace {
    Matrix input;
    Matrix hidden1;  // tanh activations
    Matrix hidden2;
  };

  Mlp() = default;
  Mlp(std::size_t in, std::size_t hidden, std::size_t out);

  /// Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Mlp random(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng);

  [[nodiscard]] std::size_t input_dim() const noexcept;
  [[nodiscard]] std::size_t hidden_dim() const noexcept;
  [[nodiscard]] std::size_t output_dim() const noexcept;

  /// Pre-activation of the output layer for each input row.
  [[nodiscard]] Matrix forward(const Matrix& x, Trace* trace = nullptr) const;

  /// Parameter gradients given dLoss/dOutput (pre-activation).
  [[nodiscard]] Mlp backward(const Trace& trace, const Matrix& d_output) const;

  [[nodiscard]] std::array<DenseLayer, kLayers>& layers() noexcept { return layers_; }
  [[nodiscard]] const std::array<DenseLayer, kLayers>& layers() const noexcept { return layers_; }

  /// Visits every parameter as a flat span of doubles, in a fixed order.
  void for_each_tensor(const std::function<void(std::string_view name, std::span<double>)>& fn);
  void for_each_tensor(
      const std::function<void(std::string_view name, std::span<const double>)>& fn) const;

  [[nodiscard]] std::size_t parameter_count() const noexcept;
  [[nodiscard]] bool all_finite() const noexcept;

  /// Rounds every parameter to the nearest f32 so the model survives a
  /// checkpoint round trip unchanged.
  void round_to_f32();

  [[nodiscard]] bool operator==(const Mlp& other) const;

  /// Writes one COSH file per tensor into `dir`; returns the file names in
  /// tensor order.
  std::vector<std::string> save_tensors(const std::filesystem::path& dir) const;
  /// Reads tensors written by save_tensors into a model of the given shape.
  static Mlp load_tensors(const std::filesystem::path& dir, std::size_t in, std::size_t hidden,
                          std::size_t out);

 private:
  std::array<DenseLayer, kLayers> layers_;
};

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay, bias-corrected moments.
class AdamW {
 public:
  AdamW(const Mlp& like, AdamWOptions options);

  void step(Mlp& params, const Mlp& grads);

  [[nodiscard]] std::uint64_t steps() const noexcept { return step_; }

 private:
  AdamWOptions options_;
  Mlp first_;
  Mlp second_;
  std::uint64_t step_ = 0;
};

}  // namespace coshc

#include "coshc/mlp.hpp"

#include <cmath>

#include "coshc/embedding_store.hpp"
#include "coshc/error.hpp"

namespace coshc {

namespace {

constexpr std::array<std::string_view, 6> kTensorNames = {
    "layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias", "layer2.weight", "layer2.bias"};

Matrix affine(const Matrix& x, const DenseLayer& layer) {
  Matrix z = x * layer.weight.transpose();
  z.rowwise() += layer.bias.transpose();
  return z;
}

}  // namespace

Mlp::Mlp(std::size_t in, std::size_t hidden, std::size_t out) {
  if (in == 0 || hidden == 0 || out == 0) {
    throw InvalidArgument("network dimensions must be positive");
  }
  const std::array<std::size_t, 4> dims = {in, hidden, hidden, out};
  for (std::size_t l = 0; l < kLayers; ++l) {
    layers_[l].weight = Matrix::Zero(static_cast<Eigen::Index>(dims[l + 1]),
                                     static_cast<Eigen::Index>(dims[l]));
    layers_[l].bias = Vector::Zero(static_cast<Eigen::Index>(dims[l + 1]));
  }
}

Mlp Mlp::random(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  Mlp net(in, hidden, out);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
      layer.weight.data()[i] = u(rng);
    }
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = u(rng);
    }
  }
  return net;
}

std::size_t Mlp::input_dim() const noexcept {
  return static_cast<std::size_t>(layers_[0].weight.cols());
}
std::size_t Mlp::hidden_dim() const noexcept {
  return static_cast<std::size_t>(layers_[0].weight.rows());
}
std::size_t Mlp::output_dim() const noexcept {
  return static_cast<std::size_t>(layers_[2].weight.rows());
}

Matrix Mlp::forward(const Matrix& x, Trace* trace) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw ShapeError("network input dim " + std::to_string(x.cols()) + " != expected " +
                     std::to_string(input_dim()));
  }
  Matrix h1 = affine(x, layers_[0]).array().tanh().matrix();
  Matrix h2 = affine(h1, layers_[1]).array().tanh().matrix();
  Matrix out = affine(h2, layers_[2]);
  if (trace != nullptr) {
    trace->input = x;
    trace->hidden1 = std::move(h1);
    trace->hidden2 = std::move(h2);
  }
  return out;
}

Mlp Mlp::backward(const Trace& trace, const Matrix& d_output) const {
  Mlp grads;
  auto& g = grads.layers_;

  g[2].weight = d_output.transpose() * trace.hidden2;
  g[2].bias = d_output.colwise().sum().transpose();

  Matrix d_z2 = (d_output * layers_[2].weight).cwiseProduct(
      (1.0 - trace.hidden2.array().square()).matrix());
  g[1].weight = d_z2.transpose() * trace.hidden1;
  g[1].bias = d_z2.colwise().sum().transpose();

  Matrix d_z1 = (d_z2 * layers_[1].weight).cwiseProduct(
      (1.0 - trace.hidden1.array().square()).matrix());
  g[0].weight = d_z1.transpose() * trace.input;
  g[0].bias = d_z1.colwise().sum().transpose();
  return grads;
}

void Mlp::for_each_tensor(
    const std::function<void(std::string_view, std::span<double>)>& fn) {
  for (std::size_t l = 0; l < kLayers; ++l) {
    auto& layer = layers_[l];
    fn(kTensorNames[2 * l], {layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
    fn(kTensorNames[2 * l + 1], {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
  }
}

void Mlp::for_each_tensor(
    const std::function<void(std::string_view, std::span<const double>)>& fn) const {
  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto& layer = layers_[l];
    fn(kTensorNames[2 * l], {layer.weight.data(), static_cast<std::size_t>(layer.weight.size())});
    fn(kTensorNames[2 * l + 1], {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())});
  }
}

std::size_t Mlp::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) {
    n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  }
  return n;
}

bool Mlp::all_finite() const noexcept {
  for (const auto& layer : layers_) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      return false;
    }
  }
  return true;
}

void Mlp::round_to_f32() {
  for_each_tensor([](std::string_view, std::span<double> t) {
    for (double& v : t) {
      v = static_cast<double>(static_cast<float>(v));
    }
  });
}

bool Mlp::operator==(const Mlp& other) const {
  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

std::vector<std::string> Mlp::save_tensors(const std::filesystem::path& dir) const {
  std::vector<std::string> files;
  for (std::size_t l = 0; l < kLayers; ++l) {
    const auto& layer = layers_[l];
    EmbeddingMatrix w = to_embeddings(layer.weight);
    EmbeddingMatrix b = to_embeddings(Matrix(layer.bias.transpose()));
    files.push_back(std::string(kTensorNames[2 * l]) + ".cosh");
    write_embeddings(w, dir / files.back());
    files.push_back(std::string(kTensorNames[2 * l + 1]) + ".cosh");
    write_embeddings(b, dir / files.back());
  }
  return files;
}

Mlp Mlp::load_tensors(const std::filesystem::path& dir, std::size_t in, std::size_t hidden,
                      std::size_t out) {
  Mlp net(in, hidden, out);
  for (std::size_t l = 0; l < kLayers; ++l) {
    auto& layer = net.layers_[l];
    const auto w = read_embeddings(dir / (std::string(kTensorNames[2 * l]) + ".cosh"));
    const auto b = read_embeddings(dir / (std::string(kTensorNames[2 * l + 1]) + ".cosh"));
    if (static_cast<Eigen::Index>(w.count()) != layer.weight.rows() ||
        static_cast<Eigen::Index>(w.dim()) != layer.weight.cols()) {
      throw FormatError("tensor " + std::string(kTensorNames[2 * l]) + " has shape " +
                        std::to_string(w.count()) + "x" + std::to_string(w.dim()));
    }
    if (b.count() != 1 || static_cast<Eigen::Index>(b.dim()) != layer.bias.size()) {
      throw FormatError("tensor " + std::string(kTensorNames[2 * l + 1]) + " has wrong shape");
    }
    layer.weight = to_matrix(w);
    layer.bias = to_matrix(b).row(0).transpose();
  }
  return net;
}

AdamW::AdamW(const Mlp& like, AdamWOptions options)
    : options_(options),
      first_(like.input_dim(), like.hidden_dim(), like.output_dim()),
      second_(like.input_dim(), like.hidden_dim(), like.output_dim()) {}

void AdamW::step(Mlp& params, const Mlp& grads) {
  ++step_;
  const double lr = options_.learning_rate;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double decay = 1.0 - lr * options_.weight_decay;

  for (std::size_t l = 0; l < Mlp::kLayers; ++l) {
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p *= decay;
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options_.epsilon);
    };
    update(params.layers()[l].weight, grads.layers()[l].weight, first_.layers()[l].weight,
           second_.layers()[l].weight);
    update(params.layers()[l].bias, grads.layers()[l].bias, first_.layers()[l].bias,
           second_.layers()[l].bias);
  }
}

}  // namespace coshc

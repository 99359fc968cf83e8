#include <cmath>

#include <gtest/gtest.h>

#include "coshc/error.hpp"
#include "coshc/mlp.hpp"
#include "test_support.hpp"

using namespace coshc;
using coshc::testing::TempDir;

namespace {

// Reference forward pass with explicit loops.
Matrix naive_forward(const Mlp& net, const Matrix& x) {
  Matrix cur = x;
  for (std::size_t l = 0; l < Mlp::kLayers; ++l) {
    const auto& layer = net.layers()[l];
    Matrix next(cur.rows(), layer.weight.rows());
    for (Eigen::Index i = 0; i < cur.rows(); ++i) {
      for (Eigen::Index o = 0; o < layer.weight.rows(); ++o) {
        double acc = layer.bias(o);
        for (Eigen::Index c = 0; c < cur.cols(); ++c) acc += layer.weight(o, c) * cur(i, c);
        next(i, o) = l + 1 < Mlp::kLayers ? std::tanh(acc) : acc;
      }
    }
    cur = next;
  }
  return cur;
}

}  // namespace

TEST(Mlp, ShapesAndInitRange) {
  std::mt19937_64 rng(1);
  auto net = Mlp::random(5, 7, 3, rng);
  EXPECT_EQ(net.input_dim(), 5u);
  EXPECT_EQ(net.hidden_dim(), 7u);
  EXPECT_EQ(net.output_dim(), 3u);
  EXPECT_EQ(net.parameter_count(), 5u * 7 + 7 + 7 * 7 + 7 + 7 * 3 + 3);
  const double fan_in[] = {5, 7, 7};
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound = 1.0 / std::sqrt(fan_in[l]);
    EXPECT_LE(net.layers()[l].weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(net.layers()[l].bias.cwiseAbs().maxCoeff(), bound);
  }
  EXPECT_THROW(Mlp(0, 3, 3), InvalidArgument);
}

TEST(Mlp, ForwardMatchesLoops) {
  std::mt19937_64 rng(2);
  auto net = Mlp::random(4, 6, 2, rng);
  Matrix x = coshc::testing::random_matrix(9, 4, 3);
  EXPECT_LT((net.forward(x) - naive_forward(net, x)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW((void)net.forward(Matrix(2, 5)), ShapeError);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  auto net = Mlp::random(3, 5, 2, rng);
  Matrix x = coshc::testing::random_matrix(4, 3, 5);
  Matrix w = coshc::testing::random_matrix(4, 2, 6);
  // L = sum(w .* f(x)), so dL/doutput = w.
  auto loss = [&](const Mlp& n) { return n.forward(x).cwiseProduct(w).sum(); };
  Mlp::Trace trace;
  (void)net.forward(x, &trace);
  Mlp grads = net.backward(trace, w);
  std::vector<std::span<const double>> gs;
  grads.for_each_tensor([&](std::string_view, std::span<const double> g) { gs.push_back(g); });
  std::size_t t = 0;
  net.for_each_tensor([&](std::string_view name, std::span<double> p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + 1e-6;
      const double up = loss(net);
      p[i] = saved - 1e-6;
      const double down = loss(net);
      p[i] = saved;
      EXPECT_NEAR(gs[t][i], (up - down) / 2e-6, 1e-7) << name << "[" << i << "]";
    }
    ++t;
  });
}

TEST(Mlp, RoundToF32AndEquality) {
  std::mt19937_64 rng(5);
  auto a = Mlp::random(3, 3, 3, rng);
  auto b = a;
  EXPECT_TRUE(a == b);
  b.round_to_f32();
  b.for_each_tensor([](std::string_view, std::span<const double> t) {
    for (double v : t) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  });
  b.layers()[1].bias(0) += 1;
  EXPECT_FALSE(a == b);
  EXPECT_TRUE(a.all_finite());
  b.layers()[0].weight(0, 0) = std::nan("");
  EXPECT_FALSE(b.all_finite());
}

TEST(Mlp, TensorFilesRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(6);
  auto net = Mlp::random(4, 5, 6, rng);
  net.round_to_f32();
  auto names = net.save_tensors(dir.path());
  EXPECT_EQ(names.size(), 6u);
  auto back = Mlp::load_tensors(dir.path(), 4, 5, 6);
  EXPECT_TRUE(back == net);
  EXPECT_THROW((void)Mlp::load_tensors(dir.path(), 4, 5, 7), FormatError);
}

TEST(AdamW, FirstStepMatchesHandComputation) {
  Mlp params(1, 1, 1);
  Mlp grads(1, 1, 1);
  for (auto& layer : params.layers()) {
    layer.weight(0, 0) = 1.0;
    layer.bias(0) = -2.0;
  }
  for (auto& layer : grads.layers()) {
    layer.weight(0, 0) = 0.5;
    layer.bias(0) = -0.25;
  }
  AdamW opt(params, {.learning_rate = 0.1, .weight_decay = 0.01});
  opt.step(params, grads);
  // Step 1: m_hat = g, v_hat = g^2, so the Adam step is lr * sign(g) up to eps.
  const double w = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  const double b = -2.0 * (1 - 0.1 * 0.01) - 0.1 * (-0.25) / (0.25 + 1e-8);
  for (const auto& layer : params.layers()) {
    EXPECT_NEAR(layer.weight(0, 0), w, 1e-12);
    EXPECT_NEAR(layer.bias(0), b, 1e-12);
  }
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, SecondStepUsesBiasCorrectedMoments) {
  Mlp params(1, 1, 1);
  Mlp g1(1, 1, 1), g2(1, 1, 1);
  g1.layers()[0].weight(0, 0) = 1.0;
  g2.layers()[0].weight(0, 0) = -3.0;
  AdamW opt(params, {.learning_rate = 0.01, .weight_decay = 0.0});
  opt.step(params, g1);
  opt.step(params, g2);
  double p = 0, m = 0, v = 0;
  const double gs[] = {1.0, -3.0};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * gs[t - 1];
    v = 0.999 * v + 0.001 * gs[t - 1] * gs[t - 1];
    p -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(params.layers()[0].weight(0, 0), p, 1e-15);
}

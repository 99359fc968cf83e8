#include "coshc/deep_hash.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "coshc/error.hpp"

namespace coshc {

namespace {

constexpr std::size_t kInferenceChunk = 4096;

Matrix clipped_target(const Matrix& target, double mu) {
  return (mu * target).cwiseMin(1.0);
}

void check_shapes(const Matrix& code_soft, const Matrix& desc_soft, const Matrix& target) {
  if (code_soft.rows() != desc_soft.rows() || code_soft.cols() != desc_soft.cols() ||
      target.rows() != code_soft.rows() || target.cols() != code_soft.rows()) {
    throw ShapeError("hash loss: Bc " + std::to_string(code_soft.rows()) + "x" +
                     std::to_string(code_soft.cols()) + ", Bd " +
                     std::to_string(desc_soft.rows()) + "x" + std::to_string(desc_soft.cols()) +
                     ", S_F " + std::to_string(target.rows()) + "x" +
                     std::to_string(target.cols()));
  }
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), source.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = source.row(static_cast<Eigen::Index>(ids[r]));
  }
  return out;
}

}  // namespace

HashingModel HashingModel::random(std::size_t input_dim, std::size_t bits, std::mt19937_64& rng) {
  return HashingModel{Mlp::random(input_dim, input_dim, bits, rng), 1.0};
}

void HashingModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto files = net.save_tensors(dir);
  nlohmann::json desc;
  desc["kind"] = "hashing";
  desc["layers"] = {net.input_dim(), net.hidden_dim(), net.hidden_dim(), net.output_dim()};
  desc["bits"] = bits();
  desc["alpha"] = alpha;
  desc["tensors"] = files;
  std::ofstream out(dir / "model.json", std::ios::trunc);
  out << desc.dump(2) << '\n';
  if (!out.flush()) {
    throw IoError("write failed: " + (dir / "model.json").string());
  }
}

HashingModel HashingModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) {
    throw IoError("cannot open: " + (dir / "model.json").string());
  }
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(in);
    if (desc.at("kind") != "hashing") {
      throw FormatError((dir / "model.json").string() + ": not a hashing checkpoint");
    }
    const auto layers = desc.at("layers").get<std::vector<std::size_t>>();
    if (layers.size() != 4 || layers[3] != desc.at("bits").get<std::size_t>()) {
      throw FormatError((dir / "model.json").string() + ": inconsistent layer dims");
    }
    HashingModel model;
    model.net = Mlp::load_tensors(dir, layers[0], layers[1], layers[3]);
    model.alpha = desc.at("alpha").get<double>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "model.json").string() + ": " + e.what());
  }
}

void HashTrainConfig::validate() const {
  if (bits == 0) throw InvalidArgument("code length must be positive");
  if (!(mu > 0.0)) throw InvalidArgument("mu must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
    throw InvalidArgument("lambda1 and lambda2 must be non-negative");
  }
  if (batch_size == 0) throw InvalidArgument("batch size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (!(alpha_start > 0.0)) throw InvalidArgument("alpha must start positive");
  if (!(alpha_step > 0.0)) throw InvalidArgument("alpha must be strictly increasing");
}

Matrix forward_soft(const HashingModel& model, const Matrix& batch, double alpha) {
  return (alpha * model.net.forward(batch).array()).tanh().matrix();
}

Matrix forward_soft(const HashingModel& model, const EmbeddingMatrix& batch, double alpha) {
  return forward_soft(model, to_matrix(batch), alpha);
}

double hash_loss(const Matrix& code_soft, const Matrix& desc_soft, const Matrix& target,
                 const HashTrainConfig& cfg) {
  check_shapes(code_soft, desc_soft, target);
  const double d = static_cast<double>(code_soft.cols());
  const Matrix t = clipped_target(target, cfg.mu);
  const double cross = (t - code_soft * desc_soft.transpose() / d).squaredNorm();
  const double code = (t - code_soft * code_soft.transpose() / d).squaredNorm();
  const double desc = (t - desc_soft * desc_soft.transpose() / d).squaredNorm();
  return cross + cfg.lambda1 * code + cfg.lambda2 * desc;
}

HashLossGradient hash_loss_backward(const Matrix& code_soft, const Matrix& desc_soft,
                                    const Matrix& target, const HashTrainConfig& cfg) {
  check_shapes(code_soft, desc_soft, target);
  const double d = static_cast<double>(code_soft.cols());
  const Matrix t = clipped_target(target, cfg.mu);
  const Matrix e_cross = code_soft * desc_soft.transpose() / d - t;
  const Matrix e_code = code_soft * code_soft.transpose() / d - t;
  const Matrix e_desc = desc_soft * desc_soft.transpose() / d - t;

  HashLossGradient out;
  out.loss = e_cross.squaredNorm() + cfg.lambda1 * e_code.squaredNorm() +
             cfg.lambda2 * e_desc.squaredNorm();
  out.d_code = (2.0 / d) * (e_cross * desc_soft) +
               (2.0 * cfg.lambda1 / d) * ((e_code + e_code.transpose()) * code_soft);
  out.d_desc = (2.0 / d) * (e_cross.transpose() * code_soft) +
               (2.0 * cfg.lambda2 / d) * ((e_desc + e_desc.transpose()) * desc_soft);
  return out;
}

HashGradients hash_loss_gradients(const HashingModel& code_model, const HashingModel& desc_model,
                                  const Matrix& code_batch, const Matrix& desc_batch,
                                  const Matrix& target, const HashTrainConfig& cfg, double alpha) {
  Mlp::Trace code_trace;
  Mlp::Trace desc_trace;
  const Matrix code_head = code_model.net.forward(code_batch, &code_trace);
  const Matrix desc_head = desc_model.net.forward(desc_batch, &desc_trace);
  const Matrix code_soft = (alpha * code_head.array()).tanh().matrix();
  const Matrix desc_soft = (alpha * desc_head.array()).tanh().matrix();

  const auto loss = hash_loss_backward(code_soft, desc_soft, target, cfg);
  // d tanh(alpha h) / dh = alpha (1 - tanh^2)
  const Matrix d_code_head =
      loss.d_code.cwiseProduct((alpha * (1.0 - code_soft.array().square())).matrix());
  const Matrix d_desc_head =
      loss.d_desc.cwiseProduct((alpha * (1.0 - desc_soft.array().square())).matrix());

  HashGradients out;
  out.loss = loss.loss;
  out.code = code_model.net.backward(code_trace, d_code_head);
  out.desc = desc_model.net.backward(desc_trace, d_desc_head);
  return out;
}

HashingPair train_hashing(const PairedCorpus& corpus, const SimilarityConfig& sim_cfg,
                          const HashTrainConfig& cfg, const EpochCallback& on_epoch) {
  corpus.validate();
  sim_cfg.validate();
  cfg.validate();
  if (corpus.size() == 0) {
    throw InvalidArgument("train_hashing: empty corpus");
  }
  std::mt19937_64 rng(cfg.seed);
  const std::size_t dim = corpus.code.dim();

  HashingPair out;
  out.code = HashingModel::random(dim, cfg.bits, rng);
  out.desc = cfg.shared_init ? out.code : HashingModel::random(dim, cfg.bits, rng);

  const AdamWOptions adam{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
  AdamW code_opt(out.code.net, adam);
  AdamW desc_opt(out.desc.net, adam);

  const Matrix code_all = to_matrix(corpus.code);
  const Matrix desc_all = to_matrix(corpus.desc);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double alpha = cfg.alpha_for_epoch(epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> ids(order.data() + start, stop - start);
      const Matrix code_batch = gather_rows(code_all, ids);
      const Matrix desc_batch = gather_rows(desc_all, ids);
      const Matrix target = build_target(code_batch, desc_batch, sim_cfg);
      const auto grads =
          hash_loss_gradients(out.code, out.desc, code_batch, desc_batch, target, cfg, alpha);
      code_opt.step(out.code.net, grads.code);
      desc_opt.step(out.desc.net, grads.desc);
      loss_sum += grads.loss;
      ++batches;
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    if (!std::isfinite(mean_loss) || !out.code.net.all_finite() || !out.desc.net.all_finite()) {
      throw InvariantError("train_hashing: non-finite parameters at epoch " +
                           std::to_string(epoch));
    }
    out.epoch_loss.push_back(mean_loss);
    out.code.alpha = alpha;
    out.desc.alpha = alpha;
    if (on_epoch) {
      on_epoch(epoch, alpha, mean_loss);
    }
  }
  out.code.net.round_to_f32();
  out.desc.net.round_to_f32();
  return out;
}

PackedCodeMatrix sign_pack(const Matrix& values) {
  PackedCodeMatrix out(static_cast<std::size_t>(values.rows()),
                       static_cast<std::size_t>(values.cols()));
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (values(i, j) > 0.0) {
        out.set_bit(static_cast<std::size_t>(i), static_cast<std::size_t>(j), true);
      }
    }
  }
  return out;
}

PackedCodeMatrix binarize(const HashingModel& model, const EmbeddingMatrix& vectors) {
  if (vectors.dim() != model.input_dim()) {
    throw ShapeError("binarize: vector dim " + std::to_string(vectors.dim()) +
                     " != model input dim " + std::to_string(model.input_dim()));
  }
  PackedCodeMatrix out(vectors.count(), model.bits());
  for (std::size_t start = 0; start < vectors.count(); start += kInferenceChunk) {
    const std::size_t stop = std::min(vectors.count(), start + kInferenceChunk);
    Matrix chunk(static_cast<Eigen::Index>(stop - start), static_cast<Eigen::Index>(vectors.dim()));
    for (std::size_t i = start; i < stop; ++i) {
      const auto r = vectors.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        chunk(static_cast<Eigen::Index>(i - start), static_cast<Eigen::Index>(j)) = r[j];
      }
    }
    const PackedCodeMatrix packed = sign_pack(model.net.forward(chunk));
    for (std::size_t i = start; i < stop; ++i) {
      out.set_row(i, packed.row(i - start));
    }
  }
  return out;
}

PackedCodeMatrix binarize(const HashingModel& model, std::span<const float> vector) {
  if (vector.size() != model.input_dim()) {
    throw ShapeError("binarize: vector dim " + std::to_string(vector.size()) +
                     " != model input dim " + std::to_string(model.input_dim()));
  }
  Matrix x(1, static_cast<Eigen::Index>(vector.size()));
  for (std::size_t j = 0; j < vector.size(); ++j) {
    x(0, static_cast<Eigen::Index>(j)) = vector[j];
  }
  return sign_pack(model.net.forward(x));
}

}  // namespace coshc

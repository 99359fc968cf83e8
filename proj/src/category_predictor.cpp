#include "coshc/category_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "coshc/error.hpp"

namespace coshc {

ClassifierModel ClassifierModel::random(std::size_t input_dim, std::size_t k,
                                        std::mt19937_64& rng) {
  return ClassifierModel{Mlp::random(input_dim, input_dim, k, rng)};
}

void ClassifierModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto files = net.save_tensors(dir);
  nlohmann::json desc;
  desc["kind"] = "classifier";
  desc["layers"] = {net.input_dim(), net.hidden_dim(), net.hidden_dim(), net.output_dim()};
  desc["k"] = k();
  desc["tensors"] = files;
  std::ofstream out(dir / "model.json", std::ios::trunc);
  out << desc.dump(2) << '\n';
  if (!out.flush()) {
    throw IoError("write failed: " + (dir / "model.json").string());
  }
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) {
    throw IoError("cannot open: " + (dir / "model.json").string());
  }
  try {
    const auto desc = nlohmann::json::parse(in);
    if (desc.at("kind") != "classifier") {
      throw FormatError((dir / "model.json").string() + ": not a classifier checkpoint");
    }
    const auto layers = desc.at("layers").get<std::vector<std::size_t>>();
    if (layers.size() != 4 || layers[3] != desc.at("k").get<std::size_t>()) {
      throw FormatError((dir / "model.json").string() + ": inconsistent layer dims");
    }
    return ClassifierModel{Mlp::load_tensors(dir, layers[0], layers[1], layers[3])};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "model.json").string() + ": " + e.what());
  }
}

void ClassifierTrainConfig::validate() const {
  if (batch_size == 0) throw InvalidArgument("classifier batch size must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("classifier learning rate must be positive");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - peak).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

ClassifierTraining train_classifier(const EmbeddingMatrix& desc,
                                    std::span<const std::uint32_t> labels, std::size_t k,
                                    const ClassifierTrainConfig& cfg) {
  cfg.validate();
  if (k == 0) {
    throw InvalidArgument("k must be positive");
  }
  if (labels.size() != desc.count()) {
    throw ShapeError("train_classifier: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(desc.count()) + " descriptions");
  }
  if (desc.count() == 0) {
    throw InvalidArgument("train_classifier: no training data");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k) {
      throw InvalidArgument("label out of range: " + std::to_string(labels[i]) + " at row " +
                            std::to_string(i) + " (k=" + std::to_string(k) + ")");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  ClassifierTraining out;
  out.model = ClassifierModel::random(desc.dim(), k, rng);
  AdamW opt(out.model.net, AdamWOptions{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});

  const Matrix all = to_matrix(desc);
  std::vector<std::size_t> order(desc.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const auto m = static_cast<Eigen::Index>(stop - start);
      Matrix x(m, all.cols());
      for (Eigen::Index r = 0; r < m; ++r) {
        x.row(r) = all.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
      }
      Mlp::Trace trace;
      const Matrix proba = softmax_rows(out.model.net.forward(x, &trace));
      // Mean cross-entropy; its gradient wrt the logits is (p - onehot) / m.
      Matrix d_logits = proba;
      for (Eigen::Index r = 0; r < m; ++r) {
        const auto label = labels[order[start + static_cast<std::size_t>(r)]];
        loss_sum -= std::log(std::max(proba(r, label), 1e-300));
        d_logits(r, label) -= 1.0;
      }
      d_logits /= static_cast<double>(m);
      opt.step(out.model.net, out.model.net.backward(trace, d_logits));
    }
    out.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    if (!out.model.net.all_finite()) {
      throw InvariantError("train_classifier: non-finite parameters at epoch " +
                           std::to_string(epoch + 1));
    }
  }
  out.model.net.round_to_f32();
  return out;
}

std::vector<double> predict_proba(const ClassifierModel& model, std::span<const float> query) {
  if (query.size() != model.input_dim()) {
    throw ShapeError("predict_proba: query dim " + std::to_string(query.size()) +
                     " != classifier input dim " + std::to_string(model.input_dim()));
  }
  Matrix x(1, static_cast<Eigen::Index>(query.size()));
  for (std::size_t j = 0; j < query.size(); ++j) {
    x(0, static_cast<Eigen::Index>(j)) = query[j];
  }
  const Matrix p = softmax_rows(model.net.forward(x));
  return {p.data(), p.data() + p.size()};
}

Matrix predict_proba(const ClassifierModel& model, const EmbeddingMatrix& queries) {
  if (queries.dim() != model.input_dim()) {
    throw ShapeError("predict_proba: query dim " + std::to_string(queries.dim()) +
                     " != classifier input dim " + std::to_string(model.input_dim()));
  }
  return softmax_rows(model.net.forward(to_matrix(queries)));
}

std::size_t RecallAllocation::sum() const noexcept {
  return std::accumulate(budgets.begin(), budgets.end(), std::size_t{0});
}

RecallAllocation allocate_recall(std::span<const double> probabilities, std::size_t total) {
  const std::size_t k = probabilities.size();
  if (k == 0) {
    throw InvalidArgument("allocate_recall: empty probability vector");
  }
  if (total <= k) {
    throw InvalidArgument("recall budget too small: N=" + std::to_string(total) +
                          " must exceed k=" + std::to_string(k));
  }
  double mass = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidArgument("allocate_recall: probabilities must be finite and non-negative");
    }
    mass += p;
  }
  if (std::abs(mass - 1.0) > 1e-6) {
    throw InvalidArgument("allocate_recall: probabilities sum to " + std::to_string(mass));
  }
  RecallAllocation out;
  out.total = total;
  out.budgets.resize(k);
  const double spare = static_cast<double>(total - k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto share = static_cast<std::size_t>(std::floor(probabilities[i] * spare));
    out.budgets[i] = std::max<std::size_t>(share, 1);
  }
  // Mass slightly above 1 (within tolerance) can overshoot N on huge budgets.
  while (out.sum() > total) {
    --*std::max_element(out.budgets.begin(), out.budgets.end());
  }
  return out;
}

RecallAllocation allocate_single_category(std::size_t k, std::size_t category, std::size_t total) {
  if (category >= k) {
    throw InvalidArgument("category " + std::to_string(category) + " out of range");
  }
  if (total <= k) {
    throw InvalidArgument("recall budget too small: N=" + std::to_string(total) +
                          " must exceed k=" + std::to_string(k));
  }
  RecallAllocation out;
  out.total = total;
  out.budgets.assign(k, 1);
  out.budgets[category] = total - k + 1;
  return out;
}

}  // namespace coshc

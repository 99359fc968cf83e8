#include "coshc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "coshc/binary_io.hpp"
#include "coshc/error.hpp"

namespace coshc {

namespace {

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const IoError& e) {
    throw IoError(stage + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(stage + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(stage + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(stage + ": " + e.what());
  } catch (const InvariantError& e) {
    throw InvariantError(stage + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out << text;
  if (!out.flush()) {
    throw IoError("write failed: " + path.string());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (k == 0) throw InvalidArgument("k must be positive");
  if (bits == 0) throw InvalidArgument("bits must be positive");
  if (recall <= k) {
    throw InvalidArgument("recall budget too small: N=" + std::to_string(recall) +
                          " must exceed k=" + std::to_string(k));
  }
  similarity().validate();
  hashing().validate();
  classifier().validate();
  if (kmeans_max_iter == 0) throw InvalidArgument("kmeans_max_iter must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw InvalidArgument("test_fraction must lie in [0, 1)");
  }
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"k", k},
          {"bits", bits},
          {"recall", recall},
          {"beta", beta},
          {"eta", eta},
          {"mu", mu},
          {"lambda1", lambda1},
          {"lambda2", lambda2},
          {"hash_batch_size", hash_batch_size},
          {"hash_epochs", hash_epochs},
          {"hash_learning_rate", hash_learning_rate},
          {"classifier_batch_size", classifier_batch_size},
          {"classifier_epochs", classifier_epochs},
          {"classifier_learning_rate", classifier_learning_rate},
          {"weight_decay", weight_decay},
          {"kmeans_max_iter", kmeans_max_iter},
          {"test_fraction", test_fraction},
          {"seed", seed},
          {"code_path", code_path},
          {"desc_path", desc_path},
          {"index_dir", index_dir}};
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) {
    throw InvalidArgument("config must be a JSON object");
  }
  PipelineConfig cfg;
  const auto known = cfg.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw InvalidArgument("unknown config key: " + key);
    }
  }
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) {
        field = j.at(key).get<std::decay_t<decltype(field)>>();
      }
    };
    read("k", cfg.k);
    read("bits", cfg.bits);
    read("recall", cfg.recall);
    read("beta", cfg.beta);
    read("eta", cfg.eta);
    read("mu", cfg.mu);
    read("lambda1", cfg.lambda1);
    read("lambda2", cfg.lambda2);
    read("hash_batch_size", cfg.hash_batch_size);
    read("hash_epochs", cfg.hash_epochs);
    read("hash_learning_rate", cfg.hash_learning_rate);
    read("classifier_batch_size", cfg.classifier_batch_size);
    read("classifier_epochs", cfg.classifier_epochs);
    read("classifier_learning_rate", cfg.classifier_learning_rate);
    read("weight_decay", cfg.weight_decay);
    read("kmeans_max_iter", cfg.kmeans_max_iter);
    read("test_fraction", cfg.test_fraction);
    read("seed", cfg.seed);
    read("code_path", cfg.code_path);
    read("desc_path", cfg.desc_path);
    read("index_dir", cfg.index_dir);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config: " + path.string());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  return from_json(j);
}

SimilarityConfig PipelineConfig::similarity() const { return {beta, eta}; }

HashTrainConfig PipelineConfig::hashing() const {
  HashTrainConfig h;
  h.bits = bits;
  h.mu = mu;
  h.lambda1 = lambda1;
  h.lambda2 = lambda2;
  h.batch_size = hash_batch_size;
  h.epochs = hash_epochs;
  h.learning_rate = hash_learning_rate;
  h.weight_decay = weight_decay;
  h.seed = hashing_seed();
  return h;
}

ClassifierTrainConfig PipelineConfig::classifier() const {
  ClassifierTrainConfig c;
  c.batch_size = classifier_batch_size;
  c.epochs = classifier_epochs;
  c.learning_rate = classifier_learning_rate;
  c.weight_decay = weight_decay;
  c.seed = classifier_seed();
  return c;
}

KMeansOptions PipelineConfig::kmeans() const {
  return {.k = k, .max_iter = kmeans_max_iter, .seed = kmeans_seed()};
}

IndexConfig PipelineConfig::index() const { return {.k = k, .bits = bits, .recall = recall}; }

TrainTestSplit split_pairs(std::size_t n, double test_fraction, std::uint64_t seed) {
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), std::uint32_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  TrainTestSplit split;
  split.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

BuildResult build_pipeline(const PairedCorpus& corpus, const PipelineConfig& cfg,
                           const LogFn& log) {
  auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };
  in_stage("config", [&] { cfg.validate(); });
  in_stage("corpus", [&] { corpus.validate(); });

  BuildResult result;
  result.split = split_pairs(corpus.size(), cfg.test_fraction, cfg.split_seed());
  if (result.split.train.size() < cfg.k) {
    throw InvalidArgument("split: insufficient points: " +
                          std::to_string(result.split.train.size()) + " training pairs for k=" +
                          std::to_string(cfg.k));
  }
  PairedCorpus train;
  train.code = corpus.code.select_rows(result.split.train);
  train.desc = corpus.desc.select_rows(result.split.train);
  note("split: " + std::to_string(result.split.train.size()) + " train / " +
       std::to_string(result.split.test.size()) + " test pairs");

  const ClusterModel clusters = in_stage("kmeans", [&] { return kmeans_fit(train.code, cfg.kmeans()); });
  result.kmeans_inertia = clusters.inertia_history;
  note("kmeans: " + std::to_string(clusters.iterations) + " iterations, inertia " +
       std::to_string(clusters.inertia));

  const HashingPair hashing = in_stage("hashing", [&] {
    return train_hashing(train, cfg.similarity(), cfg.hashing(),
                         [&](std::size_t epoch, double alpha, double loss) {
                           note("hashing: epoch " + std::to_string(epoch) + " alpha " +
                                std::to_string(alpha) + " loss " + std::to_string(loss));
                         });
  });
  result.hash_loss = hashing.epoch_loss;

  const ClassifierTraining classifier = in_stage("classifier", [&] {
    return train_classifier(train.desc, clusters.assignments, cfg.k, cfg.classifier());
  });
  result.classifier_loss = classifier.epoch_loss;
  result.train_classifier_accuracy =
      classifier_accuracy(classifier.model, train.desc, clusters.assignments);
  note("classifier: train accuracy " + std::to_string(result.train_classifier_accuracy));

  result.index = in_stage("index", [&] {
    return build_index(corpus.code, clusters, hashing.code, hashing.desc, classifier.model,
                       cfg.index());
  });
  return result;
}

void write_build(const BuildResult& result, const PairedCorpus& corpus,
                 const PipelineConfig& cfg, const std::filesystem::path& dir) {
  in_stage("write", [&] {
    std::filesystem::create_directories(dir);
    io::write_u32_array(dir / "test_ids.u32", result.split.test);
    EmbeddingMatrix test_queries =
        result.split.test.empty() ? EmbeddingMatrix(0, corpus.desc.dim())
                                  : corpus.desc.select_rows(result.split.test);
    write_embeddings(test_queries, dir / "test_queries.cosh");
    nlohmann::json log;
    log["kmeans_inertia"] = result.kmeans_inertia;
    log["hash_loss"] = result.hash_loss;
    log["classifier_loss"] = result.classifier_loss;
    log["train_classifier_accuracy"] = result.train_classifier_accuracy;
    log["train_pairs"] = result.split.train.size();
    log["test_pairs"] = result.split.test.size();
    write_text(dir / "train_log.json", log.dump(2) + "\n");
    write_text(dir / "config.json", cfg.to_json().dump(2) + "\n");
    const std::vector<std::string> extra = {"test_ids.u32", "test_queries.cosh", "train_log.json",
                                            "config.json"};
    save_index(result.index, dir, extra);
  });
}

QuerySet load_test_split(const std::filesystem::path& dir, const SearchIndex& index) {
  QuerySet set;
  set.truth = io::read_u32_array(dir / "test_ids.u32");
  set.queries = read_embeddings(dir / "test_queries.cosh");
  std::vector<std::uint32_t> labels;
  labels.reserve(set.truth.size());
  for (auto id : set.truth) {
    if (id >= index.size()) {
      throw FormatError(dir.string() + ": test id " + std::to_string(id) + " not in index");
    }
    labels.push_back(index.categories()[id]);
  }
  set.labels = std::move(labels);
  set.validate(index);
  return set;
}

}  // namespace coshc

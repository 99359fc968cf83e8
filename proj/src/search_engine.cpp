#include "coshc/search_engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>

#include <nlohmann/json.hpp>

#include "coshc/binary_io.hpp"
#include "coshc/error.hpp"

namespace coshc {

namespace {

constexpr int kManifestVersion = 1;

// (distance, id) ordered lexicographically; the heap top is the worst kept entry.
struct Candidate {
  std::uint32_t distance;
  std::uint32_t id;
  bool operator<(const Candidate& o) const noexcept {
    return distance != o.distance ? distance < o.distance : id < o.id;
  }
};

class BoundedMaxHeap {
 public:
  explicit BoundedMaxHeap(std::size_t capacity) : capacity_(capacity) {
    heap_.reserve(capacity);
  }

  void offer(Candidate c) {
    if (capacity_ == 0) {
      return;
    }
    if (heap_.size() < capacity_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  /// Drains the heap in ascending order.
  std::vector<Candidate> take_sorted() {
    std::sort_heap(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

 private:
  std::size_t capacity_;
  std::vector<Candidate> heap_;
};

void append(RecallResult& out, const std::vector<Candidate>& picked) {
  for (const auto& c : picked) {
    out.ids.push_back(c.id);
    out.distances.push_back(c.distance);
  }
}

void check_query_code(const SearchIndex& index, std::span<const std::uint64_t> code) {
  const std::size_t words = (index.config().bits + 63) / 64;
  if (code.size() != words) {
    throw ShapeError("query code has " + std::to_string(code.size()) + " words, index expects " +
                     std::to_string(words));
  }
}

void check_query(const SearchIndex& index, std::span<const float> query) {
  if (query.size() != index.dim()) {
    throw ShapeError("query dim " + std::to_string(query.size()) + " != index dim " +
                     std::to_string(index.dim()));
  }
}

struct ManifestWriter {
  std::filesystem::path root;
  std::map<std::string, std::string> checksums;

  void record(const std::string& relative) {
    checksums[relative] = io::checksum_hex(io::file_checksum(root / relative));
  }
};

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  out << j.dump(2) << '\n';
  if (!out.flush()) {
    throw IoError("write failed: " + path.string());
  }
}

std::string bucket_file(std::size_t c) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "bucket_%03zu.cosb", c);
  return buf;
}

}  // namespace

std::uint32_t hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) {
    throw ShapeError("hamming_distance: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + " words");
  }
  return hamming_words(a.data(), b.data(), a.size());
}

double cosine(std::span<const float> a, std::span<const float> b) noexcept {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += static_cast<double>(a[j]) * b[j];
    na += static_cast<double>(a[j]) * a[j];
    nb += static_cast<double>(b[j]) * b[j];
  }
  if (na == 0.0 || nb == 0.0) {
    return 0.0;
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::span<const std::uint64_t> SearchIndex::code_of(std::uint32_t id) const {
  if (id >= size()) {
    throw InvalidArgument("item id " + std::to_string(id) + " out of range");
  }
  return buckets_[categories_[id]].codes.row(slot_[id]);
}

SearchIndex SearchIndex::with_classifier(ClassifierModel classifier) const {
  if (classifier.input_dim() != dim() || classifier.k() != config_.k) {
    throw ShapeError("replacement classifier does not match index shape");
  }
  SearchIndex copy = *this;
  copy.classifier_ = std::move(classifier);
  return copy;
}

SearchIndex build_index(const EmbeddingMatrix& code_embeddings, const ClusterModel& clusters,
                        const HashingModel& code_hash, const HashingModel& desc_hash,
                        const ClassifierModel& classifier, const IndexConfig& config) {
  const std::size_t dim = code_embeddings.dim();
  if (clusters.k != config.k || clusters.centroids.count() != config.k) {
    throw ShapeError("build_index: cluster model has k=" + std::to_string(clusters.k) +
                     ", config k=" + std::to_string(config.k));
  }
  if (clusters.dim() != dim || code_hash.input_dim() != dim || desc_hash.input_dim() != dim ||
      classifier.input_dim() != dim) {
    throw ShapeError("build_index: component input dims do not match embedding dim " +
                     std::to_string(dim));
  }
  if (code_hash.bits() != config.bits || desc_hash.bits() != config.bits) {
    throw ShapeError("build_index: hashing models emit " + std::to_string(code_hash.bits()) +
                     "/" + std::to_string(desc_hash.bits()) + " bits, config expects " +
                     std::to_string(config.bits));
  }
  if (classifier.k() != config.k) {
    throw ShapeError("build_index: classifier predicts " + std::to_string(classifier.k()) +
                     " categories, config expects " + std::to_string(config.k));
  }
  if (config.recall <= config.k) {
    throw InvalidArgument("recall budget too small: N=" + std::to_string(config.recall) +
                          " must exceed k=" + std::to_string(config.k));
  }

  SearchIndex index;
  index.config_ = config;
  index.embeddings_ = code_embeddings;
  index.categories_ = assign(clusters, code_embeddings);
  index.clusters_ = clusters;
  index.clusters_.assignments = index.categories_;
  index.classifier_ = classifier;
  index.code_hash_ = code_hash;
  index.desc_hash_ = desc_hash;

  const PackedCodeMatrix codes = binarize(code_hash, code_embeddings);
  std::vector<std::vector<std::uint32_t>> members(config.k);
  for (std::uint32_t id = 0; id < index.categories_.size(); ++id) {
    members[index.categories_[id]].push_back(id);
  }
  index.slot_.resize(code_embeddings.count());
  index.buckets_.resize(config.k);
  for (std::size_t c = 0; c < config.k; ++c) {
    auto& bucket = index.buckets_[c];
    bucket.ids = std::move(members[c]);
    bucket.codes = codes.select_rows(bucket.ids);
    for (std::uint32_t r = 0; r < bucket.ids.size(); ++r) {
      index.slot_[bucket.ids[r]] = r;
    }
  }
  return index;
}

RecallResult recall(const SearchIndex& index, std::span<const std::uint64_t> query_code,
                    const RecallAllocation& allocation) {
  check_query_code(index, query_code);
  const auto& buckets = index.buckets();
  if (allocation.budgets.size() != buckets.size()) {
    throw ShapeError("allocation has " + std::to_string(allocation.budgets.size()) +
                     " budgets for " + std::to_string(buckets.size()) + " categories");
  }
  RecallResult out;
  out.per_category.resize(buckets.size());
  const std::size_t words = query_code.size();
  for (std::size_t c = 0; c < buckets.size(); ++c) {
    const auto& bucket = buckets[c];
    BoundedMaxHeap heap(std::min(allocation.budgets[c], bucket.ids.size()));
    const std::uint64_t* row = bucket.codes.words().data();
    for (std::size_t r = 0; r < bucket.ids.size(); ++r, row += words) {
      heap.offer({hamming_words(query_code.data(), row, words), bucket.ids[r]});
    }
    const auto picked = heap.take_sorted();
    out.per_category[c] = picked.size();
    append(out, picked);
  }
  return out;
}

RecallResult recall_global(const SearchIndex& index, std::span<const std::uint64_t> query_code,
                           std::size_t total) {
  check_query_code(index, query_code);
  const auto& buckets = index.buckets();
  const std::size_t words = query_code.size();
  BoundedMaxHeap heap(std::min(total, index.size()));
  for (const auto& bucket : buckets) {
    const std::uint64_t* row = bucket.codes.words().data();
    for (std::size_t r = 0; r < bucket.ids.size(); ++r, row += words) {
      heap.offer({hamming_words(query_code.data(), row, words), bucket.ids[r]});
    }
  }
  RecallResult out;
  const auto picked = heap.take_sorted();
  append(out, picked);
  out.per_category.assign(buckets.size(), 0);
  for (const auto& c : picked) {
    ++out.per_category[index.categories()[c.id]];
  }
  return out;
}

QueryResult rerank(const SearchIndex& index, std::span<const float> query,
                   std::span<const std::uint32_t> candidates) {
  check_query(index, query);
  QueryResult out;
  out.ranked.reserve(candidates.size());
  for (auto id : candidates) {
    if (id >= index.size()) {
      throw InvalidArgument("rerank: invalid item id " + std::to_string(id));
    }
    out.ranked.push_back({id, cosine(query, index.embeddings().row(id))});
  }
  std::sort(out.ranked.begin(), out.ranked.end(), [](const ScoredItem& a, const ScoredItem& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  return out;
}

QueryResult search_with_allocation(const SearchIndex& index, std::span<const float> query,
                                   const RecallAllocation& allocation) {
  check_query(index, query);
  const PackedCodeMatrix code = binarize(index.desc_hash(), query);
  RecallResult recalled = recall(index, code.row(0), allocation);
  QueryResult out = rerank(index, query, recalled.ids);
  out.budgets = allocation.budgets;
  out.recalled_distances = std::move(recalled.distances);
  return out;
}

QueryResult search(const SearchIndex& index, std::span<const float> query, std::size_t total) {
  check_query(index, query);
  const auto proba = predict_proba(index.classifier(), query);
  return search_with_allocation(index, query, allocate_recall(proba, total));
}

std::vector<ScoredItem> exact_search(const EmbeddingMatrix& corpus, std::span<const float> query) {
  if (query.size() != corpus.dim()) {
    throw ShapeError("query dim " + std::to_string(query.size()) + " != corpus dim " +
                     std::to_string(corpus.dim()));
  }
  std::vector<ScoredItem> ranked(corpus.count());
  for (std::uint32_t id = 0; id < corpus.count(); ++id) {
    ranked[id] = {id, cosine(query, corpus.row(id))};
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredItem& a, const ScoredItem& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  return ranked;
}

void save_index(const SearchIndex& index, const std::filesystem::path& dir,
                std::span<const std::string> extra_files) {
  std::filesystem::create_directories(dir);
  ManifestWriter writer{dir, {}};
  nlohmann::json files;

  write_embeddings(index.embeddings(), dir / "embeddings.cosh");
  writer.record("embeddings.cosh");
  files["embeddings"] = "embeddings.cosh";

  write_embeddings(index.clusters().centroids, dir / "centroids.cosh");
  writer.record("centroids.cosh");
  files["centroids"] = "centroids.cosh";

  io::write_u32_array(dir / "assignments.u32", index.categories());
  writer.record("assignments.u32");
  files["assignments"] = "assignments.u32";

  std::vector<std::string> bucket_names;
  for (std::size_t c = 0; c < index.buckets().size(); ++c) {
    bucket_names.push_back(bucket_file(c));
    write_packed_codes(index.buckets()[c].codes, dir / bucket_names.back());
    writer.record(bucket_names.back());
  }
  files["buckets"] = bucket_names;

  auto save_model = [&](const std::string& name, const auto& model) {
    model.save(dir / name);
    writer.record(name + "/model.json");
    model.net.for_each_tensor([&](std::string_view tensor, std::span<const double>) {
      writer.record(name + "/" + std::string(tensor) + ".cosh");
    });
    files[name] = name;
  };
  save_model("code_hash", index.code_hash());
  save_model("desc_hash", index.desc_hash());
  save_model("classifier", index.classifier());

  nlohmann::json manifest;
  manifest["format"] = "coshc-index";
  manifest["version"] = kManifestVersion;
  manifest["k"] = index.config().k;
  manifest["bits"] = index.config().bits;
  manifest["recall"] = index.config().recall;
  manifest["count"] = index.size();
  manifest["dim"] = index.dim();
  manifest["clusters"] = {{"inertia", index.clusters().inertia},
                          {"iterations", index.clusters().iterations},
                          {"converged", index.clusters().converged}};
  manifest["files"] = files;
  manifest["checksums"] = writer.checksums;
  nlohmann::json extra = nlohmann::json::object();
  for (const auto& name : extra_files) {
    extra[name] = io::checksum_hex(io::file_checksum(dir / name));
  }
  manifest["extra"] = extra;
  write_json(dir / "manifest.json", manifest);
}

SearchIndex load_index(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) {
    throw IoError("cannot open: " + manifest_path.string());
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  try {
    if (manifest.at("format") != "coshc-index" || manifest.at("version") != kManifestVersion) {
      throw FormatError(manifest_path.string() + ": not a version-1 coshc index");
    }
    for (const char* section : {"checksums", "extra"}) {
      if (!manifest.contains(section)) {
        continue;
      }
      for (const auto& [name, expected] : manifest.at(section).items()) {
        const auto actual = io::checksum_hex(io::file_checksum(dir / name));
        if (actual != expected.get<std::string>()) {
          throw FormatError(dir.string() + ": checksum mismatch for " + name);
        }
      }
    }

    SearchIndex index;
    index.config_.k = manifest.at("k").get<std::size_t>();
    index.config_.bits = manifest.at("bits").get<std::size_t>();
    index.config_.recall = manifest.at("recall").get<std::size_t>();
    const auto& files = manifest.at("files");

    index.embeddings_ = read_embeddings(dir / files.at("embeddings").get<std::string>());
    index.categories_ = io::read_u32_array(dir / files.at("assignments").get<std::string>());
    index.clusters_.k = index.config_.k;
    index.clusters_.centroids = read_embeddings(dir / files.at("centroids").get<std::string>());
    index.clusters_.assignments = index.categories_;
    index.clusters_.inertia = manifest.at("clusters").at("inertia").get<double>();
    index.clusters_.iterations = manifest.at("clusters").at("iterations").get<std::size_t>();
    index.clusters_.converged = manifest.at("clusters").at("converged").get<bool>();
    index.code_hash_ = HashingModel::load(dir / files.at("code_hash").get<std::string>());
    index.desc_hash_ = HashingModel::load(dir / files.at("desc_hash").get<std::string>());
    index.classifier_ = ClassifierModel::load(dir / files.at("classifier").get<std::string>());

    const auto n = index.embeddings_.count();
    if (manifest.at("count").get<std::size_t>() != n || index.categories_.size() != n ||
        index.clusters_.centroids.count() != index.config_.k ||
        index.classifier_.k() != index.config_.k ||
        index.desc_hash_.bits() != index.config_.bits) {
      throw FormatError(dir.string() + ": index components disagree in shape");
    }
    const auto bucket_names = files.at("buckets").get<std::vector<std::string>>();
    if (bucket_names.size() != index.config_.k) {
      throw FormatError(dir.string() + ": expected " + std::to_string(index.config_.k) +
                        " buckets");
    }
    index.buckets_.resize(index.config_.k);
    for (std::uint32_t id = 0; id < n; ++id) {
      if (index.categories_[id] >= index.config_.k) {
        throw FormatError(dir.string() + ": category out of range for item " +
                          std::to_string(id));
      }
      index.buckets_[index.categories_[id]].ids.push_back(id);
    }
    index.slot_.resize(n);
    for (std::size_t c = 0; c < index.config_.k; ++c) {
      auto& bucket = index.buckets_[c];
      bucket.codes = read_packed_codes(dir / bucket_names[c]);
      if (bucket.codes.count() != bucket.ids.size() || bucket.codes.bits() != index.config_.bits) {
        throw FormatError(dir.string() + ": bucket " + std::to_string(c) +
                          " does not match the assignments");
      }
      for (std::uint32_t r = 0; r < bucket.ids.size(); ++r) {
        index.slot_[bucket.ids[r]] = r;
      }
    }
    return index;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

}  // namespace coshc

// coshc: generate / build / search / eval front end.
//
// Exit codes: 0 ok, 1 usage or bad argument, 2 data/format/shape/IO error,
// 3 internal invariant violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "coshc/binary_io.hpp"
#include "coshc/error.hpp"
#include "coshc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace coshc;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void log_line(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

// ---- generate ----

struct GenerateArgs {
  SyntheticSpec spec;
  std::string out = ".";
};

void cmd_generate(const Globals& g, GenerateArgs args) {
  if (g.seed) args.spec.seed = *g.seed;
  args.spec.validate();
  const SyntheticCorpus syn = generate_synthetic(args.spec);
  const fs::path dir(args.out);
  fs::create_directories(dir);
  write_embeddings(syn.corpus.code, dir / "code.cosh");
  write_embeddings(syn.corpus.desc, dir / "desc.cosh");
  io::write_u32_array(dir / "latent_labels.u32", syn.latent_labels);

  nlohmann::json manifest;
  manifest["n_pairs"] = args.spec.n_pairs;
  manifest["dim"] = args.spec.dim;
  manifest["clusters"] = args.spec.n_latent_clusters;
  manifest["sigma"] = args.spec.noise_sigma;
  manifest["seed"] = args.spec.seed;
  manifest["code"] = "code.cosh";
  manifest["desc"] = "desc.cosh";
  manifest["latent_labels"] = "latent_labels.u32";
  // pair i is row i of both files
  manifest["pairing"] = "row";
  write_file(dir / "pairs.json", manifest.dump(2) + "\n");
  log_line(g, "wrote " + std::to_string(args.spec.n_pairs) + " pairs to " + dir.string());
}

// ---- build ----

struct BuildArgs {
  std::string code;
  std::string desc;
  std::string out;
  std::optional<std::size_t> k, bits, recall, hash_epochs, classifier_epochs;
};

void cmd_build(const Globals& g, const BuildArgs& args) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : PipelineConfig::load(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (!args.code.empty()) cfg.code_path = args.code;
  if (!args.desc.empty()) cfg.desc_path = args.desc;
  if (!args.out.empty()) cfg.index_dir = args.out;
  if (args.k) cfg.k = *args.k;
  if (args.bits) cfg.bits = *args.bits;
  if (args.recall) cfg.recall = *args.recall;
  if (args.hash_epochs) cfg.hash_epochs = *args.hash_epochs;
  if (args.classifier_epochs) cfg.classifier_epochs = *args.classifier_epochs;
  if (cfg.code_path.empty() || cfg.desc_path.empty() || cfg.index_dir.empty()) {
    throw InvalidArgument("build needs code, desc and output paths (flags or config)");
  }

  PairedCorpus corpus;
  try {
    corpus.code = read_embeddings(cfg.code_path);
    corpus.desc = read_embeddings(cfg.desc_path);
  } catch (const IoError& e) {
    throw IoError(std::string("corpus: ") + e.what());
  } catch (const FormatError& e) {
    throw FormatError(std::string("corpus: ") + e.what());
  }

  const BuildResult result =
      build_pipeline(corpus, cfg, [&](const std::string& msg) { log_line(g, msg); });
  write_build(result, corpus, cfg, cfg.index_dir);
  log_line(g, "index written to " + cfg.index_dir);
}

// ---- search ----

struct SearchArgs {
  std::string index;
  std::string query;
  std::optional<std::size_t> row;
  std::size_t n = 10;
  std::optional<std::size_t> recall;
};

void print_results(const QueryResult& result, std::size_t n) {
  const std::size_t shown = std::min(n, result.ranked.size());
  for (std::size_t r = 0; r < shown; ++r) {
    std::printf("%zu %u %.6f\n", r + 1, result.ranked[r].id, result.ranked[r].score);
  }
}

void cmd_search(const Globals& g, const SearchArgs& args) {
  const SearchIndex index = load_index(args.index);
  const EmbeddingMatrix queries = read_embeddings(args.query);
  if (queries.dim() != index.dim()) {
    throw ShapeError("query dim " + std::to_string(queries.dim()) + " != index dim " +
                     std::to_string(index.dim()));
  }
  if (queries.count() == 0) throw FormatError(args.query + ": no query rows");
  const std::size_t total = args.recall.value_or(index.config().recall);

  if (args.row) {
    if (*args.row >= queries.count()) {
      throw InvalidArgument("--row " + std::to_string(*args.row) + " out of range (" +
                            std::to_string(queries.count()) + " rows)");
    }
    print_results(search(index, queries.row(*args.row), total), args.n);
    return;
  }
  for (std::size_t q = 0; q < queries.count(); ++q) {
    if (queries.count() > 1) std::printf("# query %zu\n", q);
    print_results(search(index, queries.row(q), total), args.n);
  }
  log_line(g, "searched " + std::to_string(queries.count()) + " queries");
}

// ---- eval ----

struct EvalArgs {
  std::string index;
  std::string queries;
  std::string truth;
  std::string labels;
  std::string variant = "all";
  bool timing = false;
  std::size_t repeats = 5;
  std::optional<std::size_t> recall;
  std::string out;
};

void cmd_eval(const Globals& g, const EvalArgs& args) {
  std::vector<AblationVariant> variants;
  if (args.variant == "all") {
    variants.assign(std::begin(kAllVariants), std::end(kAllVariants));
  } else {
    variants.push_back(parse_variant(args.variant));
  }
  const SearchIndex index = load_index(args.index);

  QuerySet set;
  if (args.queries.empty() != args.truth.empty()) {
    throw InvalidArgument("--queries and --truth go together");
  }
  if (args.queries.empty()) {
    set = load_test_split(args.index, index);
  } else {
    set.queries = read_embeddings(args.queries);
    set.truth = io::read_u32_array(args.truth);
    if (!args.labels.empty()) set.labels = io::read_u32_array(args.labels);
  }

  const std::size_t total = args.recall.value_or(index.config().recall);
  const EvalReport report = evaluate(index, set, variants, total, args.timing, args.repeats);
  write_file(args.out + ".json", report.to_json().dump(2) + "\n");
  write_file(args.out + ".csv", report.to_csv());
  for (const auto& v : report.variants) {
    log_line(g, v.name + ": R@1 " + std::to_string(v.r1) + " R@5 " + std::to_string(v.r5) +
                    " R@10 " + std::to_string(v.r10));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CoSHC code search: clustering, hashing, recall and re-rank"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON pipeline config");
  app.add_option("--seed", g.seed, "global seed (overrides config)");
  app.add_flag("--quiet,-q", g.quiet, "no progress output");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic paired corpus");
  generate->add_option("--n", gen.spec.n_pairs, "pairs")->capture_default_str();
  generate->add_option("--dim", gen.spec.dim, "embedding dimension")->capture_default_str();
  generate->add_option("--clusters", gen.spec.n_latent_clusters, "latent clusters")
      ->capture_default_str();
  generate->add_option("--sigma", gen.spec.noise_sigma, "code/desc noise")->capture_default_str();
  generate->add_option("--out", gen.out, "output directory")->capture_default_str();

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "train and persist an index");
  build_cmd->add_option("--code", build.code, "code embeddings (COSH)");
  build_cmd->add_option("--desc", build.desc, "description embeddings (COSH)");
  build_cmd->add_option("--out", build.out, "index directory");
  build_cmd->add_option("--k", build.k, "categories");
  build_cmd->add_option("--bits", build.bits, "hash code length");
  build_cmd->add_option("--recall", build.recall, "default total recall N");
  build_cmd->add_option("--hash-epochs", build.hash_epochs);
  build_cmd->add_option("--classifier-epochs", build.classifier_epochs);

  SearchArgs sa;
  auto* search_cmd = app.add_subcommand("search", "query a persisted index");
  search_cmd->add_option("--index", sa.index, "index directory")->required();
  search_cmd->add_option("--query", sa.query, "query embeddings (COSH)")->required();
  search_cmd->add_option("--row", sa.row, "only this query row");
  search_cmd->add_option("--n", sa.n, "results printed per query")->capture_default_str();
  search_cmd->add_option("--recall", sa.recall, "total recall N (default: index setting)");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "success rates and timings");
  eval_cmd->add_option("--index", ea.index, "index directory")->required();
  eval_cmd->add_option("--queries", ea.queries, "query embeddings (default: held-out split)");
  eval_cmd->add_option("--truth", ea.truth, "u32 answer id per query");
  eval_cmd->add_option("--labels", ea.labels, "u32 true category per query");
  eval_cmd->add_option("--variant", ea.variant, "full|wo|one|ideal|all")->capture_default_str();
  eval_cmd->add_flag("--timing", ea.timing, "also time baseline and CoSHC stages");
  eval_cmd->add_option("--repeats", ea.repeats, "timing repeats")->capture_default_str();
  eval_cmd->add_option("--recall", ea.recall, "total recall N (default: index setting)");
  eval_cmd->add_option("--out", ea.out, "report prefix (.json and .csv)")->required();

  for (auto* sub : {generate, build_cmd, search_cmd, eval_cmd}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (generate->parsed()) cmd_generate(g, gen);
    if (build_cmd->parsed()) cmd_build(g, build);
    if (search_cmd->parsed()) cmd_search(g, sa);
    if (eval_cmd->parsed()) cmd_eval(g, ea);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

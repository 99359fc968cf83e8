#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "coshc/binary_io.hpp"
#include "coshc/error.hpp"
#include "coshc/search_engine.hpp"
#include "index_fixture.hpp"

using namespace coshc;
using coshc::testing::TempDir;

namespace {

std::uint32_t bit_loop_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                                std::size_t bits) {
  std::uint32_t d = 0;
  for (std::size_t j = 0; j < bits; ++j) {
    d += ((a[j / 64] >> (j % 64)) & 1u) != ((b[j / 64] >> (j % 64)) & 1u);
  }
  return d;
}

// Per category: sort the whole bucket by (distance, id) and keep the first R_i.
std::vector<std::vector<std::uint32_t>> full_sort_recall(const SearchIndex& index,
                                                         std::span<const std::uint64_t> q,
                                                         const std::vector<std::size_t>& budgets) {
  std::vector<std::vector<std::uint32_t>> out;
  for (std::size_t c = 0; c < index.buckets().size(); ++c) {
    const auto& b = index.buckets()[c];
    std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
    for (std::size_t r = 0; r < b.ids.size(); ++r) {
      all.push_back({bit_loop_distance(b.codes.row(r), q, index.config().bits), b.ids[r]});
    }
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> keep;
    for (std::size_t r = 0; r < std::min(budgets[c], all.size()); ++r) keep.push_back(all[r].second);
    out.push_back(keep);
  }
  return out;
}

std::vector<ScoredItem> naive_rank(const EmbeddingMatrix& corpus, std::span<const float> q,
                                   std::vector<std::uint32_t> ids) {
  std::vector<ScoredItem> out;
  for (auto id : ids) out.push_back({id, coshc::testing::naive_cosine(q, corpus.row(id))});
  std::stable_sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  return out;
}

RecallAllocation flat(std::size_t k, std::size_t each, std::size_t total) {
  RecallAllocation a;
  a.budgets.assign(k, each);
  a.total = total;
  return a;
}

std::vector<std::uint64_t> random_code(std::size_t words, std::mt19937_64& rng,
                                       std::size_t bits) {
  std::vector<std::uint64_t> q(words);
  for (auto& w : q) w = rng();
  if (bits % 64) q.back() &= (std::uint64_t{1} << (bits % 64)) - 1;
  return q;
}

class SearchEngineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fixture_ = new coshc::testing::IndexFixture(coshc::testing::random_index(2000, 24, 10, 128, 42));
  }
  static void TearDownTestSuite() {
    delete fixture_;
    fixture_ = nullptr;
  }
  static coshc::testing::IndexFixture* fixture_;
};

coshc::testing::IndexFixture* SearchEngineTest::fixture_ = nullptr;

}  // namespace

TEST(Hamming, Identities) {
  std::vector<std::uint64_t> a = {0x0123456789abcdefULL, 0xfedcba9876543210ULL};
  std::vector<std::uint64_t> na = {~a[0], ~a[1]};
  EXPECT_EQ(hamming_distance(a, a), 0u);
  EXPECT_EQ(hamming_distance(a, na), 128u);
  std::vector<std::uint64_t> shorter = {1};
  EXPECT_THROW((void)hamming_distance(a, shorter), ShapeError);
}

TEST(Hamming, MatchesBitLoopAndDotIdentity) {
  std::mt19937_64 rng(1);
  for (std::size_t bits : {37u, 64u, 128u, 200u}) {
    const std::size_t words = (bits + 63) / 64;
    for (int t = 0; t < 500; ++t) {
      auto a = random_code(words, rng, bits);
      auto b = random_code(words, rng, bits);
      const auto h = hamming_distance(a, b);
      EXPECT_EQ(h, bit_loop_distance(a, b, bits));
      long dot = 0;
      for (std::size_t j = 0; j < bits; ++j) {
        const int x = ((a[j / 64] >> (j % 64)) & 1u) ? 1 : -1;
        const int y = ((b[j / 64] >> (j % 64)) & 1u) ? 1 : -1;
        dot += x * y;
      }
      EXPECT_EQ(2 * static_cast<long>(h), static_cast<long>(bits) - dot);
    }
  }
}

TEST(Cosine, ZeroVectorAndScalarOracle) {
  std::vector<float> z(4, 0.0f), a = {1, 2, 3, 4}, b = {-1, 0.5f, 2, 0};
  EXPECT_EQ(cosine(z, a), 0.0);
  EXPECT_NEAR(cosine(a, b), coshc::testing::naive_cosine(a, b), 1e-15);
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-15);
}

TEST_F(SearchEngineTest, BucketsPartitionTheCorpus) {
  const auto& index = fixture_->index;
  std::size_t total = 0;
  std::vector<int> seen(index.size(), 0);
  for (std::size_t c = 0; c < index.buckets().size(); ++c) {
    const auto& b = index.buckets()[c];
    EXPECT_EQ(b.ids.size(), b.codes.count());
    EXPECT_TRUE(std::is_sorted(b.ids.begin(), b.ids.end()));
    total += b.ids.size();
    for (auto id : b.ids) {
      ++seen[id];
      EXPECT_EQ(index.categories()[id], c);
    }
  }
  EXPECT_EQ(total, index.size());
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

TEST_F(SearchEngineTest, StoredCodesComeFromCodeHash) {
  const auto& index = fixture_->index;
  auto codes = binarize(index.code_hash(), fixture_->corpus);
  for (std::uint32_t id = 0; id < index.size(); ++id) {
    auto stored = index.code_of(id);
    EXPECT_TRUE(std::equal(stored.begin(), stored.end(), codes.row(id).begin()));
    EXPECT_EQ(hamming_distance(stored, codes.row(id)), 0u);
  }
  EXPECT_EQ(index.categories(), assign(index.clusters(), fixture_->corpus));
}

TEST_F(SearchEngineTest, RecallMatchesFullSortOracle) {
  const auto& index = fixture_->index;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> budget(1, 40);
  for (int q = 0; q < 200; ++q) {
    auto code = random_code(2, rng, 128);
    std::vector<std::size_t> budgets(10);
    for (auto& b : budgets) b = budget(rng);
    RecallAllocation alloc{budgets, 1000};
    auto got = recall(index, code, alloc);
    auto want = full_sort_recall(index, code, budgets);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < 10; ++c) {
      ASSERT_EQ(got.per_category[c], want[c].size());
      for (std::size_t r = 0; r < want[c].size(); ++r, ++pos) {
        EXPECT_EQ(got.ids[pos], want[c][r]);
        EXPECT_EQ(got.distances[pos], hamming_distance(index.code_of(got.ids[pos]), code));
      }
    }
    EXPECT_EQ(pos, got.ids.size());
  }
}

TEST_F(SearchEngineTest, LargeBudgetsReturnEverything) {
  const auto& index = fixture_->index;
  std::mt19937_64 rng(8);
  auto code = random_code(2, rng, 128);
  auto got = recall(index, code, flat(10, 5000, 50000));
  std::vector<std::uint32_t> ids = got.ids;
  std::sort(ids.begin(), ids.end());
  std::vector<std::uint32_t> all(index.size());
  std::iota(all.begin(), all.end(), 0u);
  EXPECT_EQ(ids, all);
}

TEST_F(SearchEngineTest, DominatingAllocationRecallsSuperset) {
  const auto& index = fixture_->index;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> budget(1, 30), extra(0, 10);
  for (int t = 0; t < 50; ++t) {
    auto code = random_code(2, rng, 128);
    RecallAllocation small = flat(10, 1, 1000), big = flat(10, 1, 1000);
    for (std::size_t c = 0; c < 10; ++c) {
      small.budgets[c] = budget(rng);
      big.budgets[c] = small.budgets[c] + extra(rng);
    }
    auto a = recall(index, code, small).ids;
    auto b = recall(index, code, big).ids;
    std::set<std::uint32_t> bs(b.begin(), b.end());
    for (auto id : a) EXPECT_TRUE(bs.count(id)) << id;
  }
}

TEST_F(SearchEngineTest, OwnCodeIsRecalledWhenUnique) {
  const auto& index = fixture_->index;
  std::size_t checked = 0;
  for (const auto& b : index.buckets()) {
    for (std::size_t r = 0; r < b.ids.size() && checked < 50; ++r) {
      bool unique = true;
      for (std::size_t s = 0; s < b.ids.size() && unique; ++s) {
        unique = s == r || hamming_distance(b.codes.row(s), b.codes.row(r)) != 0;
      }
      if (!unique) continue;
      auto got = recall(index, b.codes.row(r), flat(10, 1, 100));
      EXPECT_NE(std::find(got.ids.begin(), got.ids.end(), b.ids[r]), got.ids.end());
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST_F(SearchEngineTest, GlobalRecallMatchesFullSort) {
  const auto& index = fixture_->index;
  std::mt19937_64 rng(10);
  for (int t = 0; t < 20; ++t) {
    auto code = random_code(2, rng, 128);
    std::vector<std::pair<std::uint32_t, std::uint32_t>> all;
    for (std::uint32_t id = 0; id < index.size(); ++id) {
      all.push_back({bit_loop_distance(index.code_of(id), code, 128), id});
    }
    std::sort(all.begin(), all.end());
    auto got = recall_global(index, code, 100);
    ASSERT_EQ(got.ids.size(), 100u);
    std::vector<std::uint32_t> want;
    for (std::size_t r = 0; r < 100; ++r) want.push_back(all[r].second);
    std::vector<std::uint32_t> ids = got.ids;
    std::sort(ids.begin(), ids.end());
    std::sort(want.begin(), want.end());
    EXPECT_EQ(ids, want);
  }
}

TEST_F(SearchEngineTest, RerankMatchesNaiveSort) {
  const auto& index = fixture_->index;
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::uint32_t> pick(0, 1999);
  auto queries = coshc::testing::random_embeddings(200, 24, 12);
  for (std::size_t q = 0; q < 200; ++q) {
    std::set<std::uint32_t> uniq;
    while (uniq.size() < 60) uniq.insert(pick(rng));
    std::vector<std::uint32_t> cands(uniq.begin(), uniq.end());
    std::shuffle(cands.begin(), cands.end(), rng);
    auto got = rerank(index, queries.row(q), cands);
    auto want = naive_rank(fixture_->corpus, queries.row(q), cands);
    ASSERT_EQ(got.ranked.size(), want.size());
    for (std::size_t r = 0; r < want.size(); ++r) {
      EXPECT_EQ(got.ranked[r].id, want[r].id);
      EXPECT_NEAR(got.ranked[r].score, want[r].score, 1e-12);
    }
  }
}

TEST_F(SearchEngineTest, RerankTiesAndErrors) {
  const auto& index = fixture_->index;
  std::vector<float> q(fixture_->corpus.row(5).begin(), fixture_->corpus.row(5).end());
  const std::vector<std::uint32_t> one = {5};
  auto single = rerank(index, q, one);
  ASSERT_EQ(single.ranked.size(), 1u);
  EXPECT_EQ(single.ranked[0].id, 5u);
  EXPECT_NEAR(single.ranked[0].score, 1.0, 1e-6);

  const std::vector<std::uint32_t> dup_scores = {9, 3};
  std::vector<float> zero(24, 0.0f);
  auto tied = rerank(index, zero, dup_scores);
  EXPECT_EQ(tied.ranked[0].id, 3u);
  EXPECT_EQ(tied.ranked[1].id, 9u);

  const std::vector<std::uint32_t> bad = {1, 5000};
  EXPECT_THROW((void)rerank(index, q, bad), InvalidArgument);
  std::vector<float> wrong_dim(23, 0.0f);
  EXPECT_THROW((void)rerank(index, wrong_dim, one), ShapeError);
}

TEST_F(SearchEngineTest, SearchComposesStages) {
  const auto& index = fixture_->index;
  auto queries = coshc::testing::random_embeddings(20, 24, 13);
  for (std::size_t q = 0; q < 20; ++q) {
    auto result = search(index, queries.row(q), 100);
    auto proba = predict_proba(index.classifier(), queries.row(q));
    auto alloc = allocate_recall(proba, 100);
    EXPECT_EQ(result.budgets, alloc.budgets);
    auto code = binarize(index.desc_hash(), queries.row(q));
    auto recalled = recall(index, code.row(0), alloc);
    auto expected = rerank(index, queries.row(q), recalled.ids);
    EXPECT_EQ(result.ranked, expected.ranked);
    EXPECT_LE(result.ranked.size(), alloc.sum());
    for (std::size_t r = 1; r < result.ranked.size(); ++r) {
      EXPECT_GE(result.ranked[r - 1].score, result.ranked[r].score);
    }
    auto again = search(index, queries.row(q), 100);
    EXPECT_EQ(again.ranked, result.ranked);
  }
}

TEST_F(SearchEngineTest, CoveringBudgetsEqualExactSearch) {
  const auto& index = fixture_->index;
  auto queries = coshc::testing::random_embeddings(10, 24, 14);
  for (std::size_t q = 0; q < 10; ++q) {
    auto result = search_with_allocation(index, queries.row(q), flat(10, 2000, 20000));
    auto exact = exact_search(index.embeddings(), queries.row(q));
    EXPECT_EQ(result.ranked, exact);
    std::vector<std::uint32_t> all(index.size());
    std::iota(all.begin(), all.end(), 0u);
    auto want = naive_rank(fixture_->corpus, queries.row(q), all);
    ASSERT_EQ(exact.size(), want.size());
    for (std::size_t r = 0; r < want.size(); ++r) EXPECT_EQ(exact[r].id, want[r].id);
  }
}

TEST_F(SearchEngineTest, RecalledTruthKeepsItsExactRank) {
  const auto& index = fixture_->index;
  auto queries = coshc::testing::random_embeddings(30, 24, 15);
  for (std::size_t q = 0; q < 30; ++q) {
    auto result = search(index, queries.row(q), 100);
    std::vector<std::uint32_t> ids;
    for (const auto& s : result.ranked) ids.push_back(s.id);
    auto want = naive_rank(fixture_->corpus, queries.row(q), ids);
    for (std::size_t r = 0; r < want.size(); ++r) EXPECT_EQ(result.ranked[r].id, want[r].id);
  }
}

TEST(BuildIndex, SmallCorpusAndErrors) {
  auto f = coshc::testing::random_index(100, 8, 10, 64, 3);
  std::size_t total = 0;
  for (const auto& b : f.index.buckets()) total += b.ids.size();
  EXPECT_EQ(total, 100u);

  std::mt19937_64 rng(1);
  auto wrong_bits = HashingModel::random(8, 32, rng);
  EXPECT_THROW((void)build_index(f.corpus, f.index.clusters(), wrong_bits, wrong_bits,
                                 f.index.classifier(), {.k = 10, .bits = 64, .recall = 100}),
               ShapeError);
  EXPECT_THROW((void)build_index(f.corpus, f.index.clusters(), f.index.code_hash(),
                                 f.index.desc_hash(), f.index.classifier(),
                                 {.k = 10, .bits = 64, .recall = 10}),
               InvalidArgument);
  auto wrong_dim = HashingModel::random(9, 64, rng);
  EXPECT_THROW((void)build_index(f.corpus, f.index.clusters(), wrong_dim, f.index.desc_hash(),
                                 f.index.classifier(), {.k = 10, .bits = 64, .recall = 100}),
               ShapeError);
}

TEST(PersistedIndex, RoundTripAndDeterminism) {
  TempDir a, b;
  auto f = coshc::testing::random_index(300, 12, 5, 70, 4);
  auto g = coshc::testing::random_index(300, 12, 5, 70, 4);
  save_index(f.index, a.path());
  save_index(g.index, b.path());
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    EXPECT_EQ(io::file_checksum(entry.path()), io::file_checksum(b.path() / rel)) << rel;
  }

  auto loaded = load_index(a.path());
  EXPECT_EQ(loaded.size(), 300u);
  EXPECT_EQ(loaded.categories(), f.index.categories());
  EXPECT_TRUE(loaded.embeddings().bit_equal(f.index.embeddings()));
  EXPECT_TRUE(loaded.code_hash() == f.index.code_hash());
  EXPECT_TRUE(loaded.desc_hash() == f.index.desc_hash());
  EXPECT_TRUE(loaded.classifier() == f.index.classifier());
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(loaded.buckets()[c].ids, f.index.buckets()[c].ids);
    EXPECT_EQ(loaded.buckets()[c].codes, f.index.buckets()[c].codes);
  }
  auto q = coshc::testing::random_embeddings(3, 12, 99);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(search(loaded, q.row(i), 50).ranked, search(f.index, q.row(i), 50).ranked);
  }
}

TEST(PersistedIndex, DetectsCorruption) {
  TempDir dir;
  auto f = coshc::testing::random_index(200, 8, 4, 64, 5);
  {
    std::ofstream(dir / "notes.txt") << "hello\n";
  }
  const std::vector<std::string> extra = {"notes.txt"};
  save_index(f.index, dir.path(), extra);
  EXPECT_NO_THROW((void)load_index(dir.path()));

  {
    std::fstream io(dir / "bucket_001.cosb", std::ios::in | std::ios::out | std::ios::binary);
    io.seekp(30);
    io.put('\x5a');
  }
  EXPECT_THROW((void)load_index(dir.path()), FormatError);

  save_index(f.index, dir.path(), extra);
  EXPECT_NO_THROW((void)load_index(dir.path()));
  {
    std::ofstream(dir / "notes.txt") << "tampered\n";
  }
  EXPECT_THROW((void)load_index(dir.path()), FormatError);

  std::filesystem::remove(dir / "notes.txt");
  EXPECT_THROW((void)load_index(dir.path()), IoError);
  EXPECT_THROW((void)load_index(dir / "missing"), IoError);
}

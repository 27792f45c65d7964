#include "aoiseg/membank.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aoiseg/error.hpp"
#include "aoiseg/grid.hpp"
#include "aoiseg/io.hpp"
#include "aoiseg/kernels.hpp"
#include "test_util.hpp"

namespace aoiseg {
namespace {

using ::aoiseg::testing::code_of;
using ::aoiseg::testing::random_vector;
using ::aoiseg::testing::TempDir;

std::vector<std::uint8_t> zero_value(std::uint32_t pixels,
                                     std::uint16_t classes) {
  return std::vector<std::uint8_t>(
      patch_value_stride(pixels, classes), 0);
}

MemoryBank random_bank(std::uint32_t m, std::uint32_t d, std::uint64_t seed,
                       std::uint32_t pixels = 4, std::uint16_t classes = 2) {
  BankBuilder builder(d, pixels, classes);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> emb(d);
  std::vector<std::uint8_t> value(patch_value_stride(pixels, classes));
  for (std::uint32_t j = 0; j < m; ++j) {
    for (float& v : emb) v = dist(rng);
    for (auto& b : value) b = static_cast<std::uint8_t>(rng() & 0xff);
    builder.add(emb, value, "img_" + std::to_string(j / 64), j % 64);
  }
  return std::move(builder).build();
}

// Independent full-scan oracle: plain sequential f64 dots over explicitly
// normalized vectors, stable-sorted by (similarity desc, index asc).
std::vector<NeighborSet> oracle_search(const MemoryBank& bank,
                                       std::span<const float> queries,
                                       std::uint32_t k) {
  const std::uint32_t d = bank.dim();
  const std::size_t nq = queries.size() / d;
  std::vector<NeighborSet> out(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    std::vector<double> qn(d);
    double norm2 = 0.0;
    for (std::uint32_t i = 0; i < d; ++i) {
      const double v = queries[q * d + i];
      norm2 += v * v;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::uint32_t i = 0; i < d; ++i) {
      qn[i] = static_cast<double>(
          static_cast<float>(queries[q * d + i] * inv));
    }
    std::vector<std::pair<float, std::uint32_t>> sims(bank.size());
    for (std::uint32_t j = 0; j < bank.size(); ++j) {
      const auto key = bank.key(j);
      double dot = 0.0;
      for (std::uint32_t i = 0; i < d; ++i) {
        dot += static_cast<double>(key[i]) * qn[i];
      }
      dot = std::clamp(dot, -1.0, 1.0);
      sims[j] = {static_cast<float>(dot), j};
    }
    std::stable_sort(sims.begin(), sims.end(),
                     [](const auto& a, const auto& b) {
                       if (a.first != b.first) return a.first > b.first;
                       return a.second < b.second;
                     });
    for (std::uint32_t r = 0; r < k; ++r) {
      out[q].indices.push_back(sims[r].second);
      out[q].similarities.push_back(sims[r].first);
    }
  }
  return out;
}

TEST(Kernels, BackendMatchesScalarBitForBit) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
  for (const std::size_t d : {1u, 7u, 8u, 9u, 64u, 129u, 384u}) {
    std::vector<float> row(d);
    std::vector<double> query(d);
    for (auto& v : row) v = dist(rng);
    for (auto& v : query) v = static_cast<double>(dist(rng));
    const double scalar = detail::dot_scalar(row.data(), query.data(), d);
    const double dispatched = detail::dot(row.data(), query.data(), d);
    EXPECT_EQ(scalar, dispatched) << "d=" << d;

    double out4[4];
    std::vector<double> q4(4 * d);
    for (auto& v : q4) v = static_cast<double>(dist(rng));
    detail::dot_q4(row.data(), q4.data(), d, d, out4);
    for (int t = 0; t < 4; ++t) {
      EXPECT_EQ(out4[t], detail::dot_scalar(row.data(), q4.data() + t * d, d));
    }
    std::vector<float> rows(4 * d);
    for (auto& v : rows) v = dist(rng);
    detail::dot_r4(rows.data(), rows.data() + d, rows.data() + 2 * d,
                   rows.data() + 3 * d, query.data(), d, out4);
    for (int t = 0; t < 4; ++t) {
      EXPECT_EQ(out4[t],
                detail::dot_scalar(rows.data() + t * d, query.data(), d));
    }
  }
}

TEST(BankBuilder, NormalizesKeysOnAdd) {
  BankBuilder builder(2, 4, 1);
  const float emb[2] = {3.0f, 4.0f};
  builder.add(emb, zero_value(4, 1), "a", 0);
  const MemoryBank bank = std::move(builder).build();
  EXPECT_FLOAT_EQ(bank.key(0)[0], 0.6f);
  EXPECT_FLOAT_EQ(bank.key(0)[1], 0.8f);
}

TEST(BankBuilder, RejectsZeroKeyNamingProvenance) {
  BankBuilder builder(3, 4, 1);
  const float zero[3] = {0.0f, 0.0f, 0.0f};
  try {
    builder.add(zero, zero_value(4, 1), "scene_0042", 17);
    FAIL() << "expected degenerate_key";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate_key);
    EXPECT_NE(std::string(e.what()).find("scene_0042"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(BankBuilder, RejectsNonFiniteAndShapeMismatch) {
  BankBuilder builder(3, 4, 1);
  const float nan3[3] = {1.0f, std::numeric_limits<float>::infinity(), 0.0f};
  EXPECT_EQ(code_of([&] { builder.add(nan3, zero_value(4, 1), "x", 0); }),
            Errc::non_finite_value);
  const float ok2[2] = {1.0f, 2.0f};
  EXPECT_EQ(code_of([&] { builder.add(ok2, zero_value(4, 1), "x", 0); }),
            Errc::dimension_mismatch);
  const float ok3[3] = {1.0f, 2.0f, 3.0f};
  const std::vector<std::uint8_t> short_value(0);
  EXPECT_EQ(code_of([&] { builder.add(ok3, short_value, "x", 0); }),
            Errc::dimension_mismatch);
}

TEST(BankBuilder, EntryCountArithmetic) {
  // 437 images x 1024 patches stored one by one.
  BankBuilder builder(4, 4, 1);
  const float emb[4] = {1.0f, 0.0f, 0.0f, 0.0f};
  const auto value = zero_value(4, 1);
  for (std::uint32_t img = 0; img < 437; ++img) {
    const std::string id = "img_" + std::to_string(img);
    for (std::uint32_t p = 0; p < 1024; ++p) {
      builder.add(emb, value, id, p);
    }
  }
  const MemoryBank bank = std::move(builder).build();
  EXPECT_EQ(bank.size(), 447488u);
}

TEST(MemoryBank, EmptyBankIsValidButUnsearchable) {
  BankBuilder builder(4, 4, 1);
  const MemoryBank bank = std::move(builder).build();
  EXPECT_EQ(bank.size(), 0u);
  const auto q = random_vector(4, 30);
  EXPECT_EQ(code_of([&] { bank.search_exact(q, 1); }), Errc::empty_bank);
}

TEST(SearchExact, SelfRetrievalAtRankOne) {
  const MemoryBank bank = random_bank(257, 16, 31);
  for (const std::uint32_t j : {0u, 17u, 101u, 256u}) {
    std::vector<float> q(bank.key(j).begin(), bank.key(j).end());
    const auto res = bank.search_exact(q, 1);
    ASSERT_EQ(res[0].indices.size(), 1u);
    EXPECT_EQ(res[0].indices[0], j);
    EXPECT_GE(res[0].similarities[0], 1.0f - 1e-5f);
    EXPECT_LE(res[0].similarities[0], 1.0f);
  }
}

TEST(SearchExact, HandComputedTwoKeyBank) {
  BankBuilder builder(2, 4, 1);
  const float e0[2] = {1.0f, 0.0f};
  const float e1[2] = {0.0f, 1.0f};
  builder.add(e0, zero_value(4, 1), "a", 0);
  builder.add(e1, zero_value(4, 1), "a", 1);
  const MemoryBank bank = std::move(builder).build();
  const float q[2] = {1.0f, 1.0f};
  const auto res = bank.search_exact(std::span<const float>(q, 2), 2);
  ASSERT_EQ(res[0].indices.size(), 2u);
  // Both similarities are 1/sqrt(2); the tie goes to index 0.
  EXPECT_EQ(res[0].indices[0], 0u);
  EXPECT_EQ(res[0].indices[1], 1u);
  EXPECT_NEAR(res[0].similarities[0], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_EQ(res[0].similarities[0], res[0].similarities[1]);
}

TEST(SearchExact, MatchesOracleWithTiesPlanted) {
  for (const std::uint32_t d : {16u, 64u}) {
    BankBuilder builder(d, 4, 1);
    std::mt19937_64 rng(40 + d);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> emb(d);
    const auto value = zero_value(4, 1);
    std::vector<std::vector<float>> rows;
    for (std::uint32_t j = 0; j < 500; ++j) {
      if (j % 97 == 5 && !rows.empty()) {
        emb = rows[j / 2];  // exact duplicate forces a similarity tie
      } else {
        for (float& v : emb) v = dist(rng);
      }
      rows.push_back(emb);
      builder.add(emb, value, "img", j);
    }
    const MemoryBank bank = std::move(builder).build();
    const auto queries = random_vector(20 * d, 41 + d);
    for (const std::uint32_t k : {1u, 5u, 23u}) {
      const auto got = bank.search_exact(queries, k);
      const auto want = oracle_search(bank, queries, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t q = 0; q < got.size(); ++q) {
        EXPECT_EQ(got[q].indices, want[q].indices) << "d=" << d << " k=" << k;
        for (std::size_t r = 0; r < k; ++r) {
          EXPECT_NEAR(got[q].similarities[r], want[q].similarities[r], 1e-6);
        }
      }
    }
  }
}

TEST(SearchExact, TopKMonotone) {
  const MemoryBank bank = random_bank(300, 24, 50);
  const auto queries = random_vector(5 * 24, 51);
  const auto k5 = bank.search_exact(queries, 5);
  const auto k6 = bank.search_exact(queries, 6);
  for (std::size_t q = 0; q < k5.size(); ++q) {
    for (std::size_t r = 0; r < 5; ++r) {
      EXPECT_EQ(k5[q].indices[r], k6[q].indices[r]);
    }
  }
}

TEST(SearchExact, QueryScaleInvariance) {
  const MemoryBank bank = random_bank(200, 16, 52);
  auto queries = random_vector(8 * 16, 53);
  const auto base = bank.search_exact(queries, 7);
  for (float& v : queries) v *= 37.5f;
  const auto scaled = bank.search_exact(queries, 7);
  for (std::size_t q = 0; q < base.size(); ++q) {
    EXPECT_EQ(base[q].indices, scaled[q].indices);
  }
}

TEST(SearchExact, ThreadCountDoesNotChangeResults) {
  const MemoryBank bank = random_bank(1000, 32, 54);
  const auto queries = random_vector(37 * 32, 55);
  const auto one = bank.search_exact(queries, 9, 1);
  const auto four = bank.search_exact(queries, 9, 4);
  EXPECT_EQ(one, four);
}

TEST(SearchExact, ErrorVariants) {
  const MemoryBank bank = random_bank(10, 8, 56);
  const auto q = random_vector(8, 57);
  EXPECT_EQ(code_of([&] { bank.search_exact(q, 11); }),
            Errc::insufficient_entries);
  EXPECT_EQ(code_of([&] { bank.search_exact(q, 0); }),
            Errc::insufficient_entries);
  const std::vector<float> zero(8, 0.0f);
  EXPECT_EQ(code_of([&] { bank.search_exact(zero, 1); }),
            Errc::degenerate_query);
  const std::vector<float> ragged(7, 1.0f);
  EXPECT_EQ(code_of([&] { bank.search_exact(ragged, 1); }),
            Errc::dimension_mismatch);
}

TEST(SearchPartitioned, FullProbeEqualsExact) {
  MemoryBank bank = random_bank(800, 16, 60);
  bank.build_partition_index(0, 7);
  const std::uint32_t nlist = bank.partition().nlist;
  const auto queries = random_vector(25 * 16, 61);
  const auto exact = bank.search_exact(queries, 6);
  const auto part = bank.search_partitioned(queries, 6, nlist);
  EXPECT_EQ(exact, part);
}

TEST(SearchPartitioned, StoredKeyFoundAtAnyNprobe) {
  MemoryBank bank = random_bank(600, 24, 62);
  bank.build_partition_index(24, 8);
  for (const std::uint32_t j : {3u, 99u, 471u}) {
    std::vector<float> q(bank.key(j).begin(), bank.key(j).end());
    for (const std::uint32_t nprobe : {1u, 2u, 8u}) {
      const auto res = bank.search_partitioned(q, 1, nprobe);
      ASSERT_FALSE(res[0].indices.empty());
      EXPECT_EQ(res[0].indices[0], j) << "nprobe=" << nprobe;
    }
  }
}

TEST(SearchPartitioned, RecallOnClusteredKeys) {
  // 32 well-separated clusters on the sphere.
  const std::uint32_t d = 16;
  const std::uint32_t m = 10000;
  std::mt19937_64 rng(63);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<std::vector<float>> centers(32, std::vector<float>(d));
  for (auto& c : centers) {
    for (float& v : c) v = gauss(rng);
  }
  BankBuilder builder(d, 4, 1);
  const auto value = zero_value(4, 1);
  std::vector<float> emb(d);
  for (std::uint32_t j = 0; j < m; ++j) {
    const auto& c = centers[j % centers.size()];
    for (std::uint32_t i = 0; i < d; ++i) {
      emb[i] = c[i] + 0.05f * gauss(rng);
    }
    builder.add(emb, value, "img", j);
  }
  MemoryBank bank = std::move(builder).build();
  bank.build_partition_index(0, 9);  // nlist = ceil(sqrt(10000)) = 100
  EXPECT_EQ(bank.partition().nlist, 100u);

  std::vector<float> queries(100 * d);
  for (std::uint32_t q = 0; q < 100; ++q) {
    const auto& c = centers[q % centers.size()];
    for (std::uint32_t i = 0; i < d; ++i) {
      queries[q * d + i] = c[i] + 0.05f * gauss(rng);
    }
  }
  const auto exact = bank.search_exact(queries, 5);
  const auto approx = bank.search_partitioned(queries, 5, 4);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t q = 0; q < exact.size(); ++q) {
    for (const auto idx : exact[q].indices) {
      ++total;
      hits += std::count(approx[q].indices.begin(), approx[q].indices.end(),
                         idx);
    }
  }
  const double recall = static_cast<double>(hits) / total;
  EXPECT_GE(recall, 0.95) << "recall@5 = " << recall;
}

TEST(SearchPartitioned, RecallNonDecreasingInNprobe) {
  MemoryBank bank = random_bank(2000, 12, 64);
  bank.build_partition_index(40, 10);
  const auto queries = random_vector(15 * 12, 65);
  const auto exact = bank.search_exact(queries, 5);
  double prev = -1.0;
  for (const std::uint32_t nprobe : {1u, 5u, 10u, 20u, 40u}) {
    const auto approx = bank.search_partitioned(queries, 5, nprobe);
    std::size_t hits = 0;
    std::size_t total = 0;
    for (std::size_t q = 0; q < exact.size(); ++q) {
      for (const auto idx : exact[q].indices) {
        ++total;
        hits += std::count(approx[q].indices.begin(),
                           approx[q].indices.end(), idx);
      }
    }
    const double recall = static_cast<double>(hits) / total;
    EXPECT_GE(recall, prev);
    prev = recall;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(SearchPartitioned, RequiresIndex) {
  const MemoryBank bank = random_bank(50, 8, 66);
  const auto q = random_vector(8, 67);
  EXPECT_EQ(code_of([&] { bank.search_partitioned(q, 1, 1); }),
            Errc::not_indexed);
}

TEST(Persistence, RoundTripIsBitIdentical) {
  TempDir dir("bank");
  MemoryBank bank = random_bank(333, 20, 70, 16, 3);
  bank.build_partition_index(12, 11);
  const std::string path = dir.file("b.aoib");
  bank.save(path);
  const MemoryBank back = MemoryBank::load(path);
  EXPECT_EQ(bank, back);
}

TEST(Persistence, LoadedBankSearchesIdentically) {
  TempDir dir("bank_search");
  MemoryBank bank = random_bank(400, 24, 71);
  bank.build_partition_index(20, 12);
  const std::string path = dir.file("b.aoib");
  bank.save(path);
  const MemoryBank back = MemoryBank::load(path);
  const auto queries = random_vector(11 * 24, 72);
  EXPECT_EQ(bank.search_exact(queries, 5), back.search_exact(queries, 5));
  EXPECT_EQ(bank.search_partitioned(queries, 5, 4),
            back.search_partitioned(queries, 5, 4));
}

TEST(Persistence, DetectsCorruptedPayload) {
  TempDir dir("bank_crc");
  const MemoryBank bank = random_bank(64, 8, 73);
  const std::string path = dir.file("b.aoib");
  bank.save(path);
  auto bytes = detail::read_file(path);
  bytes[bytes.size() - 3] ^= 0x40;
  detail::write_file(path, bytes);
  EXPECT_EQ(code_of([&] { MemoryBank::load(path); }),
            Errc::checksum_mismatch);
}

TEST(Persistence, DetectsBadMagic) {
  TempDir dir("bank_magic");
  const MemoryBank bank = random_bank(8, 4, 74);
  const std::string path = dir.file("b.aoib");
  bank.save(path);
  auto bytes = detail::read_file(path);
  bytes[1] = 'X';
  detail::write_file(path, bytes);
  EXPECT_EQ(code_of([&] { MemoryBank::load(path); }), Errc::format_error);
}

TEST(EstimateMemory, ExactByteArithmetic) {
  BankBuilder builder(4, 4, 2);
  const float emb[4] = {1.0f, 0.0f, 0.0f, 0.0f};
  builder.add(emb, zero_value(4, 2), "ab", 0);
  const MemoryBank bank = std::move(builder).build();
  // keys 4*4 = 16, values ceil(4*2/8) = 1, provenance = 2 id bytes + 8.
  EXPECT_EQ(bank.estimate_memory(), 16u + 1u + 2u + 8u);

  BankBuilder empty(4, 4, 2);
  EXPECT_EQ(std::move(empty).build().estimate_memory(), 0u);
}

TEST(EstimateMemory, CanonicalScaleKeysDominate) {
  // 447,488 x 384 keys alone are ~687 MB; checked arithmetically.
  const std::uint64_t keys_bytes = 447488ull * 384ull * 4ull;
  EXPECT_NEAR(static_cast<double>(keys_bytes) / 1e6, 687.0, 1.0);
}

TEST(ImageBankOps, BuildSearchAndPersist) {
  TempDir dir("ibank");
  const std::uint32_t d = 12;
  std::vector<PatchEmbeddingSet> images(3);
  std::vector<MultiLabelMask> masks;
  for (std::uint32_t i = 0; i < 3; ++i) {
    images[i].image_id = "g" + std::to_string(i);
    images[i].count = 1;
    images[i].dim = d;
    images[i].patch_embeddings = random_vector(d, 80 + i);
    images[i].global_embedding = random_vector(d, 90 + i);
    masks.push_back(::aoiseg::testing::random_mask(6, 4, 2, 95 + i));
  }
  const ImageBank bank = ImageBank::build(images, masks);
  EXPECT_EQ(bank.size(), 3u);
  EXPECT_EQ(bank.height(), 6u);
  EXPECT_EQ(bank.width(), 4u);

  const auto res = bank.search(*images[1].global_embedding, 1);
  EXPECT_EQ(res.indices[0], 1u);

  const std::string path = dir.file("i.aoib");
  bank.save(path);
  const ImageBank back = ImageBank::load(path, 6, 4);
  EXPECT_EQ(back.core(), bank.core());
  EXPECT_EQ(code_of([&] { ImageBank::load(path, 4, 4); }),
            Errc::dimension_mismatch);
}

}  // namespace
}  // namespace aoiseg

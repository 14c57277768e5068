#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "pvcd/errors.hpp"
#include "pvcd/similarity_matrix.hpp"
#include "pvcd/synthetic.hpp"

using namespace pvcd;

namespace {

SparseSimMatrix row_of(std::vector<double> sims) {
  std::vector<SimEntry> e;
  for (std::size_t i = 0; i < sims.size(); ++i) e.push_back({0, static_cast<std::uint32_t>(i), sims[i]});
  return SparseSimMatrix(1, sims.size(), e);
}

std::vector<double> sims_of(const SparseSimMatrix& m) {
  std::vector<double> out;
  for (const auto& e : m.entries()) out.push_back(e.sim);
  return out;
}

}  // namespace

TEST(SparseSimMatrix, ValidatesEntries) {
  EXPECT_THROW(SparseSimMatrix(2, 2, {{2, 0, 0.1}}), ShapeError);
  EXPECT_THROW(SparseSimMatrix(2, 2, {{1, 1, 0.1}, {1, 1, 0.2}}), ShapeError);
  const SparseSimMatrix m(3, 3, {{2, 0, 0.1}, {0, 2, 0.2}, {0, 1, 0.3}});
  EXPECT_EQ(m.entries()[0], (SimEntry{0, 1, 0.3}));
  EXPECT_EQ(m.entries()[2], (SimEntry{2, 0, 0.1}));
}

TEST(DenseSimilarity, SmallCases) {
  FeatureMatrix e1(1, 2);
  e1 << 1, 0;
  const auto one = dense_similarity(e1, e1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.entries()[0], (SimEntry{0, 0, 1.0}));

  FeatureMatrix q(2, 2);
  q << 1, 0, 0, 1;
  const auto col = dense_similarity(q, e1);
  EXPECT_EQ(col.n_rows(), 2u);
  EXPECT_EQ(col.n_cols(), 1u);
  EXPECT_EQ(sims_of(col), (std::vector<double>{1.0, 0.0}));

  EXPECT_THROW(dense_similarity(q, FeatureMatrix(1, 3)), ShapeError);
}

TEST(DenseSimilarity, MatchesElementwiseOracle) {
  std::mt19937_64 rng(1);
  const auto q = random_unit_rows(7, 24, rng);
  const auto r = random_unit_rows(9, 24, rng);
  const auto m = dense_similarity(q, r);
  ASSERT_EQ(m.size(), 63u);
  for (const auto& e : m.entries()) {
    double s = 0;
    for (int c = 0; c < 24; ++c) s += double(q(e.row, c)) * r(e.col, c);
    EXPECT_NEAR(e.sim, s, 1e-6);
    EXPECT_LE(std::abs(e.sim), 1.0 + 1e-6);
  }
}

TEST(ReconstructedSimilarity, KeepsOnlyTargetHits) {
  const std::vector<HitList> hits = {{{{0, 2}, 0.9}, {{1, 0}, 0.8}}};
  const auto m = reconstructed_similarity(hits, 0, 4);
  EXPECT_EQ(m.n_rows(), 1u);
  EXPECT_EQ(m.n_cols(), 4u);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries()[0], (SimEntry{0, 2, 0.9}));
  EXPECT_TRUE(reconstructed_similarity(hits, 5, 4).empty());
  EXPECT_THROW(reconstructed_similarity(hits, 0, 2), QueryError);
}

TEST(ReconstructedSimilarity, IsMaskedDenseMatrix) {
  std::mt19937_64 rng(2);
  std::vector<VideoFeatures> videos;
  for (int i = 0; i < 6; ++i) videos.push_back({"v" + std::to_string(i), 1.0, random_unit_rows(12, 16, rng)});
  const auto index = build_flat_index(videos);
  const auto query = random_unit_rows(8, 16, rng);
  const auto hits = knn_search_batch(index, query, 20);
  for (std::uint32_t v = 0; v < 6; ++v) {
    const auto dense = dense_similarity(query, index.video_rows(v));
    const auto recon = reconstructed_similarity(hits, v, 12);
    for (const auto& e : recon.entries()) {
      EXPECT_EQ(e.sim, dense.entries()[e.row * 12 + e.col].sim);  // exact
    }
  }
}

TEST(FilterTopKOne, HandSelection) {
  const auto row = row_of({0.9, 0.8, 0.7});
  EXPECT_EQ(sims_of(filter_top_k_one(row, 2, 0.5)), (std::vector<double>{0.9, 0.8}));
  EXPECT_TRUE(filter_top_k_one(row, 2, 0.95).empty());
  EXPECT_EQ(filter_top_k_one(row, 3, -1.0), row);
  EXPECT_EQ(filter_top_k_one(row, 10, -1.0), row);
}

TEST(FilterTopKOne, ThresholdIsInclusiveAndTiesPreferLowerColumn) {
  EXPECT_EQ(sims_of(filter_top_k_one(row_of({0.5, 0.4}), 5, 0.5)), (std::vector<double>{0.5}));
  const auto tied = filter_top_k_one(row_of({0.6, 0.7, 0.7, 0.7}), 2, 0.0);
  ASSERT_EQ(tied.size(), 2u);
  EXPECT_EQ(tied.entries()[0].col, 1u);
  EXPECT_EQ(tied.entries()[1].col, 2u);
}

TEST(FilterTopKOne, SubsetBoundsAndIdempotence) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  std::bernoulli_distribution present(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SimEntry> e;
    for (std::uint32_t r = 0; r < 6; ++r)
      for (std::uint32_t c = 0; c < 9; ++c)
        if (present(rng)) e.push_back({r, c, u(rng)});
    const SparseSimMatrix m(6, 9, e);
    const std::size_t k = 1 + trial % 5;
    const double th = (trial % 3) * 0.3 - 0.3;
    const auto f = filter_top_k_one(m, k, th);
    std::vector<std::size_t> per_row(6, 0);
    for (const auto& x : f.entries()) {
      EXPECT_NE(std::find(m.entries().begin(), m.entries().end(), x), m.entries().end());
      EXPECT_GE(x.sim, th);
      ++per_row[x.row];
    }
    for (auto n : per_row) EXPECT_LE(n, k);
    EXPECT_EQ(filter_top_k_one(f, k, th), f);
  }
}

TEST(MatrixCsv, WritesHeaderAndEntries) {
  std::ostringstream out;
  write_matrix_csv(SparseSimMatrix(2, 2, {{1, 0, 0.5}}), out);
  EXPECT_EQ(out.str(), "row,col,sim\n1,0,0.5\n");
}

#include <gtest/gtest.h>

#include <random>

#include "pvcd/errors.hpp"
#include "pvcd/pipeline.hpp"
#include "pvcd/synthetic.hpp"

using namespace pvcd;

namespace {

std::vector<VideoFeatures> random_videos(std::size_t n, std::size_t frames, std::size_t dim,
                                         std::mt19937_64& rng) {
  std::vector<VideoFeatures> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"ref" + std::to_string(i), 1.0, random_unit_rows(frames, dim, rng)});
  return out;
}

PlantedCopyFixture small_fixture(std::uint64_t seed) {
  PlantedCopyConfig pc;
  pc.n_references = 12;
  pc.frames_per_reference = 40;
  pc.dim = 32;
  pc.n_queries = 8;
  pc.copy_length = 10;
  pc.query_padding = 4;
  pc.seed = seed;
  return make_planted_copy_fixture(pc);
}

std::vector<Detection> sorted(std::vector<Detection> d) {
  std::sort(d.begin(), d.end(), [](const Detection& a, const Detection& b) {
    return std::tie(a.reference_id, a.q_start_s, a.r_start_s) < std::tie(b.reference_id, b.q_start_s, b.r_start_s);
  });
  return d;
}

}  // namespace

TEST(QueryParams, Validation) {
  QueryParams p;
  EXPECT_NO_THROW(p.validate());
  p.top_k_all = 0;
  EXPECT_THROW(p.validate(), QueryError);
  p = {};
  p.sim_th = 1.5;
  EXPECT_THROW(p.validate(), QueryError);
  p = {};
  p.max_step = 0;
  EXPECT_THROW(p.validate(), QueryError);
  EXPECT_EQ(parse_matrix_mode("original"), MatrixMode::original);
  EXPECT_EQ(to_string(MatrixMode::scan), "scan");
  EXPECT_THROW(parse_matrix_mode("dense"), ParseError);
}

TEST(RunQuery, IdentityCopyCoversWholeVideo) {
  std::mt19937_64 rng(1);
  auto refs = random_videos(10, 10, 32, rng);
  const auto index = build_reference_index(refs);
  for (auto mode : {MatrixMode::reconstructed, MatrixMode::original, MatrixMode::scan}) {
    QueryParams p;
    p.matrix_mode = mode;
    const VideoFeatures query{"q", 1.0, refs[3].matrix};
    const auto dets = run_query(index, query, p);
    ASSERT_FALSE(dets.empty());
    const auto& best = dets.front();
    EXPECT_EQ(best.reference_id, "ref3");
    EXPECT_EQ(best.q_start_s, 0.0);
    EXPECT_EQ(best.q_end_s, 9.0);
    EXPECT_EQ(best.r_start_s, 0.0);
    EXPECT_EQ(best.r_end_s, 9.0);
    EXPECT_EQ(best.length, 10u);
    EXPECT_NEAR(best.sim, 1.0, 1e-6);
  }
}

TEST(RunQuery, OrthogonalQueryFindsNothing) {
  // References live in the first 16 coordinates, the query in the last 16.
  std::mt19937_64 rng(2);
  std::vector<VideoFeatures> refs;
  for (int i = 0; i < 5; ++i) {
    FeatureMatrix m = FeatureMatrix::Zero(8, 32);
    m.leftCols(16) = random_unit_rows(8, 16, rng);
    refs.push_back({"r" + std::to_string(i), 1.0, m});
  }
  FeatureMatrix q = FeatureMatrix::Zero(6, 32);
  q.rightCols(16) = random_unit_rows(6, 16, rng);
  const auto index = build_reference_index(refs);
  for (auto mode : {MatrixMode::reconstructed, MatrixMode::original, MatrixMode::scan}) {
    QueryParams p;
    p.matrix_mode = mode;
    EXPECT_TRUE(run_query(index, {"q", 1.0, q}, p).empty());
  }
}

TEST(RunQuery, TimesUseEachSidesFrameRate) {
  std::mt19937_64 rng(3);
  auto refs = random_videos(3, 10, 16, rng);
  const auto index = build_reference_index(refs);
  QueryParams p;
  p.fps = 2.0;
  const VideoFeatures query{"q", 4.0, refs[1].matrix.middleRows(2, 5)};
  const auto dets = run_query(index, query, p);
  ASSERT_FALSE(dets.empty());
  EXPECT_EQ(dets[0].q_end_s, 1.0);
  EXPECT_EQ(dets[0].r_start_s, 1.0);
  EXPECT_EQ(dets[0].r_end_s, 3.0);
}

TEST(RunQuery, ReconstructedMatchesOriginalOnPlantedCopies) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = small_fixture(seed);
    const auto index = build_reference_index(f.references);
    for (const auto& q : f.queries) {
      QueryParams p;
      const auto recon = run_query(index, q, p);
      p.matrix_mode = MatrixMode::original;
      const auto orig = run_query(index, q, p);
      ASSERT_FALSE(recon.empty());
      ASSERT_FALSE(orig.empty());
      EXPECT_EQ(recon.front().reference_id, orig.front().reference_id);
      EXPECT_NEAR(recon.front().sim * recon.front().length, orig.front().sim * orig.front().length, 1e-12);
    }
  }
}

TEST(RunQuery, DetectionsAreSortedAndAboveThreshold) {
  const auto f = small_fixture(4);
  const auto index = build_reference_index(f.references);
  for (const auto& q : f.queries) {
    QueryParams p;
    p.max_segments = 3;
    const auto dets = run_query(index, q, p);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      EXPECT_GE(dets[i].sim, p.sim_th);
      if (i > 0) EXPECT_GE(dets[i - 1].sim, dets[i].sim);
    }
    EXPECT_EQ(run_query(index, q, p), dets);
  }
}

TEST(RunQuery, CandidatesLimitDetections) {
  const auto f = small_fixture(5);
  const auto index = build_reference_index(f.references);
  QueryParams p;
  p.top_k_video = 1;
  p.sim_th = -1.0;
  for (const auto& q : f.queries) {
    std::set<std::string> refs;
    for (const auto& d : run_query(index, q, p)) refs.insert(d.reference_id);
    EXPECT_LE(refs.size(), 1u);
  }
}

TEST(RunScan, EquivalentToOriginalWithAllCandidates) {
  const auto f = small_fixture(6);
  const auto index = build_reference_index(f.references);
  QueryParams p;
  p.matrix_mode = MatrixMode::original;
  p.top_k_video = f.references.size();
  p.top_k_all = 400;  // every reference receives at least one hit
  for (const auto& q : f.queries) {
    EXPECT_EQ(sorted(run_query(index, q, p)), sorted(run_scan(f.references, q, p)));
    p.matrix_mode = MatrixMode::scan;
    EXPECT_EQ(run_query(index, q, p), run_scan(f.references, q, p));
    p.matrix_mode = MatrixMode::original;
  }
}

TEST(RunScan, SingleReferenceAndEmpty) {
  std::mt19937_64 rng(7);
  auto refs = random_videos(1, 12, 16, rng);
  const VideoFeatures query{"q", 1.0, refs[0].matrix};
  const auto dets = run_scan(refs, query, {});
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].length, 12u);
  EXPECT_TRUE(run_scan({}, query, {}).empty());
}

TEST(RunQuery, Errors) {
  std::mt19937_64 rng(8);
  auto refs = random_videos(3, 5, 16, rng);
  const auto index = build_reference_index(refs);
  QueryParams p;
  EXPECT_THROW(run_query(index, {"q", 1.0, random_unit_rows(3, 8, rng)}, p), QueryError);
  EXPECT_THROW(run_scan(refs, {"q", 1.0, random_unit_rows(3, 8, rng)}, p), QueryError);
  p.use_encoder = true;
  EXPECT_THROW(run_query(index, {"q", 1.0, refs[0].matrix}, p), QueryError);
  EncoderConfig cfg;
  cfg.d = 16;
  cfg.ffn_dim = 8;
  const EncoderModel model{init_weights(cfg), cfg};
  p.use_encoder = false;
  EXPECT_THROW(run_query(index, {"q", 1.0, refs[0].matrix}, p, &model), QueryError);
}

TEST(RunQuery, EncodedIndexFindsEncodedCopy) {
  std::mt19937_64 rng(9);
  auto refs = random_videos(6, 10, 16, rng);
  EncoderConfig cfg;
  cfg.d = 16;
  cfg.ffn_dim = 16;
  const EncoderModel model{init_weights(cfg), cfg};
  const auto index = build_reference_index(refs, &model);
  EXPECT_EQ(index.video_rows(2), encode_features(refs[2].matrix, model.weights, cfg));
  QueryParams p;
  p.use_encoder = true;
  const auto dets = run_query(index, {"q", 1.0, refs[2].matrix}, p, &model);
  ASSERT_FALSE(dets.empty());
  EXPECT_EQ(dets[0].reference_id, "ref2");
  EXPECT_EQ(dets[0].length, 10u);
}

TEST(BenchSearch, ReportStructure) {
  std::mt19937_64 rng(10);
  auto refs = random_videos(10, 40, 16, rng);
  const auto index = build_reference_index(refs, nullptr, 8);
  const auto queries = random_unit_rows(20, 16, rng);
  BenchOptions o;
  o.top_k_all = 10;
  const auto report = bench_search(index, queries, o);
  EXPECT_EQ(report.query_frames, 20u);
  EXPECT_EQ(report.database_rows, 400u);
  EXPECT_EQ(report.ivf_cells, 8u);
  EXPECT_TRUE(report.ivf_full_probe_matches_flat);
  ASSERT_GE(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].method, "Matrix multiplication");
  EXPECT_EQ(report.rows[1].method, "Flat-CPU");
  EXPECT_EQ(report.rows[2].method, "IVF8-Flat-CPU");
  for (const auto& r : report.rows) {
    EXPECT_GT(r.ms_per_frame, 0.0);
    EXPECT_GT(r.speedup, 0.0);
    EXPECT_GE(r.recall_vs_flat, 0.0);
    EXPECT_LE(r.recall_vs_flat, 1.0);
  }
  EXPECT_EQ(report.rows.back().n_probe, 8u);
  EXPECT_EQ(report.rows.back().recall_vs_flat, 1.0);
  const auto j = to_json(report);
  EXPECT_EQ(j["rows"].size(), report.rows.size());
  EXPECT_NE(format_bench_table(report).find("Flat-CPU"), std::string::npos);
}

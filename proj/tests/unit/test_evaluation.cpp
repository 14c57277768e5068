#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "pvcd/errors.hpp"
#include "pvcd/evaluation.hpp"

using namespace pvcd;

namespace {

Detection det(double q0, double q1, double r0, double r1, double sim = 0.9, std::string q = "q",
              std::string r = "r") {
  return {std::move(q), std::move(r), q0, q1, r0, r1, sim, 1};
}

CopyAnnotation ann(double a0, double a1, double b0, double b1, std::string a = "q", std::string b = "r") {
  return {std::move(a), std::move(b), a0, a1, b0, b1};
}

// Straightforward restatement of the scoring rule.
SegmentScores naive_scores(const std::vector<Detection>& ds, const std::vector<CopyAnnotation>& as) {
  auto hit = [](const Detection& d, const CopyAnnotation& a) {
    auto meet = [](double x0, double x1, double y0, double y1) { return !(x1 < y0 || y1 < x0); };
    if (d.query_id == a.video_a && d.reference_id == a.video_b)
      return meet(d.q_start_s, d.q_end_s, a.a_start, a.a_end) && meet(d.r_start_s, d.r_end_s, a.b_start, a.b_end);
    if (d.query_id == a.video_b && d.reference_id == a.video_a)
      return meet(d.q_start_s, d.q_end_s, a.b_start, a.b_end) && meet(d.r_start_s, d.r_end_s, a.a_start, a.a_end);
    return false;
  };
  SegmentScores s;
  for (const auto& d : ds) {
    bool any = false;
    for (const auto& a : as) any = any || hit(d, a);
    any ? ++s.tp : ++s.fp;
  }
  std::size_t covered = 0;
  for (const auto& a : as) {
    bool any = false;
    for (const auto& d : ds) any = any || hit(d, a);
    covered += any;
  }
  s.fn = as.size() - covered;
  s.precision = ds.empty() ? 0.0 : double(s.tp) / ds.size();
  s.recall = as.empty() ? 0.0 : double(covered) / as.size();
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

void expect_same(const SegmentScores& a, const SegmentScores& b) {
  EXPECT_EQ(a.tp, b.tp);
  EXPECT_EQ(a.fp, b.fp);
  EXPECT_EQ(a.fn, b.fn);
  EXPECT_DOUBLE_EQ(a.precision, b.precision);
  EXPECT_DOUBLE_EQ(a.recall, b.recall);
  EXPECT_DOUBLE_EQ(a.f1, b.f1);
}

struct RandomCase {
  std::vector<Detection> dets;
  std::vector<CopyAnnotation> anns;
};

RandomCase random_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pos(0, 30), len(0, 6), vid(0, 2), count(0, 8);
  std::uniform_int_distribution<int> sim(0, 9);  // coarse scores produce ties
  auto id = [&](char p) { return std::string(1, p) + std::to_string(vid(rng)); };
  RandomCase c;
  for (int i = count(rng); i > 0; --i) {
    const double a = pos(rng), b = pos(rng);
    c.anns.push_back(ann(a, a + len(rng), b, b + len(rng), id('q'), id('r')));
  }
  for (int i = count(rng) + 1; i > 0; --i) {
    const double a = pos(rng), b = pos(rng);
    c.dets.push_back(det(a, a + len(rng), b, b + len(rng), sim(rng) / 10.0, id('q'), id('r')));
  }
  return c;
}

}  // namespace

TEST(SegmentF1, HandCases) {
  const auto half = segment_f1({det(0, 4, 10, 14)}, {ann(0, 4, 10, 14), ann(20, 24, 30, 34)});
  EXPECT_EQ(half.precision, 1.0);
  EXPECT_EQ(half.recall, 0.5);
  EXPECT_DOUBLE_EQ(half.f1, 2.0 / 3.0);
  EXPECT_EQ(half.tp, 1u);
  EXPECT_EQ(half.fn, 1u);

  const auto none = segment_f1({}, {ann(0, 4, 10, 14)});
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);

  const auto query_only = segment_f1({det(0, 4, 50, 54)}, {ann(0, 4, 10, 14)});
  EXPECT_EQ(query_only.tp, 0u);
  EXPECT_EQ(query_only.fp, 1u);
}

TEST(SegmentF1, PairOrderAndTouchingEndpoints) {
  EXPECT_TRUE(overlaps(det(10, 14, 0, 4), ann(0, 4, 10, 14, "r", "q")));
  EXPECT_FALSE(overlaps(det(0, 4, 10, 14, 0.9, "q", "other"), ann(0, 4, 10, 14)));
  EXPECT_TRUE(overlaps(det(4, 6, 14, 20), ann(0, 4, 10, 14)));
  EXPECT_FALSE(overlaps(det(4.5, 6, 14, 20), ann(0, 4, 10, 14)));
}

TEST(SegmentF1, MatchesNaiveOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const auto c = random_case(rng);
    const auto s = segment_f1(c.dets, c.anns);
    expect_same(s, naive_scores(c.dets, c.anns));
    EXPECT_GE(s.f1, 0.0);
    EXPECT_LE(s.f1, 1.0);
  }
}

TEST(SegmentF1, DuplicateTruePositiveKeepsCoverage) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto c = random_case(rng);
    const auto before = segment_f1(c.dets, c.anns);
    for (const auto& d : c.dets) {
      bool tp = false;
      for (const auto& a : c.anns) tp = tp || overlaps(d, a);
      if (!tp) continue;
      auto more = c.dets;
      more.push_back(d);
      const auto after = segment_f1(more, c.anns);
      EXPECT_EQ(after.recall, before.recall);
      EXPECT_EQ(after.fn, before.fn);
      EXPECT_EQ(after.tp, before.tp + 1);
      break;
    }
  }
}

TEST(BestF1, HandSweeps) {
  const auto all_good = best_f1_over_thresholds({det(0, 4, 10, 14, 0.6), det(20, 22, 30, 32, 0.7)},
                                                {ann(0, 4, 10, 14), ann(20, 24, 30, 34), ann(50, 51, 50, 51)});
  EXPECT_TRUE(std::isinf(all_good.threshold));
  EXPECT_LT(all_good.threshold, 0);
  EXPECT_DOUBLE_EQ(all_good.scores.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(all_good.scores.f1, 0.8);

  const auto mixed = best_f1_over_thresholds({det(0, 4, 10, 14, 0.9), det(40, 44, 40, 44, 0.4)},
                                             {ann(0, 4, 10, 14)});
  EXPECT_EQ(mixed.threshold, 0.9);
  EXPECT_EQ(mixed.scores.f1, 1.0);

  const auto empty = best_f1_over_thresholds({}, {ann(0, 1, 0, 1)});
  EXPECT_TRUE(std::isinf(empty.threshold));
  EXPECT_EQ(empty.scores.f1, 0.0);
}

TEST(BestF1, DominatesEveryThresholdAndPicksLowestTie) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_case(rng);
    const auto best = best_f1_over_thresholds(c.dets, c.anns);
    std::set<double> thetas = {-std::numeric_limits<double>::infinity()};
    for (const auto& d : c.dets) thetas.insert(d.sim);
    double oracle_f1 = -1, oracle_theta = 0;
    for (double t : thetas) {  // ascending, strict > keeps the lowest on ties
      std::vector<Detection> kept;
      for (const auto& d : c.dets)
        if (d.sim >= t) kept.push_back(d);
      const auto s = naive_scores(kept, c.anns);
      if (s.f1 > oracle_f1) {
        oracle_f1 = s.f1;
        oracle_theta = t;
      }
    }
    EXPECT_DOUBLE_EQ(best.scores.f1, oracle_f1);
    EXPECT_EQ(best.threshold, oracle_theta);
    for (double fixed = -0.05; fixed <= 1.0; fixed += 0.05)
      EXPECT_GE(best.scores.f1, segment_f1(filter_by_threshold(c.dets, fixed), c.anns).f1);
  }
}

TEST(EvaluationReport, Fields) {
  const std::vector<Detection> ds = {det(0, 4, 10, 14, 0.9), det(40, 44, 40, 44, 0.4, "q", "x")};
  const std::vector<CopyAnnotation> as = {ann(0, 4, 10, 14)};
  const auto plain = evaluation_report(ds, as, false);
  EXPECT_TRUE(plain["threshold"].is_null());
  EXPECT_EQ(plain["tp"], 1);
  EXPECT_EQ(plain["fp"], 1);
  EXPECT_EQ(plain["fn"], 0);
  EXPECT_DOUBLE_EQ(plain["precision"].get<double>(), 0.5);
  ASSERT_EQ(plain["pairs"].size(), 2u);
  EXPECT_EQ(plain["pairs"][0]["video_a"], "q");
  EXPECT_EQ(plain["pairs"][0]["video_b"], "r");
  EXPECT_EQ(plain["pairs"][0]["tp"], 1);
  EXPECT_EQ(plain["pairs"][1]["fp"], 1);

  const auto swept = evaluation_report(ds, as, true);
  EXPECT_EQ(swept["threshold"], 0.9);
  EXPECT_EQ(swept["f1"], 1.0);
}

TEST(DetectionsJsonl, RoundTripAndErrors) {
  const std::vector<Detection> ds = {det(0, 4, 10, 14, 0.123456789012345), det(1.5, 2, 3, 4, -0.25, "a b", "c\"d")};
  std::stringstream io;
  write_detections_jsonl(ds, io);
  EXPECT_EQ(read_detections_jsonl(io, "mem"), ds);

  std::istringstream bad("{\"query_id\": \"q\"}\n");
  try {
    read_detections_jsonl(bad, "dets.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("dets.jsonl:1"), std::string::npos);
  }
}

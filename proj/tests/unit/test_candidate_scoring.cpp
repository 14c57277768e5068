#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "pvcd/candidate_scoring.hpp"

using namespace pvcd;

namespace {
constexpr std::uint32_t A = 0, B = 1;

Hit hit(std::uint32_t video, std::uint32_t frame, double sim) { return {{video, frame}, sim}; }
}  // namespace

TEST(ScoreVideos, SumsPerVideo) {
  const std::vector<HitList> hits = {{hit(A, 3, 0.9), hit(B, 1, 0.5)}, {hit(A, 4, 0.8)}};
  const auto scores = score_videos(hits);
  ASSERT_EQ(scores.size(), 2u);
  EXPECT_EQ(scores[0].video_index, A);
  EXPECT_DOUBLE_EQ(scores[0].score, 1.7);
  EXPECT_EQ(scores[1].video_index, B);
  EXPECT_DOUBLE_EQ(scores[1].score, 0.5);
}

TEST(ScoreVideos, SingleAndEmpty) {
  const auto one = score_videos({{hit(A, 0, 0.7)}});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0].score, 0.7);
  EXPECT_TRUE(score_videos({}).empty());
  EXPECT_TRUE(score_videos({{}, {}}).empty());
}

TEST(ScoreVideos, NegativeSimilaritiesAreSummed) {
  const auto s = score_videos({{hit(A, 0, 0.4), hit(A, 1, -0.1)}});
  EXPECT_DOUBLE_EQ(s[0].score, 0.4 - 0.1);
}

TEST(ScoreVideos, ConservationAndLocality) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> sim(-1, 1);
  std::uniform_int_distribution<std::uint32_t> vid(0, 9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<HitList> hits(5);
    double total = 0;
    for (auto& list : hits) {
      for (int l = 0; l < 8; ++l) {
        list.push_back(hit(vid(rng), 0, sim(rng)));
        total += list.back().similarity;
      }
    }
    const auto scores = score_videos(hits);
    double sum = 0;
    for (const auto& s : scores) sum += s.score;
    EXPECT_NEAR(sum, total, 1e-9 * std::max(1.0, std::abs(total)));

    // Adding one hit moves exactly one score by exactly that amount.
    auto more = hits;
    more[2].push_back(hit(3, 7, 0.25));
    const auto after = score_videos(more);
    for (const auto& s : after) {
      const auto before = std::find_if(scores.begin(), scores.end(),
                                       [&](const VideoScore& b) { return b.video_index == s.video_index; });
      const double prior = before == scores.end() ? 0.0 : before->score;
      if (s.video_index == 3) {
        EXPECT_NEAR(s.score, prior + 0.25, 1e-12);
      } else {
        EXPECT_EQ(s.score, prior);
      }
    }
  }
}

TEST(TopVideos, RanksAndTruncates) {
  const std::vector<VideoScore> scores = {{A, 1.7}, {B, 0.5}};
  const auto one = top_videos(scores, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], (VideoScore{A, 1.7}));
  const auto all = top_videos(scores, 10);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1], (VideoScore{B, 0.5}));
}

TEST(TopVideos, TiesGoToLowerIndex) {
  const auto top = top_videos({{5, 1.0}, {2, 1.0}, {9, 2.0}}, 3);
  EXPECT_EQ(top[0].video_index, 9u);
  EXPECT_EQ(top[1].video_index, 2u);
  EXPECT_EQ(top[2].video_index, 5u);
}

TEST(TopVideos, MatchesSortThenTruncate) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> coarse(0, 30);  // coarse values force ties
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<VideoScore> scores;
    for (std::uint32_t v = 0; v < 100; ++v) scores.push_back({v, coarse(rng) / 10.0});
    auto oracle = scores;
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const VideoScore& a, const VideoScore& b) { return a.score > b.score; });
    oracle.resize(20);
    std::shuffle(scores.begin(), scores.end(), rng);
    EXPECT_EQ(top_videos(scores, 20), oracle);
  }
}

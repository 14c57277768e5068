#pragma once

#include <cstdint>
#include <vector>

#include "pvcd/feature_index.hpp"

namespace pvcd {

struct VideoScore {
  std::uint32_t video_index = 0;
  double score = 0.0;  // sum of similarities of all hits on this video

  friend bool operator==(const VideoScore&, const VideoScore&) = default;
};

inline constexpr std::size_t kDefaultTopKVideo = 20;

// Accumulates every hit's similarity onto its video. Negative similarities
// are summed as-is. Output is ordered by ascending video_index.
std::vector<VideoScore> score_videos(const std::vector<HitList>& hits_per_frame);

// Highest-scoring videos first, ties to the lower video_index.
std::vector<VideoScore> top_videos(std::vector<VideoScore> scores, std::size_t top_k_video);

}  // namespace pvcd

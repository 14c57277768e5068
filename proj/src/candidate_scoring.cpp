#include "pvcd/candidate_scoring.hpp"

#include <algorithm>
#include <map>

namespace pvcd {

std::vector<VideoScore> score_videos(const std::vector<HitList>& hits_per_frame) {
  std::map<std::uint32_t, double> totals;
  for (const auto& hits : hits_per_frame) {
    for (const auto& hit : hits) totals[hit.frame_ref.video_index] += hit.similarity;
  }
  std::vector<VideoScore> out;
  out.reserve(totals.size());
  for (const auto& [video, score] : totals) out.push_back({video, score});
  return out;
}

std::vector<VideoScore> top_videos(std::vector<VideoScore> scores, std::size_t top_k_video) {
  const auto k = std::min(top_k_video, scores.size());
  auto ahead = [](const VideoScore& a, const VideoScore& b) {
    return a.score > b.score || (a.score == b.score && a.video_index < b.video_index);
  };
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(k), scores.end(),
                    ahead);
  scores.resize(k);
  return scores;
}

}  // namespace pvcd

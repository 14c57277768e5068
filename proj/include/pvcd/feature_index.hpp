#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pvcd/feature_io.hpp"

namespace pvcd {

// Composite key of one stored frame: (reference video, frame within it).
struct FrameRef {
  std::uint32_t video_index = 0;
  std::uint32_t frame_index = 0;

  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

// One KNN answer.
struct Hit {
  FrameRef frame_ref;
  double similarity = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

using HitList = std::vector<Hit>;

struct VideoEntry {
  std::string video_id;
  std::size_t frame_count = 0;
  std::size_t first_row = 0;
};

// Coarse quantizer: unit-norm centroids plus the rows assigned to each.
struct IvfStructure {
  FeatureMatrix centroids;
  std::vector<std::vector<std::uint32_t>> lists;

  std::size_t n_cells() const { return lists.size(); }
};

// Dot product used everywhere a frame similarity is needed. Fixed summation
// order, so every caller gets bit-identical values for the same pair.
double frame_dot(const float* a, const float* b, std::size_t dim);

inline double frame_dot(std::span<const float> a, std::span<const float> b) {
  return frame_dot(a.data(), b.data(), a.size());
}

// The global frame database: unit rows of every reference video, ordered by
// (video_index, frame_index). Immutable once built.
class GlobalIndex {
 public:
  std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t row_count() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t video_count() const { return videos_.size(); }

  const FeatureMatrix& rows() const { return rows_; }
  const std::vector<VideoEntry>& videos() const { return videos_; }
  const std::optional<IvfStructure>& ivf() const { return ivf_; }

  FrameRef frame_ref(std::size_t row) const { return id_map_.at(row); }
  std::size_t row_of(FrameRef ref) const;
  std::span<const float> row(std::size_t r) const {
    return {rows_.data() + r * dim(), dim()};
  }

  // Contiguous rows of one reference video.
  Eigen::Ref<const FeatureMatrix> video_rows(std::size_t video_index) const;
  std::optional<std::size_t> find_video(std::string_view video_id) const;

  // Copy of this index with the coarse quantizer dropped.
  GlobalIndex without_ivf() const {
    GlobalIndex flat = *this;
    flat.ivf_.reset();
    return flat;
  }

 private:
  friend GlobalIndex build_flat_index(const std::vector<VideoFeatures>& videos);
  friend GlobalIndex build_ivf_index(const std::vector<VideoFeatures>& videos,
                                     std::size_t n_cells, std::size_t kmeans_iters,
                                     std::uint64_t seed);
  friend GlobalIndex with_ivf(GlobalIndex index, std::size_t n_cells,
                              std::size_t kmeans_iters, std::uint64_t seed);
  friend GlobalIndex decode_index(std::span<const std::uint8_t> bytes,
                                  const std::string& context);

  void rebuild_id_map();

  FeatureMatrix rows_;
  std::vector<VideoEntry> videos_;
  std::vector<FrameRef> id_map_;
  std::optional<IvfStructure> ivf_;
};

inline constexpr std::size_t kDefaultTopKAll = 200;
inline constexpr std::size_t kDefaultKmeansIters = 20;

// Rows are normalized on the way in.
GlobalIndex build_flat_index(const std::vector<VideoFeatures>& videos);

// Flat index plus a seeded spherical k-means coarse quantizer.
GlobalIndex build_ivf_index(const std::vector<VideoFeatures>& videos, std::size_t n_cells,
                            std::size_t kmeans_iters = kDefaultKmeansIters,
                            std::uint64_t seed = 0);

// Adds (or replaces) the coarse quantizer of an existing index.
GlobalIndex with_ivf(GlobalIndex index, std::size_t n_cells,
                     std::size_t kmeans_iters = kDefaultKmeansIters, std::uint64_t seed = 0);

// Top-k by dot product, sorted by descending similarity with ties broken by
// ascending (video_index, frame_index). n_probe is ignored for flat indexes;
// for IVF indexes only the n_probe cells nearest to the query are scanned.
HitList knn_search(const GlobalIndex& index, std::span<const float> query,
                   std::size_t top_k_all, std::size_t n_probe = 1);

// Row-wise knn_search. threads = 0 uses the hardware concurrency; output is
// identical for any thread count.
std::vector<HitList> knn_search_batch(const GlobalIndex& index,
                                      const Eigen::Ref<const FeatureMatrix>& queries,
                                      std::size_t top_k_all, std::size_t n_probe = 1,
                                      unsigned threads = 0);

// Index file: "PVCI", u16 version, u32 dim, u32 row_count, u32 n_videos,
// per video (u16 id length, id bytes, u32 frame_count), rows as float32,
// u8 IVF flag, then if set: u32 n_cells, centroids float32, and for each
// cell a u32 length followed by that many u32 row indices.
inline constexpr char kIndexMagic[4] = {'P', 'V', 'C', 'I'};
inline constexpr std::uint16_t kIndexVersion = 1;

std::vector<std::uint8_t> encode_index(const GlobalIndex& index);
GlobalIndex decode_index(std::span<const std::uint8_t> bytes, const std::string& context);
void save_index(const GlobalIndex& index, const std::filesystem::path& path);
GlobalIndex load_index(const std::filesystem::path& path);

}  // namespace pvcd

#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pvcd {

// One row per extracted frame, row-major so that a frame is contiguous.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-video frame features. Row i is the frame at time i / fps seconds.
struct VideoFeatures {
  std::string video_id;
  double fps = 1.0;
  FeatureMatrix matrix;

  std::size_t frame_count() const { return static_cast<std::size_t>(matrix.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(matrix.cols()); }
};

// A ground-truth copy: [a_start, a_end] seconds of video_a is a copy of
// [b_start, b_end] seconds of video_b. Both spans are closed intervals.
struct CopyAnnotation {
  std::string video_a;
  std::string video_b;
  double a_start = 0;
  double a_end = 0;
  double b_start = 0;
  double b_end = 0;
};

struct ManifestEntry {
  std::string video_id;
  std::filesystem::path path;  // resolved against the manifest's directory
};

inline constexpr char kFeatureMagic[4] = {'P', 'V', 'C', 'F'};
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 14;

// Feature file codec. Layout: "PVCF", u16 version, u32 dim, u32 frame_count,
// then frame_count * dim float32, all little-endian.
std::vector<std::uint8_t> encode_feature_file(const FeatureMatrix& matrix);
FeatureMatrix decode_feature_file(std::span<const std::uint8_t> bytes, const std::string& context);

// Reads a feature file without normalizing it. The video id defaults to the
// file stem when not supplied.
VideoFeatures load_feature_file(const std::filesystem::path& path, std::string video_id = {});
void save_feature_file(const VideoFeatures& video, const std::filesystem::path& path);

// Scales every row to unit L2 norm. Rows already within 1e-6 of unit norm are
// left untouched, which makes the operation exactly idempotent.
void normalize_rows_in_place(FeatureMatrix& matrix, std::string_view context = {});
VideoFeatures normalize_rows(VideoFeatures video);

// Throws FormatError naming the first non-finite row.
void check_finite(const FeatureMatrix& matrix, std::string_view context);

// "HH:MM:SS" -> seconds.
int parse_timestamp(std::string_view text);
std::string format_timestamp(int seconds);

std::vector<CopyAnnotation> parse_annotations(std::istream& in, const std::string& context);
std::vector<CopyAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::vector<CopyAnnotation>& annotations,
                      const std::filesystem::path& path);

// Manifest: CSV "video_id,relative_path" per line. An optional header line
// with exactly those names is skipped.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
std::vector<VideoFeatures> load_manifest_videos(const std::filesystem::path& path);

}  // namespace pvcd

#include "pvcd/feature_io.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pvcd/binary_io.hpp"
#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

constexpr double kUnitTolerance = 1e-6;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

bool skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

std::vector<std::uint8_t> encode_feature_file(const FeatureMatrix& matrix) {
  if (matrix.rows() == 0 || matrix.cols() == 0) {
    throw FormatError("feature matrix must have at least one frame and one dimension (got " +
                      std::to_string(matrix.rows()) + "x" + std::to_string(matrix.cols()) + ")");
  }
  check_finite(matrix, "feature matrix");
  ByteWriter w;
  w.put_bytes(std::string_view(kFeatureMagic, 4));
  w.put_u16(kFeatureVersion);
  w.put_u32(static_cast<std::uint32_t>(matrix.cols()));
  w.put_u32(static_cast<std::uint32_t>(matrix.rows()));
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      w.put_f32(matrix(r, c));
    }
  }
  return w.buffer();
}

FeatureMatrix decode_feature_file(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (r.get_bytes(4) != std::string_view(kFeatureMagic, 4)) {
    r.fail_at(0, "bad magic (expected PVCF)");
  }
  const auto version_at = r.offset();
  if (const auto version = r.get_u16(); version != kFeatureVersion) {
    r.fail_at(version_at, "unsupported version " + std::to_string(version));
  }
  const auto dim_at = r.offset();
  const std::uint32_t dim = r.get_u32();
  if (dim == 0) r.fail_at(dim_at, "dimension is 0");
  const auto count_at = r.offset();
  const std::uint32_t count = r.get_u32();
  if (count == 0) r.fail_at(count_at, "frame count is 0");

  const std::uint64_t payload = std::uint64_t{dim} * count * 4;
  if (r.remaining() < payload) {
    const std::size_t complete_rows = r.remaining() / (std::size_t{dim} * 4);
    r.fail_at(r.offset() + complete_rows * dim * 4,
              "truncated payload in row " + std::to_string(complete_rows) + " of " +
                  std::to_string(count));
  }
  if (r.remaining() > payload) {
    r.fail_at(r.offset() + payload, "trailing bytes after payload");
  }

  FeatureMatrix m(count, dim);
  for (std::uint32_t row = 0; row < count; ++row) {
    for (std::uint32_t col = 0; col < dim; ++col) {
      const auto at = r.offset();
      const float v = r.get_f32();
      if (!std::isfinite(v)) {
        r.fail_at(at, "non-finite value in row " + std::to_string(row));
      }
      m(row, col) = v;
    }
  }
  return m;
}

VideoFeatures load_feature_file(const std::filesystem::path& path, std::string video_id) {
  const auto bytes = read_file_bytes(path);
  VideoFeatures v;
  v.video_id = video_id.empty() ? path.stem().string() : std::move(video_id);
  v.matrix = decode_feature_file(bytes, path.string());
  return v;
}

void save_feature_file(const VideoFeatures& video, const std::filesystem::path& path) {
  const auto bytes = encode_feature_file(video.matrix);
  write_file_bytes(path, bytes);
}

void check_finite(const FeatureMatrix& matrix, std::string_view context) {
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    if (!matrix.row(r).allFinite()) {
      throw FormatError(std::string(context) + ": non-finite value in row " + std::to_string(r));
    }
  }
}

void normalize_rows_in_place(FeatureMatrix& matrix, std::string_view context) {
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    double sq = 0.0;
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      sq += static_cast<double>(matrix(r, c)) * matrix(r, c);
    }
    if (!std::isfinite(sq)) {
      throw FormatError(std::string(context) + ": non-finite value in row " + std::to_string(r));
    }
    if (sq == 0.0) {
      throw DegenerateInputError(std::string(context) + (context.empty() ? "" : ": ") +
                                 "all-zero feature row " + std::to_string(r));
    }
    const double norm = std::sqrt(sq);
    if (std::abs(norm - 1.0) <= kUnitTolerance) continue;
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      matrix(r, c) = static_cast<float>(matrix(r, c) / norm);
    }
  }
}

VideoFeatures normalize_rows(VideoFeatures video) {
  normalize_rows_in_place(video.matrix, video.video_id);
  return video;
}

int parse_timestamp(std::string_view text) {
  text = trim(text);
  int parts[3] = {0, 0, 0};
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const auto colon = text.find(':', start);
    if ((i < 2) == (colon == std::string_view::npos)) {
      throw ParseError("malformed timestamp '" + std::string(text) + "' (expected HH:MM:SS)");
    }
    const auto field = text.substr(start, colon == std::string_view::npos ? text.size() - start
                                                                          : colon - start);
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, parts[i]);
    if (field.empty() || ec != std::errc{} || ptr != end || parts[i] < 0 ||
        (i > 0 && (field.size() != 2 || parts[i] >= 60))) {
      throw ParseError("malformed timestamp '" + std::string(text) + "' (expected HH:MM:SS)");
    }
    start = colon + 1;
  }
  return parts[0] * 3600 + parts[1] * 60 + parts[2];
}

std::string format_timestamp(int seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", seconds / 3600, (seconds / 60) % 60,
                seconds % 60);
  return buf;
}

std::vector<CopyAnnotation> parse_annotations(std::istream& in, const std::string& context) {
  std::vector<CopyAnnotation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto where = context + ":" + std::to_string(line_no);
    const auto fields = split_csv(line);
    if (fields.size() != 6) {
      throw ParseError(where + ": expected 6 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError(where + ": empty video id");
    }
    CopyAnnotation a;
    a.video_a = std::string(fields[0]);
    a.video_b = std::string(fields[1]);
    try {
      a.a_start = parse_timestamp(fields[2]);
      a.a_end = parse_timestamp(fields[3]);
      a.b_start = parse_timestamp(fields[4]);
      a.b_end = parse_timestamp(fields[5]);
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (a.a_start > a.a_end || a.b_start > a.b_end) {
      throw ParseError(where + ": span start after span end");
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<CopyAnnotation> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return parse_annotations(in, path.string());
}

void save_annotations(const std::vector<CopyAnnotation>& annotations,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& a : annotations) {
    out << a.video_a << ',' << a.video_b << ',' << format_timestamp(static_cast<int>(a.a_start))
        << ',' << format_timestamp(static_cast<int>(a.a_end)) << ','
        << format_timestamp(static_cast<int>(a.b_start)) << ','
        << format_timestamp(static_cast<int>(a.b_end)) << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  const auto base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": expected 'video_id,relative_path'");
    }
    if (line_no == 1 && fields[0] == "video_id" && fields[1] == "relative_path") continue;
    const std::filesystem::path p{std::string(fields[1])};
    out.push_back({std::string(fields[0]), p.is_absolute() ? p : base / p});
  }
  return out;
}

std::vector<VideoFeatures> load_manifest_videos(const std::filesystem::path& path) {
  std::vector<VideoFeatures> videos;
  for (const auto& entry : load_manifest(path)) {
    videos.push_back(load_feature_file(entry.path, entry.video_id));
  }
  return videos;
}

}  // namespace pvcd

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvcd/feature_io.hpp"

namespace pvcd {

// One reported copy, spans in seconds (closed intervals).
struct Detection {
  std::string query_id;
  std::string reference_id;
  double q_start_s = 0;
  double q_end_s = 0;
  double r_start_s = 0;
  double r_end_s = 0;
  double sim = 0;  // mean similarity along the path
  std::size_t length = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct SegmentScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t tp = 0;  // true-positive detections
  std::size_t fp = 0;  // false-positive detections
  std::size_t fn = 0;  // annotations not overlapped by any detection
};

// True if the detection's video pair equals the annotation's (in either
// order) and it overlaps the annotation on both the query and reference span.
bool overlaps(const Detection& det, const CopyAnnotation& ann);

// Every detection is judged on its own; recall counts covered annotations.
SegmentScores segment_f1(const std::vector<Detection>& detections,
                         const std::vector<CopyAnnotation>& annotations);

struct ThresholdScores {
  double threshold = 0;  // -infinity means "keep everything"
  SegmentScores scores;
};

// Best segment F1 over {sim >= theta} for every distinct detection sim and
// theta = -infinity. Ties go to the lowest threshold.
ThresholdScores best_f1_over_thresholds(const std::vector<Detection>& detections,
                                        const std::vector<CopyAnnotation>& annotations);

std::vector<Detection> filter_by_threshold(const std::vector<Detection>& detections,
                                           double threshold);

// {precision, recall, f1, threshold, tp, fp, fn, pairs: [...]}; threshold is
// null when no threshold was applied.
nlohmann::json evaluation_report(const std::vector<Detection>& detections,
                                 const std::vector<CopyAnnotation>& annotations, bool sweep);

nlohmann::json to_json(const Detection& det);
Detection detection_from_json(const nlohmann::json& j);
void write_detections_jsonl(const std::vector<Detection>& detections, std::ostream& out);
std::vector<Detection> read_detections_jsonl(std::istream& in, const std::string& context);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace pvcd

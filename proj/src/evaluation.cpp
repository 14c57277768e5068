#include "pvcd/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <utility>

#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

using PairKey = std::pair<std::string, std::string>;

PairKey pair_key(const std::string& a, const std::string& b) {
  return a < b ? PairKey{a, b} : PairKey{b, a};
}

bool closed_overlap(double a0, double a1, double b0, double b1) { return a0 <= b1 && b0 <= a1; }

double f1_of(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

// Per-detection verdicts computed once, shared by the plain and sweep paths.
struct Judgement {
  std::vector<bool> true_positive;
  std::vector<std::vector<std::size_t>> covers;  // annotation indices per detection
};

Judgement judge(const std::vector<Detection>& detections,
                const std::vector<CopyAnnotation>& annotations) {
  std::map<PairKey, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    by_pair[pair_key(annotations[i].video_a, annotations[i].video_b)].push_back(i);
  }
  Judgement j;
  j.true_positive.resize(detections.size(), false);
  j.covers.resize(detections.size());
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const auto it = by_pair.find(pair_key(detections[d].query_id, detections[d].reference_id));
    if (it == by_pair.end()) continue;
    for (auto a : it->second) {
      if (overlaps(detections[d], annotations[a])) {
        j.true_positive[d] = true;
        j.covers[d].push_back(a);
      }
    }
  }
  return j;
}

SegmentScores scores_from(std::size_t tp, std::size_t n_det, std::size_t covered,
                          std::size_t n_ann) {
  SegmentScores s;
  s.tp = tp;
  s.fp = n_det - tp;
  s.fn = n_ann - covered;
  s.precision = n_det ? static_cast<double>(tp) / static_cast<double>(n_det) : 0.0;
  s.recall = n_ann ? static_cast<double>(covered) / static_cast<double>(n_ann) : 0.0;
  s.f1 = f1_of(s.precision, s.recall);
  return s;
}

}  // namespace

bool overlaps(const Detection& det, const CopyAnnotation& ann) {
  auto check = [&](double qa0, double qa1, double ra0, double ra1) {
    return closed_overlap(det.q_start_s, det.q_end_s, qa0, qa1) &&
           closed_overlap(det.r_start_s, det.r_end_s, ra0, ra1);
  };
  bool hit = false;
  if (det.query_id == ann.video_a && det.reference_id == ann.video_b) {
    hit = check(ann.a_start, ann.a_end, ann.b_start, ann.b_end);
  }
  if (!hit && det.query_id == ann.video_b && det.reference_id == ann.video_a) {
    hit = check(ann.b_start, ann.b_end, ann.a_start, ann.a_end);
  }
  return hit;
}

SegmentScores segment_f1(const std::vector<Detection>& detections,
                         const std::vector<CopyAnnotation>& annotations) {
  const auto j = judge(detections, annotations);
  std::vector<bool> covered(annotations.size(), false);
  std::size_t tp = 0;
  for (std::size_t d = 0; d < detections.size(); ++d) {
    if (j.true_positive[d]) ++tp;
    for (auto a : j.covers[d]) covered[a] = true;
  }
  return scores_from(tp, detections.size(), std::count(covered.begin(), covered.end(), true),
                     annotations.size());
}

ThresholdScores best_f1_over_thresholds(const std::vector<Detection>& detections,
                                        const std::vector<CopyAnnotation>& annotations) {
  const auto j = judge(detections, annotations);
  std::vector<std::size_t> order(detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].sim > detections[b].sim;
  });

  // Walk thresholds from high to low, adding detections as they qualify.
  std::vector<bool> covered(annotations.size(), false);
  std::size_t n_covered = 0, tp = 0;
  std::vector<ThresholdScores> candidates;
  for (std::size_t i = 0; i < order.size();) {
    const double theta = detections[order[i]].sim;
    for (; i < order.size() && detections[order[i]].sim == theta; ++i) {
      const auto d = order[i];
      if (j.true_positive[d]) ++tp;
      for (auto a : j.covers[d]) {
        if (!covered[a]) {
          covered[a] = true;
          ++n_covered;
        }
      }
    }
    candidates.push_back({theta, scores_from(tp, i, n_covered, annotations.size())});
  }
  // theta = -inf keeps every detection, including NaN sims.
  candidates.push_back({-std::numeric_limits<double>::infinity(),
                        segment_f1(detections, annotations)});

  // Candidates run from highest to lowest threshold; ">=" keeps the lowest on ties.
  ThresholdScores best = candidates.front();
  for (const auto& c : candidates) {
    if (c.scores.f1 >= best.scores.f1) best = c;
  }
  return best;
}

std::vector<Detection> filter_by_threshold(const std::vector<Detection>& detections,
                                           double threshold) {
  std::vector<Detection> out;
  for (const auto& d : detections) {
    if (d.sim >= threshold) out.push_back(d);
  }
  return out;
}

nlohmann::json evaluation_report(const std::vector<Detection>& detections,
                                 const std::vector<CopyAnnotation>& annotations, bool sweep) {
  double threshold = -std::numeric_limits<double>::infinity();
  if (sweep) threshold = best_f1_over_thresholds(detections, annotations).threshold;
  const auto kept = filter_by_threshold(detections, threshold);
  const auto s = segment_f1(kept, annotations);

  nlohmann::json report;
  report["precision"] = s.precision;
  report["recall"] = s.recall;
  report["f1"] = s.f1;
  report["threshold"] = std::isinf(threshold) ? nlohmann::json(nullptr) : nlohmann::json(threshold);
  report["tp"] = s.tp;
  report["fp"] = s.fp;
  report["fn"] = s.fn;

  std::map<PairKey, std::pair<std::vector<Detection>, std::vector<CopyAnnotation>>> pairs;
  for (const auto& d : kept) pairs[pair_key(d.query_id, d.reference_id)].first.push_back(d);
  for (const auto& a : annotations) pairs[pair_key(a.video_a, a.video_b)].second.push_back(a);
  auto rows = nlohmann::json::array();
  for (const auto& [key, group] : pairs) {
    const auto ps = segment_f1(group.first, group.second);
    rows.push_back({{"video_a", key.first},
                    {"video_b", key.second},
                    {"detections", group.first.size()},
                    {"annotations", group.second.size()},
                    {"tp", ps.tp},
                    {"fp", ps.fp},
                    {"fn", ps.fn}});
  }
  report["pairs"] = std::move(rows);
  return report;
}

nlohmann::json to_json(const Detection& det) {
  return {{"query_id", det.query_id},   {"reference_id", det.reference_id},
          {"q_start_s", det.q_start_s}, {"q_end_s", det.q_end_s},
          {"r_start_s", det.r_start_s}, {"r_end_s", det.r_end_s},
          {"sim", det.sim},             {"length", det.length}};
}

Detection detection_from_json(const nlohmann::json& j) {
  Detection d;
  j.at("query_id").get_to(d.query_id);
  j.at("reference_id").get_to(d.reference_id);
  j.at("q_start_s").get_to(d.q_start_s);
  j.at("q_end_s").get_to(d.q_end_s);
  j.at("r_start_s").get_to(d.r_start_s);
  j.at("r_end_s").get_to(d.r_end_s);
  j.at("sim").get_to(d.sim);
  j.at("length").get_to(d.length);
  return d;
}

void write_detections_jsonl(const std::vector<Detection>& detections, std::ostream& out) {
  for (const auto& d : detections) out << to_json(d).dump() << '\n';
}

std::vector<Detection> read_detections_jsonl(std::istream& in, const std::string& context) {
  std::vector<Detection> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(detection_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(context + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return read_detections_jsonl(in, path.string());
}

}  // namespace pvcd

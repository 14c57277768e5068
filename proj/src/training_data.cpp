#include "pvcd/training_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

using VideoMap = std::map<std::string, const VideoFeatures*, std::less<>>;

VideoMap by_id(const std::vector<VideoFeatures>& videos) {
  VideoMap m;
  for (const auto& v : videos) m.emplace(v.video_id, &v);
  return m;
}

std::size_t to_frame(double seconds, const VideoFeatures& v) {
  const auto f = static_cast<long long>(std::llround(seconds * v.fps));
  return static_cast<std::size_t>(std::clamp<long long>(f, 0, static_cast<long long>(v.frame_count()) - 1));
}

Matrix unit_rows(const FeatureMatrix& m) {
  FeatureMatrix copy = m;
  normalize_rows_in_place(copy, "training features");
  return copy.cast<double>();
}

Matrix crop(const VideoFeatures& v, std::size_t first, std::size_t last) {
  return unit_rows(v.matrix.middleRows(static_cast<Eigen::Index>(first),
                                       static_cast<Eigen::Index>(last - first + 1)));
}

bool overlaps_any(const Detection& d, const std::vector<CopyAnnotation>& annotations) {
  return std::any_of(annotations.begin(), annotations.end(),
                     [&](const CopyAnnotation& a) { return overlaps(d, a); });
}

}  // namespace

std::vector<TrainingSample> MinedSamples::all() const {
  std::vector<TrainingSample> out = positives;
  out.insert(out.end(), hard_negatives.begin(), hard_negatives.end());
  out.insert(out.end(), random_negatives.begin(), random_negatives.end());
  return out;
}

std::vector<TrainingSample> positive_samples(const std::vector<VideoFeatures>& references,
                                             const std::vector<VideoFeatures>& queries,
                                             const std::vector<CopyAnnotation>& annotations) {
  const auto refs = by_id(references);
  const auto qs = by_id(queries);
  std::vector<TrainingSample> out;
  for (const auto& ann : annotations) {
    const VideoFeatures* q = nullptr;
    const VideoFeatures* r = nullptr;
    double qs0 = ann.a_start, qs1 = ann.a_end, rs0 = ann.b_start, rs1 = ann.b_end;
    if (qs.count(ann.video_a) && refs.count(ann.video_b)) {
      q = qs.at(ann.video_a);
      r = refs.at(ann.video_b);
    } else if (qs.count(ann.video_b) && refs.count(ann.video_a)) {
      q = qs.at(ann.video_b);
      r = refs.at(ann.video_a);
      std::swap(qs0, rs0);
      std::swap(qs1, rs1);
    } else {
      throw Error("annotation " + ann.video_a + "," + ann.video_b +
                  " does not pair a known query with a known reference");
    }
    const auto s_q = to_frame(qs0, *q);
    const auto s_r = to_frame(rs0, *r);
    const auto e_q = std::max(s_q, to_frame(qs1, *q));
    const auto e_r = std::max(s_r, to_frame(rs1, *r));
    const auto length = std::min(e_q - s_q, e_r - s_r) + 1;
    out.push_back({unit_rows(q->matrix), unit_rows(r->matrix), CopyLabel{s_q, s_r, length}});
  }
  return out;
}

MinedSamples mine_hard_negatives(const std::vector<VideoFeatures>& references,
                                 const std::vector<VideoFeatures>& queries,
                                 const std::vector<CopyAnnotation>& annotations,
                                 const MiningOptions& options) {
  if (references.empty()) throw Error("hard-negative mining needs reference videos");
  MinedSamples mined;
  mined.positives = positive_samples(references, queries, annotations);

  QueryParams baseline = options.baseline;
  baseline.use_encoder = false;
  const auto index = build_flat_index(references);
  const auto refs = by_id(references);
  for (const auto& q : queries) {
    for (const auto& det : run_query(index, q, baseline)) {
      if (det.reference_id == q.video_id || overlaps_any(det, annotations)) continue;
      const auto& r = *refs.at(det.reference_id);
      const auto q0 = to_frame(det.q_start_s, q), q1 = to_frame(det.q_end_s, q);
      const auto r0 = to_frame(det.r_start_s, r), r1 = to_frame(det.r_end_s, r);
      mined.hard_negatives.push_back({crop(q, q0, q1), crop(r, r0, r1), std::nullopt});
    }
  }

  // Random crops make up any shortfall.
  std::mt19937_64 rng(options.seed);
  const auto& pool = queries.empty() ? references : queries;
  const auto want = mined.positives.size();
  while (mined.hard_negatives.size() + mined.random_negatives.size() < want) {
    Detection probe;
    std::size_t q0 = 0, q1 = 0, r0 = 0, r1 = 0;
    const VideoFeatures* qv = nullptr;
    const VideoFeatures* rv = nullptr;
    for (std::size_t attempt = 0; attempt < std::max<std::size_t>(1, options.max_random_attempts);
         ++attempt) {
      qv = &pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      rv = &references[std::uniform_int_distribution<std::size_t>(0, references.size() - 1)(rng)];
      const auto ql = std::min(options.random_crop_length, qv->frame_count());
      const auto rl = std::min(options.random_crop_length, rv->frame_count());
      q0 = std::uniform_int_distribution<std::size_t>(0, qv->frame_count() - ql)(rng);
      r0 = std::uniform_int_distribution<std::size_t>(0, rv->frame_count() - rl)(rng);
      q1 = q0 + ql - 1;
      r1 = r0 + rl - 1;
      probe = {qv->video_id, rv->video_id, q0 / qv->fps, q1 / qv->fps, r0 / rv->fps, r1 / rv->fps,
               0.0, 0};
      if (qv->video_id != rv->video_id && !overlaps_any(probe, annotations)) break;
    }
    mined.random_negatives.push_back({crop(*qv, q0, q1), crop(*rv, r0, r1), std::nullopt});
  }
  return mined;
}

}  // namespace pvcd

#pragma once

#include <cstdint>
#include <vector>

#include "pvcd/encoder.hpp"
#include "pvcd/pipeline.hpp"

namespace pvcd {

struct MiningOptions {
  QueryParams baseline;               // encoder-free pipeline settings
  std::size_t random_crop_length = 10;
  std::size_t max_random_attempts = 100;  // redraws for a crop that avoids every annotation
  std::uint64_t seed = 0;
};

struct MinedSamples {
  std::vector<TrainingSample> positives;
  std::vector<TrainingSample> hard_negatives;    // baseline false positives
  std::vector<TrainingSample> random_negatives;  // padding up to the positive count

  std::vector<TrainingSample> all() const;
};

// One positive per annotation: the full query and reference videos with the
// copy's start frames and length (the shorter of the two spans).
std::vector<TrainingSample> positive_samples(const std::vector<VideoFeatures>& references,
                                             const std::vector<VideoFeatures>& queries,
                                             const std::vector<CopyAnnotation>& annotations);

// Runs the pipeline without the encoder over every training query; each
// detection that overlaps no annotation becomes a negative built from the
// detected query and reference spans. Self-matches are ignored. If the
// negatives are fewer than the positives, random reference crops pad them.
MinedSamples mine_hard_negatives(const std::vector<VideoFeatures>& references,
                                 const std::vector<VideoFeatures>& queries,
                                 const std::vector<CopyAnnotation>& annotations,
                                 const MiningOptions& options);

}  // namespace pvcd

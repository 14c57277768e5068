#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pvcd/feature_io.hpp"

namespace pvcd {

// Reference videos of random unit frames, plus queries that each copy a
// span of one reference with Gaussian noise and re-normalization.
struct PlantedCopyConfig {
  std::size_t n_references = 50;
  std::size_t frames_per_reference = 60;
  std::size_t dim = 32;
  std::size_t n_queries = 20;
  std::size_t copy_length = 10;
  std::size_t query_padding = 0;  // random frames before and after the copy
  double noise_sigma = 0.1;
  // Weight of a direction shared by every frame; > 0 makes unrelated frames
  // look alike, as CNN features of natural video tend to.
  double common_component = 0.0;
  std::uint64_t seed = 0;
};

struct PlantedCopyFixture {
  std::vector<VideoFeatures> references;
  std::vector<VideoFeatures> queries;
  std::vector<CopyAnnotation> annotations;  // video_a = query, video_b = reference
};

FeatureMatrix random_unit_rows(std::size_t n, std::size_t dim, std::mt19937_64& rng);

PlantedCopyFixture make_planted_copy_fixture(const PlantedCopyConfig& config);

}  // namespace pvcd

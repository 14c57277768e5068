#include "pvcd/synthetic.hpp"

#include <string>

namespace pvcd {

FeatureMatrix random_unit_rows(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  FeatureMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
  normalize_rows_in_place(m, "random rows");
  return m;
}

PlantedCopyFixture make_planted_copy_fixture(const PlantedCopyConfig& config) {
  std::mt19937_64 rng(config.seed);
  const auto dim = static_cast<Eigen::Index>(config.dim);
  Eigen::RowVectorXf common = random_unit_rows(1, config.dim, rng).row(0);

  auto frames = [&](std::size_t n) {
    FeatureMatrix m = random_unit_rows(n, config.dim, rng);
    if (config.common_component > 0) {
      m.rowwise() += config.common_component * common;
      normalize_rows_in_place(m, "synthetic frames");
    }
    return m;
  };

  PlantedCopyFixture fx;
  for (std::size_t i = 0; i < config.n_references; ++i) {
    fx.references.push_back({"ref" + std::to_string(i), 1.0, frames(config.frames_per_reference)});
  }

  std::uniform_int_distribution<std::size_t> pick_ref(0, config.n_references - 1);
  std::uniform_int_distribution<std::size_t> pick_start(
      0, config.frames_per_reference - config.copy_length);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(config.noise_sigma));
  const auto pad = static_cast<Eigen::Index>(config.query_padding);
  const auto len = static_cast<Eigen::Index>(config.copy_length);

  for (std::size_t q = 0; q < config.n_queries; ++q) {
    const auto ref = pick_ref(rng);
    const auto start = pick_start(rng);
    FeatureMatrix copy = fx.references[ref].matrix.middleRows(static_cast<Eigen::Index>(start), len);
    for (Eigen::Index i = 0; i < copy.size(); ++i) copy.data()[i] += noise(rng);
    normalize_rows_in_place(copy, "noisy copy");

    FeatureMatrix query(len + 2 * pad, dim);
    if (pad > 0) {
      query.topRows(pad) = frames(config.query_padding);
      query.bottomRows(pad) = frames(config.query_padding);
    }
    query.middleRows(pad, len) = copy;

    VideoFeatures v{"query" + std::to_string(q), 1.0, std::move(query)};
    fx.annotations.push_back({v.video_id, fx.references[ref].video_id,
                              static_cast<double>(pad), static_cast<double>(pad + len - 1),
                              static_cast<double>(start),
                              static_cast<double>(start + config.copy_length - 1)});
    fx.queries.push_back(std::move(v));
  }
  return fx;
}

}  // namespace pvcd

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pvcd/candidate_scoring.hpp"
#include "pvcd/encoder.hpp"
#include "pvcd/evaluation.hpp"
#include "pvcd/feature_index.hpp"
#include "pvcd/localization.hpp"
#include "pvcd/similarity_matrix.hpp"

namespace pvcd {

enum class MatrixMode {
  reconstructed,  // sparse matrix from the KNN hits of each candidate
  original,       // dense matrix against the candidate's stored frames
  scan,           // dense matrix against every stored video, no shortlist
};

std::string_view to_string(MatrixMode mode);
MatrixMode parse_matrix_mode(std::string_view text);

struct QueryParams {
  std::size_t top_k_all = kDefaultTopKAll;
  std::size_t top_k_one = kDefaultTopKOne;
  std::size_t top_k_video = kDefaultTopKVideo;
  double sim_th = kDefaultSimThreshold;
  std::size_t max_step = 5;
  std::size_t max_diff = 5;
  MatrixMode matrix_mode = MatrixMode::reconstructed;
  bool use_encoder = false;
  std::size_t n_probe = 1;
  std::size_t max_segments = 1;
  double fps = 1.0;      // frame rate of the indexed reference features
  unsigned threads = 0;  // KNN batch workers, 0 = hardware concurrency

  void validate() const;
  PathParams path_params() const;
};

struct EncoderModel {
  EncoderWeights weights;
  EncoderConfig config;
};

// Offline side: optionally encodes every reference video before building
// the index, so queries run with the same encoder see comparable rows.
GlobalIndex build_reference_index(std::vector<VideoFeatures> videos,
                                  const EncoderModel* encoder = nullptr,
                                  std::size_t ivf_cells = 0,
                                  std::size_t kmeans_iters = kDefaultKmeansIters,
                                  std::uint64_t seed = 0);

// Online side: KNN search, candidate shortlist, per-candidate similarity
// matrix, top-K/threshold filter and path localization. Detections come
// back sorted by descending sim, ties in candidate-rank order.
// When params.use_encoder is set, `encoder` must be supplied and the index
// must have been built with the same encoder.
std::vector<Detection> run_query(const GlobalIndex& index, const VideoFeatures& query,
                                 const QueryParams& params,
                                 const EncoderModel* encoder = nullptr);

// Baseline that localizes against every reference video with its dense
// similarity matrix. top_k_all and top_k_video are unused.
std::vector<Detection> run_scan(const std::vector<VideoFeatures>& references,
                                const VideoFeatures& query, const QueryParams& params,
                                const EncoderModel* encoder = nullptr);

struct BenchOptions {
  std::size_t top_k_all = kDefaultTopKAll;
  std::vector<std::size_t> n_probes;  // empty: 1, 4, 16 and all cells
  std::size_t repetitions = 1;
  std::size_t ivf_cells = 256;  // used only when the index has no IVF section
  std::size_t kmeans_iters = kDefaultKmeansIters;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string method;
  std::size_t n_probe = 0;  // 0 for methods without a coarse quantizer
  double ms_per_frame = 0;
  double speedup = 0;       // relative to matrix multiplication
  double recall_vs_flat = 1;
};

struct BenchReport {
  std::size_t query_frames = 0;
  std::size_t database_rows = 0;
  std::size_t dim = 0;
  std::size_t ivf_cells = 0;
  bool ivf_full_probe_matches_flat = false;
  std::vector<BenchRow> rows;
};

// Average per-frame search time of brute-force matrix multiplication plus
// sorting, the flat index, and the IVF index at each n_probe.
BenchReport bench_search(const GlobalIndex& index, const FeatureMatrix& queries,
                         const BenchOptions& options);
std::string format_bench_table(const BenchReport& report);
nlohmann::json to_json(const BenchReport& report);

}  // namespace pvcd

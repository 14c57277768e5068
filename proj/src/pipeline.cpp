#include "pvcd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

struct Reference {
  const std::string* id;
  Eigen::Ref<const FeatureMatrix> rows;
  double fps;
};

Detection to_detection(const CopySegment& seg, const std::string& query_id, double query_fps,
                       const std::string& reference_id, double reference_fps) {
  Detection d;
  d.query_id = query_id;
  d.reference_id = reference_id;
  d.q_start_s = seg.q_start / query_fps;
  d.q_end_s = seg.q_end / query_fps;
  d.r_start_s = seg.r_start / reference_fps;
  d.r_end_s = seg.r_end / reference_fps;
  d.sim = seg.sim;
  d.length = seg.length;
  return d;
}

void sort_by_sim(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.sim > b.sim; });
}

FeatureMatrix prepare_query(const VideoFeatures& query, const QueryParams& params,
                            const EncoderModel* encoder) {
  params.validate();
  if (params.use_encoder && !encoder) throw QueryError("encoder requested but no weights given");
  if (!params.use_encoder && encoder) throw QueryError("encoder weights given but use_encoder is off");
  if (query.matrix.rows() == 0) throw QueryError("query '" + query.video_id + "' has no frames");
  if (!(query.fps > 0)) throw QueryError("query fps must be positive");
  FeatureMatrix rows = query.matrix;
  normalize_rows_in_place(rows, query.video_id);
  if (encoder) rows = encode_features(rows, encoder->weights, encoder->config);
  return rows;
}

std::vector<Detection> scan_references(const FeatureMatrix& query_rows, const VideoFeatures& query,
                                       const std::vector<Reference>& references,
                                       const QueryParams& params) {
  const auto path = params.path_params();
  std::vector<Detection> out;
  for (const auto& ref : references) {
    if (ref.rows.cols() != query_rows.cols()) {
      throw QueryError("query d=" + std::to_string(query_rows.cols()) + " but reference '" +
                       *ref.id + "' has d=" + std::to_string(ref.rows.cols()));
    }
    const auto filtered =
        filter_top_k_one(dense_similarity(query_rows, ref.rows), params.top_k_one, params.sim_th);
    for (const auto& seg : extract_segments(filtered, path, params.max_segments)) {
      out.push_back(to_detection(seg, query.video_id, query.fps, *ref.id, ref.fps));
    }
  }
  sort_by_sim(out);
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::vector<std::vector<std::uint32_t>> hit_rows(const GlobalIndex& index,
                                                 const std::vector<HitList>& hits) {
  std::vector<std::vector<std::uint32_t>> rows;
  for (const auto& list : hits) {
    auto& r = rows.emplace_back();
    for (const auto& h : list) r.push_back(static_cast<std::uint32_t>(index.row_of(h.frame_ref)));
  }
  return rows;
}

double recall_against(const std::vector<std::vector<std::uint32_t>>& truth,
                      const std::vector<std::vector<std::uint32_t>>& found) {
  std::size_t total = 0, hit = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    const std::set<std::uint32_t> got(found[t].begin(), found[t].end());
    total += truth[t].size();
    for (auto r : truth[t]) hit += got.count(r);
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 1.0;
}

}  // namespace

std::string_view to_string(MatrixMode mode) {
  switch (mode) {
    case MatrixMode::reconstructed: return "reconstructed";
    case MatrixMode::original: return "original";
    case MatrixMode::scan: return "scan";
  }
  return "?";
}

MatrixMode parse_matrix_mode(std::string_view text) {
  if (text == "reconstructed") return MatrixMode::reconstructed;
  if (text == "original") return MatrixMode::original;
  if (text == "scan") return MatrixMode::scan;
  throw ParseError("unknown matrix mode '" + std::string(text) +
                   "' (expected reconstructed, original or scan)");
}

void QueryParams::validate() const {
  if (top_k_all == 0 || top_k_one == 0 || top_k_video == 0 || max_segments == 0) {
    throw QueryError("top_k_all, top_k_one, top_k_video and max_segments must be >= 1");
  }
  if (!(sim_th >= -1.0 && sim_th <= 1.0)) throw QueryError("sim_th must lie in [-1, 1]");
  if (max_step == 0) throw QueryError("max_step must be >= 1");
  if (n_probe == 0) throw QueryError("n_probe must be >= 1");
  if (!(fps > 0)) throw QueryError("fps must be positive");
}

PathParams QueryParams::path_params() const {
  return {max_step, max_diff, sim_th, top_k_one};
}

GlobalIndex build_reference_index(std::vector<VideoFeatures> videos, const EncoderModel* encoder,
                                  std::size_t ivf_cells, std::size_t kmeans_iters,
                                  std::uint64_t seed) {
  if (encoder) {
    for (auto& v : videos) {
      normalize_rows_in_place(v.matrix, v.video_id);
      v.matrix = encode_features(v.matrix, encoder->weights, encoder->config);
    }
  }
  if (ivf_cells > 0) return build_ivf_index(videos, ivf_cells, kmeans_iters, seed);
  return build_flat_index(videos);
}

std::vector<Detection> run_query(const GlobalIndex& index, const VideoFeatures& query,
                                 const QueryParams& params, const EncoderModel* encoder) {
  const FeatureMatrix rows = prepare_query(query, params, encoder);
  if (static_cast<std::size_t>(rows.cols()) != index.dim()) {
    throw QueryError("query '" + query.video_id + "' has d=" + std::to_string(rows.cols()) +
                     " but the index has d=" + std::to_string(index.dim()));
  }

  if (params.matrix_mode == MatrixMode::scan) {
    std::vector<Reference> refs;
    for (std::size_t i = 0; i < index.video_count(); ++i) {
      refs.push_back({&index.videos()[i].video_id, index.video_rows(i), params.fps});
    }
    return scan_references(rows, query, refs, params);
  }

  const auto hits = knn_search_batch(index, rows, params.top_k_all, params.n_probe, params.threads);
  const auto candidates = top_videos(score_videos(hits), params.top_k_video);
  const auto path = params.path_params();

  std::vector<Detection> out;
  for (const auto& cand : candidates) {
    const auto& entry = index.videos()[cand.video_index];
    const auto matrix = params.matrix_mode == MatrixMode::reconstructed
                            ? reconstructed_similarity(hits, cand.video_index, entry.frame_count)
                            : dense_similarity(rows, index.video_rows(cand.video_index));
    const auto filtered = filter_top_k_one(matrix, params.top_k_one, params.sim_th);
    for (const auto& seg : extract_segments(filtered, path, params.max_segments)) {
      out.push_back(to_detection(seg, query.video_id, query.fps, entry.video_id, params.fps));
    }
  }
  sort_by_sim(out);
  return out;
}

std::vector<Detection> run_scan(const std::vector<VideoFeatures>& references,
                                const VideoFeatures& query, const QueryParams& params,
                                const EncoderModel* encoder) {
  const FeatureMatrix rows = prepare_query(query, params, encoder);
  std::vector<FeatureMatrix> prepared;
  prepared.reserve(references.size());
  for (const auto& r : references) {
    if (r.matrix.rows() == 0) throw QueryError("reference '" + r.video_id + "' has no frames");
    FeatureMatrix m = r.matrix;
    normalize_rows_in_place(m, r.video_id);
    if (encoder) m = encode_features(m, encoder->weights, encoder->config);
    prepared.push_back(std::move(m));
  }
  std::vector<Reference> refs;
  for (std::size_t i = 0; i < references.size(); ++i) {
    refs.push_back({&references[i].video_id, prepared[i], references[i].fps});
  }
  return scan_references(rows, query, refs, params);
}

BenchReport bench_search(const GlobalIndex& index, const FeatureMatrix& queries,
                         const BenchOptions& options) {
  if (queries.rows() == 0) throw QueryError("bench needs at least one query frame");
  if (static_cast<std::size_t>(queries.cols()) != index.dim()) {
    throw QueryError("bench queries have d=" + std::to_string(queries.cols()) +
                     " but the index has d=" + std::to_string(index.dim()));
  }
  const std::size_t reps = std::max<std::size_t>(1, options.repetitions);
  const auto k = std::min(options.top_k_all, index.row_count());
  FeatureMatrix q = queries;
  normalize_rows_in_place(q, "bench queries");
  const auto frames = static_cast<double>(q.rows()) * static_cast<double>(reps);

  BenchReport report;
  report.query_frames = static_cast<std::size_t>(q.rows());
  report.database_rows = index.row_count();
  report.dim = index.dim();

  // Brute force: one GEMM against every stored row, then a full sort per frame.
  std::vector<std::vector<std::uint32_t>> brute_rows;
  auto start = std::chrono::steady_clock::now();
  for (std::size_t rep = 0; rep < reps; ++rep) {
    const Eigen::MatrixXf sims = q * index.rows().transpose();
    brute_rows.assign(static_cast<std::size_t>(q.rows()), {});
    std::vector<std::uint32_t> order(index.row_count());
    for (Eigen::Index t = 0; t < sims.rows(); ++t) {
      std::iota(order.begin(), order.end(), 0u);
      std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return sims(t, a) > sims(t, b) || (sims(t, a) == sims(t, b) && a < b);
      });
      brute_rows[t].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    }
  }
  const double brute_ms = elapsed_ms(start) / frames;

  std::vector<HitList> flat_hits;
  const GlobalIndex flat_index = index.without_ivf();
  start = std::chrono::steady_clock::now();
  for (std::size_t rep = 0; rep < reps; ++rep) {
    flat_hits = knn_search_batch(flat_index, q, k, 1, 1);
  }
  const double flat_ms = elapsed_ms(start) / frames;
  const auto flat_rows = hit_rows(flat_index, flat_hits);

  report.rows.push_back({"Matrix multiplication", 0, brute_ms, 1.0, recall_against(flat_rows, brute_rows)});
  report.rows.push_back({"Flat-CPU", 0, flat_ms, brute_ms / flat_ms, 1.0});

  const GlobalIndex ivf_index =
      index.ivf() ? index
                  : with_ivf(flat_index, std::min(options.ivf_cells, index.row_count()),
                             options.kmeans_iters, options.seed);
  const auto n_cells = ivf_index.ivf()->n_cells();
  report.ivf_cells = n_cells;
  std::vector<std::size_t> probes = options.n_probes;
  if (probes.empty()) probes = {1, 4, 16, n_cells};
  std::set<std::size_t> unique_probes;
  for (auto p : probes) unique_probes.insert(std::clamp<std::size_t>(p, 1, n_cells));

  for (auto p : unique_probes) {
    std::vector<HitList> hits;
    start = std::chrono::steady_clock::now();
    for (std::size_t rep = 0; rep < reps; ++rep) hits = knn_search_batch(ivf_index, q, k, p, 1);
    const double ms = elapsed_ms(start) / frames;
    report.rows.push_back({"IVF" + std::to_string(n_cells) + "-Flat-CPU", p, ms, brute_ms / ms,
                           recall_against(flat_rows, hit_rows(ivf_index, hits))});
  }
  report.ivf_full_probe_matches_flat = knn_search_batch(ivf_index, q, k, n_cells, 1) == flat_hits;
  return report;
}

std::string format_bench_table(const BenchReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "Average search time per frame (%zu query frames, %zu rows, d=%zu)\n",
                report.query_frames, report.database_rows, report.dim);
  out << line;
  std::snprintf(line, sizeof line, "%-28s %8s %12s %10s %10s\n", "Method", "n_probe", "time(ms)",
                "Speed up", "recall@K");
  out << line;
  for (const auto& r : report.rows) {
    const std::string probe = r.n_probe ? std::to_string(r.n_probe) : "-";
    std::snprintf(line, sizeof line, "%-28s %8s %12.5f %10.2f %10.4f\n", r.method.c_str(),
                  probe.c_str(), r.ms_per_frame, r.speedup, r.recall_vs_flat);
    out << line;
  }
  out << "IVF with n_probe = n_cells matches flat: "
      << (report.ivf_full_probe_matches_flat ? "yes" : "no") << '\n';
  return out.str();
}

nlohmann::json to_json(const BenchReport& report) {
  auto rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"method", r.method},
                    {"n_probe", r.n_probe},
                    {"ms_per_frame", r.ms_per_frame},
                    {"speedup", r.speedup},
                    {"recall_vs_flat", r.recall_vs_flat}});
  }
  return {{"query_frames", report.query_frames},
          {"database_rows", report.database_rows},
          {"dim", report.dim},
          {"ivf_cells", report.ivf_cells},
          {"ivf_full_probe_matches_flat", report.ivf_full_probe_matches_flat},
          {"rows", rows}};
}

}  // namespace pvcd

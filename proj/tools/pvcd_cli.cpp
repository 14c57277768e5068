#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "pvcd/encoder.hpp"
#include "pvcd/errors.hpp"
#include "pvcd/evaluation.hpp"
#include "pvcd/feature_index.hpp"
#include "pvcd/pipeline.hpp"
#include "pvcd/synthetic.hpp"
#include "pvcd/training_data.hpp"

namespace fs = std::filesystem;
using namespace pvcd;

namespace {

std::optional<EncoderModel> maybe_load_encoder(const std::string& path) {
  if (path.empty()) return std::nullopt;
  auto [weights, config] = load_weights(path);
  return EncoderModel{std::move(weights), config};
}

void add_query_options(CLI::App* cmd, QueryParams& p, std::string& mode) {
  cmd->add_option("--top-k-all", p.top_k_all, "KNN results per query frame")->capture_default_str();
  cmd->add_option("--top-k-one", p.top_k_one, "entries kept per similarity-matrix row")
      ->capture_default_str();
  cmd->add_option("--top-k-video", p.top_k_video, "candidate videos per query")->capture_default_str();
  cmd->add_option("--sim-th", p.sim_th, "minimum frame similarity on a path")->capture_default_str();
  cmd->add_option("--max-step", p.max_step, "largest row/column step between path nodes")
      ->capture_default_str();
  cmd->add_option("--max-diff", p.max_diff, "diagonal band half-width, 0 = diagonal only")
      ->capture_default_str();
  cmd->add_option("--mode", mode, "reconstructed | original | scan")->capture_default_str();
  cmd->add_option("--n-probe", p.n_probe, "IVF cells probed per query frame")->capture_default_str();
  cmd->add_option("--max-segments", p.max_segments, "detections per candidate video")
      ->capture_default_str();
  cmd->add_option("--ref-fps", p.fps, "frame rate of the indexed reference features")
      ->capture_default_str();
  cmd->add_option("--threads", p.threads, "KNN search workers, 0 = all cores")->capture_default_str();
}

int cmd_index(const fs::path& manifest, const fs::path& out, std::size_t cells, std::size_t iters,
              std::uint64_t seed, const std::string& weights) {
  const auto encoder = maybe_load_encoder(weights);
  auto videos = load_manifest_videos(manifest);
  const auto index =
      build_reference_index(std::move(videos), encoder ? &*encoder : nullptr, cells, iters, seed);
  save_index(index, out);
  std::fprintf(stderr, "indexed %zu videos, %zu frames, d=%zu%s\n", index.video_count(),
               index.row_count(), index.dim(),
               index.ivf() ? (", " + std::to_string(index.ivf()->lists.size()) + " IVF cells").c_str()
                           : "");
  return 0;
}

int cmd_query(const fs::path& index_path, const fs::path& query_path, const std::string& query_id,
              double query_fps, const std::string& weights, QueryParams params,
              const std::string& mode, const fs::path& out) {
  params.matrix_mode = parse_matrix_mode(mode);
  const auto encoder = maybe_load_encoder(weights);
  params.use_encoder = encoder.has_value();
  const auto index = load_index(index_path);
  auto query = load_feature_file(query_path, query_id);
  query.fps = query_fps;
  const auto detections = run_query(index, query, params, encoder ? &*encoder : nullptr);
  if (out.empty()) {
    write_detections_jsonl(detections, std::cout);
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot open " + out.string() + " for writing");
    write_detections_jsonl(detections, f);
  }
  std::fprintf(stderr, "%zu detections\n", detections.size());
  return 0;
}

int cmd_eval(const fs::path& detections, const fs::path& annotations, bool sweep) {
  const auto report = evaluation_report(load_detections(detections), load_annotations(annotations), sweep);
  std::cout << report.dump(2) << '\n';
  return 0;
}

struct TrainArgs {
  fs::path manifest;
  fs::path queries;
  fs::path annotations;
  fs::path out;
  fs::path history;
  fs::path init;
  EncoderConfig config;
  TrainOptions options;
  MiningOptions mining;
};

int cmd_train(TrainArgs& a) {
  const auto references = load_manifest_videos(a.manifest);
  const auto queries = a.queries.empty() ? references : load_manifest_videos(a.queries);
  const auto annotations = load_annotations(a.annotations);
  a.config.d = static_cast<std::size_t>(references.front().matrix.cols());
  a.mining.seed = a.options.seed;
  std::optional<EncoderWeights> initial;
  if (!a.init.empty()) {
    auto [w, cfg] = load_weights(a.init);
    if (cfg.d != a.config.d || cfg.n_heads != a.config.n_heads || cfg.ffn_dim != a.config.ffn_dim)
      throw Error("initial weights do not match --heads/--ffn-dim and the feature dimension");
    initial = std::move(w);
  }
  const auto mined = mine_hard_negatives(references, queries, annotations, a.mining);
  std::fprintf(stderr, "%zu positives, %zu hard negatives, %zu random negatives\n",
               mined.positives.size(), mined.hard_negatives.size(), mined.random_negatives.size());
  const auto result = train_encoder(mined.all(), a.config, a.options, initial);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
    std::fprintf(stderr, "epoch %zu mean loss %.6g\n", e + 1, result.epoch_loss[e]);
  save_weights(result.weights, a.config, a.out);
  if (!a.history.empty()) save_history_csv(result.epoch_loss, a.history);
  return 0;
}

int cmd_bench(const fs::path& index_path, const fs::path& queries_manifest, BenchOptions options,
              bool json) {
  const auto index = load_index(index_path);
  const auto queries = load_manifest_videos(queries_manifest);
  Eigen::Index total = 0;
  for (const auto& q : queries) total += q.matrix.rows();
  FeatureMatrix frames(total, static_cast<Eigen::Index>(index.dim()));
  Eigen::Index at = 0;
  for (const auto& q : queries) {
    if (static_cast<std::size_t>(q.matrix.cols()) != index.dim())
      throw QueryError("query '" + q.video_id + "' has d=" + std::to_string(q.matrix.cols()) +
                       ", index has d=" + std::to_string(index.dim()));
    frames.middleRows(at, q.matrix.rows()) = q.matrix;
    at += q.matrix.rows();
  }
  normalize_rows_in_place(frames, "bench queries");
  const auto report = bench_search(index, frames, options);
  if (json) {
    std::cout << to_json(report).dump(2) << '\n';
  } else {
    std::cout << format_bench_table(report);
  }
  return 0;
}

int cmd_synth(const PlantedCopyConfig& cfg, const fs::path& dir) {
  const auto fx = make_planted_copy_fixture(cfg);
  fs::create_directories(dir / "features");
  auto write_set = [&](const std::vector<VideoFeatures>& videos, const std::string& name) {
    std::ofstream m(dir / name);
    if (!m) throw IoError("cannot write " + (dir / name).string());
    m << "video_id,relative_path\n";
    for (const auto& v : videos) {
      save_feature_file(v, dir / "features" / (v.video_id + ".pvcf"));
      m << v.video_id << ",features/" << v.video_id << ".pvcf\n";
    }
  };
  write_set(fx.references, "references.csv");
  write_set(fx.queries, "queries.csv");
  save_annotations(fx.annotations, dir / "annotations.csv");
  std::fprintf(stderr, "wrote %zu references and %zu queries to %s\n", fx.references.size(),
               fx.queries.size(), dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Partial video copy detection over per-frame feature vectors"};
  app.require_subcommand(1);

  fs::path manifest, out;
  std::size_t ivf_cells = 0, kmeans_iters = kDefaultKmeansIters;
  std::uint64_t seed = 0;
  std::string weights;
  auto* index_cmd = app.add_subcommand("index", "build a global frame index from a manifest");
  index_cmd->add_option("--manifest", manifest, "CSV of video_id,relative_path")->required();
  index_cmd->add_option("--out", out, "index file to write")->required();
  index_cmd->add_option("--ivf-cells", ivf_cells, "IVF cells, 0 = flat only")->capture_default_str();
  index_cmd->add_option("--kmeans-iters", kmeans_iters, "k-means iterations")->capture_default_str();
  index_cmd->add_option("--seed", seed, "k-means seed")->capture_default_str();
  index_cmd->add_option("--weights", weights,
                        "encoder weights; reference features are encoded before indexing and "
                        "queries must then pass the same weights");

  fs::path index_path, query_path;
  std::string query_id, mode = "reconstructed";
  double query_fps = 1.0;
  QueryParams qp;
  auto* query_cmd = app.add_subcommand("query", "detect copies of one query video");
  query_cmd->add_option("--index", index_path, "index file")->required();
  query_cmd->add_option("--query", query_path, "query feature file")->required();
  query_cmd->add_option("--query-id", query_id, "query video id, default the file stem");
  query_cmd->add_option("--fps", query_fps, "query frame rate")->capture_default_str();
  query_cmd->add_option("--weights", weights,
                        "encoder weights; the index must have been built with the same file");
  query_cmd->add_option("--out", out, "JSON lines output, default stdout");
  add_query_options(query_cmd, qp, mode);

  fs::path detections, annotations;
  bool sweep = false;
  auto* eval_cmd = app.add_subcommand("eval", "segment precision, recall and F1");
  eval_cmd->add_option("--detections", detections, "JSON lines from query")->required();
  eval_cmd->add_option("--annotations", annotations, "annotation CSV")->required();
  eval_cmd->add_flag("--sweep", sweep, "report the best F1 over detection-score thresholds");

  TrainArgs ta;
  ta.config.seed = 0;
  auto* train_cmd = app.add_subcommand("train", "mine hard negatives and train the encoder");
  train_cmd->add_option("--manifest", ta.manifest, "reference videos")->required();
  train_cmd->add_option("--queries", ta.queries, "query videos, default the reference manifest");
  train_cmd->add_option("--annotations", ta.annotations, "annotation CSV")->required();
  train_cmd->add_option("--epochs", ta.options.epochs)->capture_default_str();
  train_cmd->add_option("--lr", ta.options.learning_rate)->capture_default_str();
  train_cmd->add_option("--heads", ta.config.n_heads)->capture_default_str();
  train_cmd->add_option("--ffn-dim", ta.config.ffn_dim)->capture_default_str();
  train_cmd->add_flag("--positional", ta.config.positional_encoding, "add sinusoidal positions");
  train_cmd->add_option("--w-zero", ta.options.loss.w_zero)->capture_default_str();
  train_cmd->add_option("--w-one", ta.options.loss.w_one)->capture_default_str();
  train_cmd->add_option("--crop-length", ta.mining.random_crop_length, "random negative crop length")
      ->capture_default_str();
  train_cmd->add_option("--seed", ta.options.seed)->capture_default_str();
  train_cmd->add_option("--init", ta.init, "start from these weights");
  train_cmd->add_option("--history", ta.history, "CSV of epoch,mean_loss");
  train_cmd->add_option("--out", ta.out, "weights file to write")->required();

  fs::path queries_manifest;
  BenchOptions bo;
  bool bench_json = false;
  auto* bench_cmd = app.add_subcommand("bench", "per-frame search time of flat and IVF search");
  bench_cmd->add_option("--index", index_path, "index file")->required();
  bench_cmd->add_option("--queries", queries_manifest, "manifest of query videos")->required();
  bench_cmd->add_option("--reps", bo.repetitions)->capture_default_str();
  bench_cmd->add_option("--top-k-all", bo.top_k_all)->capture_default_str();
  bench_cmd->add_option("--n-probe", bo.n_probes, "probe counts, default 1 4 16 and all cells");
  bench_cmd->add_option("--ivf-cells", bo.ivf_cells, "cells to build when the index has no IVF")
      ->capture_default_str();
  bench_cmd->add_option("--seed", bo.seed)->capture_default_str();
  bench_cmd->add_flag("--json", bench_json);

  PlantedCopyConfig pc;
  fs::path synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "write a planted-copy demo dataset");
  synth_cmd->add_option("--out", synth_dir, "output directory")->required();
  synth_cmd->add_option("--references", pc.n_references)->capture_default_str();
  synth_cmd->add_option("--frames", pc.frames_per_reference)->capture_default_str();
  synth_cmd->add_option("--dim", pc.dim)->capture_default_str();
  synth_cmd->add_option("--queries", pc.n_queries)->capture_default_str();
  synth_cmd->add_option("--copy-length", pc.copy_length)->capture_default_str();
  synth_cmd->add_option("--padding", pc.query_padding)->capture_default_str();
  synth_cmd->add_option("--noise", pc.noise_sigma)->capture_default_str();
  synth_cmd->add_option("--common", pc.common_component)->capture_default_str();
  synth_cmd->add_option("--seed", pc.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*index_cmd) return cmd_index(manifest, out, ivf_cells, kmeans_iters, seed, weights);
    if (*query_cmd) return cmd_query(index_path, query_path, query_id, query_fps, weights, qp, mode, out);
    if (*eval_cmd) return cmd_eval(detections, annotations, sweep);
    if (*train_cmd) return cmd_train(ta);
    if (*bench_cmd) return cmd_bench(index_path, queries_manifest, bo, bench_json);
    if (*synth_cmd) return cmd_synth(pc, synth_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

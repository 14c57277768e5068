#include "pvcd/feature_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <thread>

#include "pvcd/binary_io.hpp"
#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

struct Candidate {
  double sim;
  std::uint32_t row;
};

// Strict "ranks ahead of": higher similarity, then lower row.
bool ranks_ahead(const Candidate& a, const Candidate& b) {
  return a.sim > b.sim || (a.sim == b.sim && a.row < b.row);
}

// Bounded collector whose heap front is the weakest kept candidate.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) { heap_.reserve(k); }

  void offer(double sim, std::uint32_t row) {
    const Candidate c{sim, row};
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end(), ranks_ahead);
    } else if (ranks_ahead(c, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranks_ahead);
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end(), ranks_ahead);
    }
  }

  std::vector<Candidate> take_sorted() {
    std::sort_heap(heap_.begin(), heap_.end(), ranks_ahead);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

std::vector<std::uint32_t> nearest_cells(const IvfStructure& ivf, const float* query,
                                         std::size_t dim, std::size_t n_probe) {
  TopK top(n_probe);
  for (Eigen::Index c = 0; c < ivf.centroids.rows(); ++c) {
    top.offer(frame_dot(query, ivf.centroids.row(c).data(), dim), static_cast<std::uint32_t>(c));
  }
  std::vector<std::uint32_t> cells;
  for (const auto& cand : top.take_sorted()) cells.push_back(cand.row);
  return cells;
}

// Returns, for every row, the index of the centroid with the largest dot
// product (ties to the lower index) and that similarity.
void assign_rows(const FeatureMatrix& rows, const FeatureMatrix& centroids,
                 std::vector<std::uint32_t>& assignment, std::vector<double>& similarity) {
  const auto dim = static_cast<std::size_t>(rows.cols());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    double best = -std::numeric_limits<double>::infinity();
    std::uint32_t best_cell = 0;
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
      const double s = frame_dot(rows.row(r).data(), centroids.row(c).data(), dim);
      if (s > best) {
        best = s;
        best_cell = static_cast<std::uint32_t>(c);
      }
    }
    assignment[r] = best_cell;
    similarity[r] = best;
  }
}

IvfStructure train_ivf(const FeatureMatrix& rows, std::size_t n_cells, std::size_t iters,
                       std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(rows.rows());
  const auto dim = rows.cols();
  if (n_cells == 0) throw BuildError("IVF needs at least one cell");
  if (n_cells > n) {
    throw BuildError("IVF cell count " + std::to_string(n_cells) + " exceeds row count " +
                     std::to_string(n));
  }

  // Seeded random-row initialization: partial Fisher-Yates over row ids.
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < n_cells; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  FeatureMatrix centroids(n_cells, dim);
  for (std::size_t c = 0; c < n_cells; ++c) centroids.row(c) = rows.row(order[c]);

  std::vector<std::uint32_t> assignment(n);
  std::vector<double> similarity(n);
  for (std::size_t it = 0; it < iters; ++it) {
    assign_rows(rows, centroids, assignment, similarity);

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_cells), dim);
    std::vector<std::size_t> counts(n_cells, 0);
    for (std::size_t r = 0; r < n; ++r) {
      sums.row(assignment[r]) += rows.row(r).cast<double>();
      ++counts[assignment[r]];
    }

    std::set<std::uint32_t> reseeded;
    for (std::size_t c = 0; c < n_cells; ++c) {
      const double norm = sums.row(c).norm();
      if (counts[c] > 0 && norm > 0.0) {
        centroids.row(c) = (sums.row(c) / norm).cast<float>();
        continue;
      }
      // Empty cell: re-seed from the row farthest from its own centroid.
      std::size_t farthest = n;
      for (std::size_t r = 0; r < n; ++r) {
        if (reseeded.count(static_cast<std::uint32_t>(r))) continue;
        if (farthest == n || similarity[r] < similarity[farthest]) farthest = r;
      }
      if (farthest == n) continue;
      reseeded.insert(static_cast<std::uint32_t>(farthest));
      centroids.row(c) = rows.row(farthest);
    }
  }

  assign_rows(rows, centroids, assignment, similarity);
  IvfStructure ivf;
  ivf.centroids = std::move(centroids);
  ivf.lists.resize(n_cells);
  for (std::size_t r = 0; r < n; ++r) ivf.lists[assignment[r]].push_back(static_cast<std::uint32_t>(r));
  return ivf;
}

}  // namespace

double frame_dot(const float* a, const float* b, std::size_t dim) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    acc[0] += static_cast<double>(a[i]) * b[i];
    acc[1] += static_cast<double>(a[i + 1]) * b[i + 1];
    acc[2] += static_cast<double>(a[i + 2]) * b[i + 2];
    acc[3] += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < dim; ++i) acc[0] += static_cast<double>(a[i]) * b[i];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

std::size_t GlobalIndex::row_of(FrameRef ref) const {
  const auto& v = videos_.at(ref.video_index);
  if (ref.frame_index >= v.frame_count) {
    throw QueryError("frame " + std::to_string(ref.frame_index) + " out of range for video " +
                     v.video_id);
  }
  return v.first_row + ref.frame_index;
}

Eigen::Ref<const FeatureMatrix> GlobalIndex::video_rows(std::size_t video_index) const {
  const auto& v = videos_.at(video_index);
  return rows_.middleRows(static_cast<Eigen::Index>(v.first_row),
                          static_cast<Eigen::Index>(v.frame_count));
}

std::optional<std::size_t> GlobalIndex::find_video(std::string_view video_id) const {
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    if (videos_[i].video_id == video_id) return i;
  }
  return std::nullopt;
}

void GlobalIndex::rebuild_id_map() {
  id_map_.clear();
  id_map_.reserve(row_count());
  for (std::size_t i = 0; i < videos_.size(); ++i) {
    for (std::size_t j = 0; j < videos_[i].frame_count; ++j) {
      id_map_.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
    }
  }
}

GlobalIndex build_flat_index(const std::vector<VideoFeatures>& videos) {
  if (videos.empty()) throw BuildError("cannot build an index from an empty video list");
  const auto dim = videos.front().matrix.cols();
  std::size_t total = 0;
  std::set<std::string_view> ids;
  for (const auto& v : videos) {
    if (v.matrix.rows() == 0 || v.matrix.cols() == 0) {
      throw BuildError("video '" + v.video_id + "' has no frames");
    }
    if (v.matrix.cols() != dim) {
      throw BuildError("dimension mismatch: video '" + videos.front().video_id + "' has d=" +
                       std::to_string(dim) + " but video '" + v.video_id + "' has d=" +
                       std::to_string(v.matrix.cols()));
    }
    if (!ids.insert(v.video_id).second) {
      throw BuildError("duplicate video id '" + v.video_id + "'");
    }
    total += v.frame_count();
  }

  GlobalIndex index;
  index.rows_.resize(static_cast<Eigen::Index>(total), dim);
  std::size_t next = 0;
  for (const auto& v : videos) {
    FeatureMatrix m = v.matrix;
    normalize_rows_in_place(m, v.video_id);
    index.rows_.middleRows(static_cast<Eigen::Index>(next), m.rows()) = m;
    index.videos_.push_back({v.video_id, v.frame_count(), next});
    next += v.frame_count();
  }
  index.rebuild_id_map();
  return index;
}

GlobalIndex with_ivf(GlobalIndex index, std::size_t n_cells, std::size_t kmeans_iters,
                     std::uint64_t seed) {
  index.ivf_ = train_ivf(index.rows_, n_cells, kmeans_iters, seed);
  return index;
}

GlobalIndex build_ivf_index(const std::vector<VideoFeatures>& videos, std::size_t n_cells,
                            std::size_t kmeans_iters, std::uint64_t seed) {
  return with_ivf(build_flat_index(videos), n_cells, kmeans_iters, seed);
}

HitList knn_search(const GlobalIndex& index, std::span<const float> query,
                   std::size_t top_k_all, std::size_t n_probe) {
  if (query.size() != index.dim()) {
    throw QueryError("query dimension " + std::to_string(query.size()) +
                     " does not match index dimension " + std::to_string(index.dim()));
  }
  if (top_k_all == 0) throw QueryError("top_k_all must be >= 1");
  const auto dim = index.dim();
  TopK top(top_k_all);

  if (const auto& ivf = index.ivf()) {
    if (n_probe == 0 || n_probe > ivf->n_cells()) {
      throw QueryError("n_probe must be in [1, " + std::to_string(ivf->n_cells()) + "], got " +
                       std::to_string(n_probe));
    }
    for (auto cell : nearest_cells(*ivf, query.data(), dim, n_probe)) {
      for (auto r : ivf->lists[cell]) {
        top.offer(frame_dot(query.data(), index.row(r).data(), dim), r);
      }
    }
  } else {
    for (std::size_t r = 0; r < index.row_count(); ++r) {
      top.offer(frame_dot(query.data(), index.row(r).data(), dim), static_cast<std::uint32_t>(r));
    }
  }

  HitList hits;
  for (const auto& c : top.take_sorted()) hits.push_back({index.frame_ref(c.row), c.sim});
  return hits;
}

std::vector<HitList> knn_search_batch(const GlobalIndex& index,
                                      const Eigen::Ref<const FeatureMatrix>& queries,
                                      std::size_t top_k_all, std::size_t n_probe,
                                      unsigned threads) {
  const auto n = static_cast<std::size_t>(queries.rows());
  if (n == 0) throw QueryError("empty query matrix");
  if (static_cast<std::size_t>(queries.cols()) != index.dim()) {
    throw QueryError("query dimension " + std::to_string(queries.cols()) +
                     " does not match index dimension " + std::to_string(index.dim()));
  }
  if (top_k_all == 0) throw QueryError("top_k_all must be >= 1");
  if (index.ivf() && (n_probe == 0 || n_probe > index.ivf()->n_cells())) {
    throw QueryError("n_probe must be in [1, " + std::to_string(index.ivf()->n_cells()) +
                     "], got " + std::to_string(n_probe));
  }
  std::vector<HitList> out(n);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      out[t] = knn_search(index, {queries.row(static_cast<Eigen::Index>(t)).data(), index.dim()},
                          top_k_all, n_probe);
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>(threads, n);
  if (workers <= 1) {
    run(0, n);
    return out;
  }
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
      pool.emplace_back(run, begin, std::min(n, begin + chunk));
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_index(const GlobalIndex& index) {
  ByteWriter w;
  w.put_bytes(std::string_view(kIndexMagic, 4));
  w.put_u16(kIndexVersion);
  w.put_u32(static_cast<std::uint32_t>(index.dim()));
  w.put_u32(static_cast<std::uint32_t>(index.row_count()));
  w.put_u32(static_cast<std::uint32_t>(index.video_count()));
  for (const auto& v : index.videos()) {
    if (v.video_id.size() > 0xFFFF) throw FormatError("video id too long: " + v.video_id);
    w.put_u16(static_cast<std::uint16_t>(v.video_id.size()));
    w.put_bytes(v.video_id);
    w.put_u32(static_cast<std::uint32_t>(v.frame_count));
  }
  const auto& rows = index.rows();
  for (Eigen::Index i = 0; i < rows.size(); ++i) w.put_f32(rows.data()[i]);
  if (const auto& ivf = index.ivf()) {
    w.put_u8(1);
    w.put_u32(static_cast<std::uint32_t>(ivf->n_cells()));
    for (Eigen::Index i = 0; i < ivf->centroids.size(); ++i) w.put_f32(ivf->centroids.data()[i]);
    for (const auto& list : ivf->lists) {
      w.put_u32(static_cast<std::uint32_t>(list.size()));
      for (auto r : list) w.put_u32(r);
    }
  } else {
    w.put_u8(0);
  }
  return w.buffer();
}

GlobalIndex decode_index(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (r.get_bytes(4) != std::string_view(kIndexMagic, 4)) r.fail_at(0, "bad magic (expected PVCI)");
  const auto version_at = r.offset();
  if (const auto version = r.get_u16(); version != kIndexVersion) {
    r.fail_at(version_at, "unsupported version " + std::to_string(version));
  }
  const auto dim = r.get_u32();
  const auto row_count = r.get_u32();
  const auto n_videos = r.get_u32();
  if (dim == 0 || row_count == 0 || n_videos == 0) r.fail("empty index header");

  GlobalIndex index;
  std::size_t next = 0;
  for (std::uint32_t i = 0; i < n_videos; ++i) {
    const auto len = r.get_u16();
    auto id = r.get_bytes(len);
    const auto frames = r.get_u32();
    if (frames == 0) r.fail("video '" + id + "' has no frames");
    index.videos_.push_back({std::move(id), frames, next});
    next += frames;
  }
  if (next != row_count) {
    r.fail("row count " + std::to_string(row_count) + " disagrees with per-video frame total " +
           std::to_string(next));
  }
  if (r.remaining() < std::size_t{row_count} * dim * 4) r.fail("truncated row payload");
  index.rows_.resize(row_count, dim);
  for (Eigen::Index i = 0; i < index.rows_.size(); ++i) {
    const auto at = r.offset();
    const float v = r.get_f32();
    if (!std::isfinite(v)) r.fail_at(at, "non-finite value in row " + std::to_string(i / dim));
    index.rows_.data()[i] = v;
  }
  index.rebuild_id_map();

  const auto flag = r.get_u8();
  if (flag == 1) {
    IvfStructure ivf;
    const auto n_cells = r.get_u32();
    if (n_cells == 0 || n_cells > row_count) r.fail("invalid IVF cell count");
    ivf.centroids.resize(n_cells, dim);
    for (Eigen::Index i = 0; i < ivf.centroids.size(); ++i) ivf.centroids.data()[i] = r.get_f32();
    std::vector<bool> seen(row_count, false);
    ivf.lists.resize(n_cells);
    for (auto& list : ivf.lists) {
      const auto len = r.get_u32();
      if (len > row_count) r.fail("IVF list longer than the index");
      list.reserve(len);
      for (std::uint32_t k = 0; k < len; ++k) {
        const auto row = r.get_u32();
        if (row >= row_count || seen[row]) r.fail("IVF lists do not partition the rows");
        seen[row] = true;
        list.push_back(row);
      }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      r.fail("IVF lists do not cover every row");
    }
    index.ivf_ = std::move(ivf);
  } else if (flag != 0) {
    r.fail("invalid IVF flag " + std::to_string(flag));
  }
  if (r.remaining() != 0) r.fail("trailing bytes after index");
  return index;
}

void save_index(const GlobalIndex& index, const std::filesystem::path& path) {
  write_file_bytes(path, encode_index(index));
}

GlobalIndex load_index(const std::filesystem::path& path) {
  return decode_index(read_file_bytes(path), path.string());
}

}  // namespace pvcd

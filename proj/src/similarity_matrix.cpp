#include "pvcd/similarity_matrix.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "pvcd/errors.hpp"

namespace pvcd {

SparseSimMatrix::SparseSimMatrix(std::size_t n_rows, std::size_t n_cols,
                                 std::vector<SimEntry> entries)
    : n_rows_(n_rows), n_cols_(n_cols), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const SimEntry& a, const SimEntry& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.row >= n_rows_ || e.col >= n_cols_) {
      throw ShapeError("entry (" + std::to_string(e.row) + ", " + std::to_string(e.col) +
                       ") outside a " + std::to_string(n_rows_) + "x" + std::to_string(n_cols_) +
                       " matrix");
    }
    if (i > 0 && entries_[i - 1].row == e.row && entries_[i - 1].col == e.col) {
      throw ShapeError("duplicate entry (" + std::to_string(e.row) + ", " +
                       std::to_string(e.col) + ")");
    }
  }
}

SparseSimMatrix dense_similarity(const Eigen::Ref<const FeatureMatrix>& query,
                                 const Eigen::Ref<const FeatureMatrix>& reference) {
  if (query.cols() != reference.cols()) {
    throw ShapeError("dimension mismatch: query d=" + std::to_string(query.cols()) +
                     ", reference d=" + std::to_string(reference.cols()));
  }
  const auto dim = static_cast<std::size_t>(query.cols());
  std::vector<SimEntry> entries;
  entries.reserve(static_cast<std::size_t>(query.rows() * reference.rows()));
  for (Eigen::Index t = 0; t < query.rows(); ++t) {
    for (Eigen::Index j = 0; j < reference.rows(); ++j) {
      entries.push_back({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(j),
                         frame_dot(query.row(t).data(), reference.row(j).data(), dim)});
    }
  }
  return SparseSimMatrix(static_cast<std::size_t>(query.rows()),
                         static_cast<std::size_t>(reference.rows()), std::move(entries));
}

SparseSimMatrix reconstructed_similarity(const std::vector<HitList>& hits_per_frame,
                                         std::uint32_t video_index, std::size_t frame_count) {
  std::vector<SimEntry> entries;
  for (std::size_t t = 0; t < hits_per_frame.size(); ++t) {
    for (const auto& hit : hits_per_frame[t]) {
      if (hit.frame_ref.video_index != video_index) continue;
      if (hit.frame_ref.frame_index >= frame_count) {
        throw QueryError("hit on frame " + std::to_string(hit.frame_ref.frame_index) +
                         " of video " + std::to_string(video_index) + " which has only " +
                         std::to_string(frame_count) + " frames");
      }
      entries.push_back({static_cast<std::uint32_t>(t), hit.frame_ref.frame_index, hit.similarity});
    }
  }
  return SparseSimMatrix(hits_per_frame.size(), frame_count, std::move(entries));
}

SparseSimMatrix filter_top_k_one(const SparseSimMatrix& m, std::size_t top_k_one, double sim_th) {
  std::vector<SimEntry> kept;
  const auto& entries = m.entries();
  std::vector<SimEntry> row;
  for (std::size_t i = 0; i < entries.size();) {
    std::size_t end = i;
    while (end < entries.size() && entries[end].row == entries[i].row) ++end;
    row.assign(entries.begin() + static_cast<std::ptrdiff_t>(i),
               entries.begin() + static_cast<std::ptrdiff_t>(end));
    const auto k = std::min(top_k_one, row.size());
    std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end(),
                      [](const SimEntry& a, const SimEntry& b) {
                        return a.sim > b.sim || (a.sim == b.sim && a.col < b.col);
                      });
    for (std::size_t r = 0; r < k; ++r) {
      if (row[r].sim >= sim_th) kept.push_back(row[r]);
    }
    i = end;
  }
  return SparseSimMatrix(m.n_rows(), m.n_cols(), std::move(kept));
}

void write_matrix_csv(const SparseSimMatrix& m, std::ostream& out) {
  out << "row,col,sim\n" << std::setprecision(9);
  for (const auto& e : m.entries()) out << e.row << ',' << e.col << ',' << e.sim << '\n';
}

void save_matrix_csv(const SparseSimMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_matrix_csv(m, out);
}

}  // namespace pvcd

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "pvcd/feature_index.hpp"

namespace pvcd {

struct SimEntry {
  std::uint32_t row = 0;  // query frame
  std::uint32_t col = 0;  // reference frame
  double sim = 0.0;

  friend bool operator==(const SimEntry&, const SimEntry&) = default;
};

// Query-by-reference similarity matrix holding only its stored entries.
// Entries are kept sorted by (row, col) with no duplicate cells.
class SparseSimMatrix {
 public:
  SparseSimMatrix() = default;
  SparseSimMatrix(std::size_t n_rows, std::size_t n_cols) : n_rows_(n_rows), n_cols_(n_cols) {}

  // Sorts the entries; throws on out-of-range or duplicate cells.
  SparseSimMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<SimEntry> entries);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  const std::vector<SimEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  friend bool operator==(const SparseSimMatrix&, const SparseSimMatrix&) = default;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<SimEntry> entries_;
};

inline constexpr std::size_t kDefaultTopKOne = 20;
inline constexpr double kDefaultSimThreshold = 0.5;

// Every (t, j) pair of q_t . r_j. Rows must already be unit-norm.
SparseSimMatrix dense_similarity(const Eigen::Ref<const FeatureMatrix>& query,
                                 const Eigen::Ref<const FeatureMatrix>& reference);

// Only the cells returned by the KNN search for this video; everything else
// is an implicit zero.
SparseSimMatrix reconstructed_similarity(const std::vector<HitList>& hits_per_frame,
                                         std::uint32_t video_index, std::size_t frame_count);

// Keeps the top_k_one strongest entries of each row (ties to the lower
// column), then drops everything below sim_th. Entries equal to sim_th stay.
SparseSimMatrix filter_top_k_one(const SparseSimMatrix& m, std::size_t top_k_one, double sim_th);

// Debug dump, "row,col,sim" per line with a header.
void write_matrix_csv(const SparseSimMatrix& m, std::ostream& out);
void save_matrix_csv(const SparseSimMatrix& m, const std::filesystem::path& path);

}  // namespace pvcd

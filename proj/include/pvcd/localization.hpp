#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pvcd/similarity_matrix.hpp"

namespace pvcd {

// Constraints on a copy path through the similarity matrix.
//  - consecutive nodes advance by 1..max_step in both row and column;
//  - |row step - column step| < max_diff, or equal steps when max_diff == 0;
//  - every node has similarity >= sim_th;
//  - top_k_one is the per-row survivor count, applied by filter_top_k_one.
struct PathParams {
  std::size_t max_step = 5;
  std::size_t max_diff = 5;
  double sim_th = kDefaultSimThreshold;
  std::size_t top_k_one = kDefaultTopKOne;
};

// A localized copy. Boundaries are frame indices (inclusive); sim = score / length.
struct CopySegment {
  std::uint32_t q_start = 0;
  std::uint32_t q_end = 0;
  std::uint32_t r_start = 0;
  std::uint32_t r_end = 0;
  std::size_t length = 0;
  double score = 0.0;
  double sim = 0.0;
  std::vector<SimEntry> path;

  friend bool operator==(const CopySegment&, const CopySegment&) = default;
};

// True if `to` may directly follow `from` on a path.
bool valid_step(const SimEntry& from, const SimEntry& to, const PathParams& params);

// Maximum-score path over the stored entries of m. Among equal scores the
// longer path wins, then the earlier (q_start, r_start), then the earlier end.
// Returns nullopt when no entry passes sim_th.
std::optional<CopySegment> temporal_network(const SparseSimMatrix& m, const PathParams& params);

inline constexpr std::size_t kBruteForceNodeCap = 20;

// Exhaustive path enumeration with the same objective and tie rule. Only
// meant for verification; refuses matrices with more than
// kBruteForceNodeCap eligible entries.
std::optional<CopySegment> brute_force_best_path(const SparseSimMatrix& m,
                                                 const PathParams& params);

// Repeated temporal_network: after each winner, every entry inside its
// row-span x column-span rectangle is removed.
std::vector<CopySegment> extract_segments(const SparseSimMatrix& m, const PathParams& params,
                                          std::size_t max_segments = 1);

}  // namespace pvcd

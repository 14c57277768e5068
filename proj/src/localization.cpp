#include "pvcd/localization.hpp"

#include <algorithm>
#include <tuple>

#include "pvcd/errors.hpp"

namespace pvcd {
namespace {

std::vector<SimEntry> eligible_nodes(const SparseSimMatrix& m, double sim_th) {
  std::vector<SimEntry> nodes;
  for (const auto& e : m.entries()) {
    if (e.sim >= sim_th) nodes.push_back(e);
  }
  return nodes;  // inherits (row, col) order
}

// Ordering key for competing paths: is (score, length, start, end) of `a`
// preferable to `b`?
struct PathKey {
  double score;
  std::size_t length;
  std::uint32_t q_start, r_start, q_end, r_end;
};

bool preferable(const PathKey& a, const PathKey& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.length != b.length) return a.length > b.length;
  return std::tie(a.q_start, a.r_start, a.q_end, a.r_end) <
         std::tie(b.q_start, b.r_start, b.q_end, b.r_end);
}

CopySegment make_segment(std::vector<SimEntry> path, double score) {
  CopySegment seg;
  seg.q_start = path.front().row;
  seg.r_start = path.front().col;
  seg.q_end = path.back().row;
  seg.r_end = path.back().col;
  seg.length = path.size();
  seg.score = score;
  seg.sim = score / static_cast<double>(path.size());
  seg.path = std::move(path);
  return seg;
}

}  // namespace

bool valid_step(const SimEntry& from, const SimEntry& to, const PathParams& params) {
  if (to.row <= from.row || to.col <= from.col) return false;
  const std::size_t dr = to.row - from.row;
  const std::size_t dc = to.col - from.col;
  if (dr > params.max_step || dc > params.max_step) return false;
  const std::size_t skew = dr > dc ? dr - dc : dc - dr;
  return params.max_diff == 0 ? skew == 0 : skew < params.max_diff;
}

std::optional<CopySegment> temporal_network(const SparseSimMatrix& m, const PathParams& params) {
  const auto nodes = eligible_nodes(m, params.sim_th);
  if (nodes.empty()) return std::nullopt;

  struct Best {
    PathKey key;
    std::size_t prev;
  };
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<Best> best(nodes.size());

  std::size_t window_begin = 0;  // first node whose row may precede the current one
  for (std::size_t v = 0; v < nodes.size(); ++v) {
    const auto& node = nodes[v];
    while (window_begin < v &&
           static_cast<std::size_t>(nodes[window_begin].row) + params.max_step < node.row) {
      ++window_begin;
    }
    Best b{{node.sim, 1, node.row, node.col, node.row, node.col}, kNone};
    for (std::size_t u = window_begin; u < v && nodes[u].row < node.row; ++u) {
      if (!valid_step(nodes[u], node, params)) continue;
      const auto& pu = best[u].key;
      PathKey cand{pu.score + node.sim, pu.length + 1, pu.q_start, pu.r_start, node.row, node.col};
      if (preferable(cand, b.key)) b = {cand, u};
    }
    best[v] = b;
  }

  std::size_t end = 0;
  for (std::size_t v = 1; v < nodes.size(); ++v) {
    if (preferable(best[v].key, best[end].key)) end = v;
  }
  std::vector<SimEntry> path;
  for (auto v = end; v != kNone; v = best[v].prev) path.push_back(nodes[v]);
  std::reverse(path.begin(), path.end());
  return make_segment(std::move(path), best[end].key.score);
}

std::optional<CopySegment> brute_force_best_path(const SparseSimMatrix& m,
                                                 const PathParams& params) {
  const auto nodes = eligible_nodes(m, params.sim_th);
  if (nodes.size() > kBruteForceNodeCap) {
    throw Error("brute_force_best_path refuses " + std::to_string(nodes.size()) +
                " nodes (cap " + std::to_string(kBruteForceNodeCap) + ")");
  }
  if (nodes.empty()) return std::nullopt;

  std::optional<PathKey> best_key;
  std::vector<std::size_t> best_path;
  std::vector<std::size_t> stack;

  // Scores accumulate front to back, the same order as the dynamic program.
  auto visit = [&](auto&& self, double score) -> void {
    const auto& first = nodes[stack.front()];
    const auto& last = nodes[stack.back()];
    const PathKey key{score, stack.size(), first.row, first.col, last.row, last.col};
    if (!best_key || preferable(key, *best_key)) {
      best_key = key;
      best_path = stack;
    }
    for (std::size_t next = stack.back() + 1; next < nodes.size(); ++next) {
      if (!valid_step(last, nodes[next], params)) continue;
      stack.push_back(next);
      self(self, score + nodes[next].sim);
      stack.pop_back();
    }
  };
  for (std::size_t start = 0; start < nodes.size(); ++start) {
    stack.assign(1, start);
    visit(visit, nodes[start].sim);
  }

  std::vector<SimEntry> path;
  for (auto i : best_path) path.push_back(nodes[i]);
  return make_segment(std::move(path), best_key->score);
}

std::vector<CopySegment> extract_segments(const SparseSimMatrix& m, const PathParams& params,
                                          std::size_t max_segments) {
  std::vector<CopySegment> out;
  SparseSimMatrix remaining = m;
  while (out.size() < max_segments) {
    auto seg = temporal_network(remaining, params);
    if (!seg) break;
    std::vector<SimEntry> rest;
    for (const auto& e : remaining.entries()) {
      const bool inside = e.row >= seg->q_start && e.row <= seg->q_end && e.col >= seg->r_start &&
                          e.col <= seg->r_end;
      if (!inside) rest.push_back(e);
    }
    remaining = SparseSimMatrix(m.n_rows(), m.n_cols(), std::move(rest));
    out.push_back(std::move(*seg));
  }
  return out;
}

}  // namespace pvcd

#include "battn/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "battn/error.hpp"
#include "battn/multitest.hpp"

namespace battn {

UnionFind::UnionFind(std::size_t n) : parent_(n), rank_(n, 0), components_(n) {
  for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
}

std::size_t UnionFind::find(std::size_t v) {
  if (v >= parent_.size()) throw ValidationError("union_find: id out of range");
  std::size_t root = v;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[v] != root) {
    const std::size_t next = parent_[v];
    parent_[v] = root;
    v = next;
  }
  return root;
}

bool UnionFind::unite(std::size_t a, std::size_t b) {
  std::size_t ra = find(a);
  std::size_t rb = find(b);
  if (ra == rb) return false;
  if (rank_[ra] < rank_[rb]) std::swap(ra, rb);
  parent_[rb] = ra;
  if (rank_[ra] == rank_[rb]) ++rank_[ra];
  --components_;
  return true;
}

ClusterAssignment g_cut(const ScoredEdgeList& edges, std::size_t n, double threshold) {
  if (!std::isfinite(threshold)) throw ValidationError("g_cut: threshold must be finite");
  UnionFind uf(n);
  for (const auto& e : edges) {
    if (e.a >= n || e.b >= n) throw ValidationError("g_cut: edge endpoint out of range");
    if (e.a == e.b) throw ValidationError("g_cut: self edge");
    if (!std::isfinite(e.score)) throw ValidationError("g_cut: non-finite edge score");
    if (e.score > threshold) uf.unite(e.a, e.b);
  }
  // scanning ids in ascending order numbers each cluster by its smallest member
  ClusterAssignment assignment(n, -1);
  std::vector<std::int64_t> root_to_cluster(n, -1);
  std::int64_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = uf.find(i);
    if (root_to_cluster[root] < 0) root_to_cluster[root] = next++;
    assignment[i] = root_to_cluster[root];
  }
  return assignment;
}

SweepResult threshold_sweep(const ScoredEdgeList& edges, std::size_t n, const LabelVector& labels,
                            const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("threshold_sweep: empty grid");
  validate_labels(labels, n);
  std::vector<double> sorted_grid = grid;
  std::sort(sorted_grid.begin(), sorted_grid.end());

  SweepResult result;
  result.rows.reserve(sorted_grid.size());
  double best = -1.0;
  for (std::size_t g = 0; g < sorted_grid.size(); ++g) {
    const auto assignment = g_cut(edges, n, sorted_grid[g]);
    const auto fp = pairwise_f(assignment, labels);
    const auto fb = bcubed_f(assignment, labels);
    result.rows.push_back({sorted_grid[g], fp.f, fb.f});
    const double balance = std::min(fp.f, fb.f);
    if (balance > best) {
      best = balance;
      result.best_index = g;
    }
  }
  return result;
}

ScoredEdgeList edges_from_knn(const KnnGraph& graph, const FeatureMatrix& features,
                              EdgeScorer scorer, EdgeMode mode) {
  const std::size_t n = graph.size();
  if (features.rows() != n) throw ValidationError("edges_from_knn: graph/features size mismatch");

  // mutual-pair lookup for intersection mode
  std::vector<std::unordered_set<std::int64_t>> sets;
  if (mode == EdgeMode::intersection) {
    sets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& nb : graph.neighbors[i]) sets[i].insert(nb.id);
    }
  }

  std::unordered_set<std::uint64_t> seen;
  ScoredEdgeList edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : graph.neighbors[i]) {
      const auto j = static_cast<std::size_t>(nb.id);
      const std::size_t a = std::min(i, j);
      const std::size_t b = std::max(i, j);
      const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
      if (!seen.insert(key).second) continue;
      if (mode == EdgeMode::intersection &&
          sets[j].count(static_cast<std::int64_t>(i)) == 0) {
        continue;
      }
      double score = 0.0;
      if (scorer == EdgeScorer::cosine) {
        score = sim_s(features.row(a), features.row(b));
      } else {
        score = sim_m(graph, features, a, b, TestMode::real).value;
      }
      edges.push_back({a, b, score});
    }
  }
  return edges;
}

}  // namespace battn

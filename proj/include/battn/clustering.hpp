#pragma once

#include <cstdint>
#include <vector>

#include "battn/feature.hpp"
#include "battn/knn.hpp"
#include "battn/metrics.hpp"

namespace battn {

// Union by rank with path compression.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n);

  std::size_t find(std::size_t v);
  bool unite(std::size_t a, std::size_t b);  // true if two components merged
  std::size_t components() const { return components_; }
  std::size_t size() const { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
  std::size_t components_;
};

struct ScoredEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double score = 0.0;
};
using ScoredEdgeList = std::vector<ScoredEdge>;

// G-cut: keep edges with score strictly larger than the threshold, merge
// transitively, renumber clusters by smallest member id.
ClusterAssignment g_cut(const ScoredEdgeList& edges, std::size_t n, double threshold);

struct SweepRow {
  double threshold = 0.0;
  double fp = 0.0;
  double fb = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best_index = 0;  // argmax of min(fp, fb), ties to lower threshold
};

SweepResult threshold_sweep(const ScoredEdgeList& edges, std::size_t n, const LabelVector& labels,
                            const std::vector<double>& grid);

enum class EdgeMode { union_directed, intersection };
enum class EdgeScorer { cosine, simm };

// Undirected clustering edges from the kNN graph: either the union of directed
// edges or only mutual pairs, scored by feature cosine or by Sim-M.
ScoredEdgeList edges_from_knn(const KnnGraph& graph, const FeatureMatrix& features,
                              EdgeScorer scorer, EdgeMode mode);

}  // namespace battn

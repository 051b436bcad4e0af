#pragma once

#include <cstdint>
#include <vector>

#include "battn/feature.hpp"

namespace battn {

struct Neighbor {
  std::int64_t id = -1;
  double score = 0.0;
};

// Directed probe -> neighbor lists, descending score, ties broken toward the
// lower node id. Lists may be shorter than k when loaded from filtered files.
struct KnnGraph {
  std::size_t k = 0;
  std::vector<std::vector<Neighbor>> neighbors;

  std::size_t size() const { return neighbors.size(); }
  void validate() const;
};

// Exact brute-force kNN over cosine similarity. Requires normalized features
// and 1 <= k < N. Deterministic: equal scores resolve to the lower id.
KnnGraph build_knn_graph(const FeatureMatrix& features, std::size_t k);

// Edge noise rate of one node: fraction of its edges whose endpoint carries a
// different label. Undefined (error) for isolated nodes.
double enr(const KnnGraph& graph, const LabelVector& labels, std::size_t node);

// Mean per-node ENR over nodes with at least one neighbor.
double avg_enr(const KnnGraph& graph, const LabelVector& labels);

}  // namespace battn

#include "battn/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "battn/error.hpp"
#include "battn/parallel.hpp"

namespace battn {

void KnnGraph::validate() const {
  const auto n = static_cast<std::int64_t>(neighbors.size());
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& nb : neighbors[i]) {
      if (nb.id < 0 || nb.id >= n) throw ValidationError("knn graph: neighbor id out of range");
      if (nb.id == static_cast<std::int64_t>(i)) throw ValidationError("knn graph: self loop");
      if (nb.score > prev) throw ValidationError("knn graph: scores not non-increasing");
      prev = nb.score;
    }
  }
}

KnnGraph build_knn_graph(const FeatureMatrix& features, std::size_t k) {
  features.validate();
  if (!features.normalized) {
    throw ValidationError("build_knn_graph: features must be L2-normalized first");
  }
  const std::size_t n = features.rows();
  if (k < 1 || k >= n) {
    throw ValidationError("build_knn_graph: need 1 <= k < N, got k=" + std::to_string(k) +
                          " N=" + std::to_string(n));
  }

  KnnGraph graph;
  graph.k = k;
  graph.neighbors.assign(n, {});

  parallel_for(n, [&](std::size_t i) {
    std::vector<Neighbor> cand;
    cand.reserve(n - 1);
    const auto probe = features.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      // rows are unit length (or zero padding), so the dot product is cosine
      cand.push_back({static_cast<std::int64_t>(j), dot(probe, features.row(j))});
    }
    auto better = [](const Neighbor& a, const Neighbor& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      better);
    cand.resize(k);
    graph.neighbors[i] = std::move(cand);
  });
  return graph;
}

double enr(const KnnGraph& graph, const LabelVector& labels, std::size_t node) {
  validate_labels(labels, graph.size());
  if (node >= graph.size()) throw ValidationError("enr: node id out of range");
  const auto& nbs = graph.neighbors[node];
  if (nbs.empty()) throw ValidationError("enr: undefined for an isolated node");
  std::size_t noisy = 0;
  for (const auto& nb : nbs) {
    if (labels[static_cast<std::size_t>(nb.id)] != labels[node]) ++noisy;
  }
  return static_cast<double>(noisy) / static_cast<double>(nbs.size());
}

double avg_enr(const KnnGraph& graph, const LabelVector& labels) {
  validate_labels(labels, graph.size());
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.neighbors[i].empty()) continue;
    sum += enr(graph, labels, i);
    ++counted;
  }
  if (counted == 0) throw ValidationError("avg_enr: graph has no edges");
  return sum / static_cast<double>(counted);
}

}  // namespace battn

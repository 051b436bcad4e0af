#pragma once

#include <cstdint>
#include <vector>

#include "battn/feature.hpp"

namespace battn {

struct ScoredPair {
  double score = 0.0;
  bool positive = false;
};
using ScoredPairSet = std::vector<ScoredPair>;

// Mann-Whitney AUC with ties counting one half. Needs at least one positive
// and one negative.
double auc(const ScoredPairSet& pairs);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // classify positive iff score >= threshold
};

// Sweep over distinct scores descending, from (0,0) to (1,1). Trapezoidal area
// under these points equals auc().
std::vector<RocPoint> roc_points(const ScoredPairSet& pairs);

using ClusterAssignment = std::vector<std::int64_t>;

struct MapResult {
  double value = 0.0;
  std::size_t probes_used = 0;
  std::size_t probes_skipped = 0;  // probes with no same-label gallery node
};

// Every node probes all others ranked by cosine (ties to lower id, probe
// excluded from its own gallery).
MapResult mean_average_precision(const FeatureMatrix& features, const LabelVector& labels);

struct FScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// Over unordered node pairs: precision = same-label among same-cluster pairs,
// recall = same-cluster among same-label pairs. No same-cluster pairs gives
// precision 1; a zero-denominator F is 0.
FScore pairwise_f(const ClusterAssignment& assignment, const LabelVector& labels);

// Per-node precision/recall averaged over nodes, then the harmonic mean.
FScore bcubed_f(const ClusterAssignment& assignment, const LabelVector& labels);

}  // namespace battn

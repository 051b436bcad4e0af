#include "battn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "battn/error.hpp"

namespace battn {

namespace {

void check_two_classes(const ScoredPairSet& pairs, std::size_t& n_pos, std::size_t& n_neg) {
  if (pairs.empty()) throw ValidationError("auc: empty pair set");
  n_pos = 0;
  n_neg = 0;
  for (const auto& p : pairs) {
    if (!std::isfinite(p.score)) throw ValidationError("auc: non-finite score");
    if (p.positive) {
      ++n_pos;
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) {
    throw ValidationError("auc: needs at least one positive and one negative");
  }
}

void check_assignment(const ClusterAssignment& assignment, const LabelVector& labels) {
  if (assignment.size() != labels.size()) {
    throw ValidationError("f-score: assignment/label length mismatch");
  }
  if (assignment.empty()) throw ValidationError("f-score: empty input");
  for (auto c : assignment) {
    if (c < 0) throw ValidationError("f-score: negative cluster id");
  }
}

double harmonic_f(double precision, double recall) {
  const double d = precision + recall;
  if (d == 0.0) return 0.0;
  return 2.0 * precision * recall / d;
}

double pairs_of(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double auc(const ScoredPairSet& pairs) {
  std::size_t n_pos = 0, n_neg = 0;
  check_two_classes(pairs, n_pos, n_neg);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pairs[a].score < pairs[b].score; });

  // rank-sum of positives with average ranks on tie groups
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && pairs[order[j]].score == pairs[order[i]].score) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (pairs[order[t]].positive) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<RocPoint> roc_points(const ScoredPairSet& pairs) {
  std::size_t n_pos = 0, n_neg = 0;
  check_two_classes(pairs, n_pos, n_neg);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pairs[a].score > pairs[b].score; });

  std::vector<RocPoint> out;
  out.push_back({0.0, 0.0, pairs[order[0]].score + 1.0});
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = pairs[order[i]].score;
    while (i < order.size() && pairs[order[i]].score == s) {
      if (pairs[order[i]].positive) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    out.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                   static_cast<double>(tp) / static_cast<double>(n_pos), s});
  }
  return out;
}

MapResult mean_average_precision(const FeatureMatrix& features, const LabelVector& labels) {
  features.validate();
  validate_labels(labels, features.rows());
  const std::size_t n = features.rows();
  if (n < 2) throw ValidationError("mean_average_precision: needs at least two nodes");

  MapResult result;
  double ap_sum = 0.0;
  std::vector<std::size_t> order(n);
  std::vector<double> scores(n);
  for (std::size_t probe = 0; probe < n; ++probe) {
    std::size_t relevant = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != probe && labels[j] == labels[probe]) ++relevant;
    }
    if (relevant == 0) {
      ++result.probes_skipped;
      continue;
    }
    order.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == probe) continue;
      scores[j] = sim_s(features.row(probe), features.row(j));
      order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    double hits = 0.0;
    double ap = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (labels[order[rank]] == labels[probe]) {
        hits += 1.0;
        ap += hits / static_cast<double>(rank + 1);
      }
    }
    ap_sum += ap / static_cast<double>(relevant);
    ++result.probes_used;
  }
  if (result.probes_used == 0) {
    throw ValidationError("mean_average_precision: no probe has a same-label gallery node");
  }
  result.value = ap_sum / static_cast<double>(result.probes_used);
  return result;
}

FScore pairwise_f(const ClusterAssignment& assignment, const LabelVector& labels) {
  check_assignment(assignment, labels);
  const std::size_t n = assignment.size();

  std::map<std::int64_t, double> cluster_sizes;
  std::map<std::int64_t, double> label_sizes;
  std::map<std::pair<std::int64_t, std::int64_t>, double> cell_sizes;
  for (std::size_t i = 0; i < n; ++i) {
    cluster_sizes[assignment[i]] += 1.0;
    label_sizes[labels[i]] += 1.0;
    cell_sizes[{assignment[i], labels[i]}] += 1.0;
  }
  double same_cluster = 0.0, same_label = 0.0, both = 0.0;
  for (const auto& [id, size] : cluster_sizes) same_cluster += pairs_of(size);
  for (const auto& [id, size] : label_sizes) same_label += pairs_of(size);
  for (const auto& [cell, size] : cell_sizes) both += pairs_of(size);

  FScore s;
  s.precision = same_cluster > 0.0 ? both / same_cluster : 1.0;
  s.recall = same_label > 0.0 ? both / same_label : 1.0;
  s.f = harmonic_f(s.precision, s.recall);
  return s;
}

FScore bcubed_f(const ClusterAssignment& assignment, const LabelVector& labels) {
  check_assignment(assignment, labels);
  const std::size_t n = assignment.size();

  std::map<std::int64_t, double> cluster_sizes;
  std::map<std::int64_t, double> label_sizes;
  std::map<std::pair<std::int64_t, std::int64_t>, double> cell_sizes;
  for (std::size_t i = 0; i < n; ++i) {
    cluster_sizes[assignment[i]] += 1.0;
    label_sizes[labels[i]] += 1.0;
    cell_sizes[{assignment[i], labels[i]}] += 1.0;
  }

  double prec_sum = 0.0, rec_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double cell = cell_sizes[{assignment[i], labels[i]}];
    prec_sum += cell / cluster_sizes[assignment[i]];
    rec_sum += cell / label_sizes[labels[i]];
  }
  FScore s;
  s.precision = prec_sum / static_cast<double>(n);
  s.recall = rec_sum / static_cast<double>(n);
  s.f = harmonic_f(s.precision, s.recall);
  return s;
}

}  // namespace battn

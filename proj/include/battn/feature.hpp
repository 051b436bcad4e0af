#pragma once

#include <cstdint>
#include <vector>

#include "battn/matrix.hpp"

namespace battn {

// N x M node features. `normalized` records that every non-zero row is unit
// length; all-zero rows are legal and used as subgraph padding.
struct FeatureMatrix {
  Matrix values;
  bool normalized = false;

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }
  std::span<const double> row(std::size_t i) const { return values.row(i); }

  // rows >= 1, cols >= 1, every value finite
  void validate() const;
};

// One non-negative category id per node.
using LabelVector = std::vector<std::int64_t>;

void validate_labels(const LabelVector& labels, std::size_t n_nodes);

// Scale each non-zero row to unit Euclidean norm; zero rows stay zero.
FeatureMatrix l2_normalize(const FeatureMatrix& features);

// Cosine similarity, the single-test score. Both rows zero is an error;
// exactly one zero row scores 0.
double sim_s(std::span<const double> a, std::span<const double> b);

// Gaussian-kernel alternative: exp(-||a-b||^2 / (2 sigma^2)).
double sim_s_gaussian(std::span<const double> a, std::span<const double> b, double sigma);

}  // namespace battn

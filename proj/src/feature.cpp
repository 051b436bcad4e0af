#include "battn/feature.hpp"

#include <cmath>
#include <string>

#include "battn/error.hpp"

namespace battn {

void FeatureMatrix::validate() const {
  if (values.rows == 0 || values.cols == 0) {
    throw ValidationError("feature matrix must have at least one row and one column");
  }
  if (!values.all_finite()) {
    throw ValidationError("feature matrix contains non-finite values");
  }
}

void validate_labels(const LabelVector& labels, std::size_t n_nodes) {
  if (labels.size() != n_nodes) {
    throw ValidationError("label count " + std::to_string(labels.size()) +
                          " does not match node count " + std::to_string(n_nodes));
  }
  for (auto v : labels) {
    if (v < 0) throw ValidationError("labels must be non-negative");
  }
}

FeatureMatrix l2_normalize(const FeatureMatrix& features) {
  features.validate();
  FeatureMatrix out = features;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.values.row(i);
    const double n = norm2(r);
    if (n > 0.0) {
      for (double& v : r) v /= n;
    }
  }
  out.normalized = true;
  return out;
}

double sim_s(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("sim_s: dimension mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 && nb == 0.0) {
    throw ValidationError("sim_s: similarity undefined for two zero vectors");
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

double sim_s_gaussian(std::span<const double> a, std::span<const double> b, double sigma) {
  if (a.size() != b.size()) throw ValidationError("sim_s_gaussian: dimension mismatch");
  if (!(sigma > 0.0)) throw ValidationError("sim_s_gaussian: sigma must be positive");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

}  // namespace battn

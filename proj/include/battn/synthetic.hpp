#pragma once

#include <cstdint>

#include "battn/feature.hpp"

namespace battn {

// Class centroids drawn uniformly on the unit sphere, samples perturbed by
// isotropic Gaussian noise of the given scale and re-normalized.
struct SyntheticConfig {
  std::size_t classes = 10;
  std::size_t samples_per_class = 40;
  std::size_t dim = 16;
  double noise = 0.2;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  FeatureMatrix features;  // normalized rows
  LabelVector labels;
};

SyntheticData gen_synthetic(const SyntheticConfig& cfg);

}  // namespace battn

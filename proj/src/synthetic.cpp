#include "battn/synthetic.hpp"

#include <cmath>

#include "battn/error.hpp"
#include "battn/rng.hpp"

namespace battn {

namespace {

// Box-Muller from raw 53-bit uniforms keeps generation reproducible across
// standard libraries.
double gaussian(std::mt19937_64& rng) {
  double u1;
  do {
    u1 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  } while (u1 <= 0.0);
  const double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void unit_gaussian_vector(std::mt19937_64& rng, std::span<double> out) {
  double norm = 0.0;
  do {
    for (double& v : out) v = gaussian(rng);
    norm = norm2({out.data(), out.size()});
  } while (norm == 0.0);
  for (double& v : out) v /= norm;
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& cfg) {
  if (cfg.classes < 1 || cfg.samples_per_class < 1 || cfg.dim < 1) {
    throw ValidationError("gen_synthetic: counts must be >= 1");
  }
  if (cfg.noise < 0.0) throw ValidationError("gen_synthetic: noise must be >= 0");

  Matrix centroids(cfg.classes, cfg.dim);
  auto centroid_rng = substream(cfg.seed, 0);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    unit_gaussian_vector(centroid_rng, centroids.row(c));
  }

  const std::size_t n = cfg.classes * cfg.samples_per_class;
  SyntheticData data;
  data.features.values = Matrix(n, cfg.dim);
  data.labels.resize(n);
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    auto rng = substream(cfg.seed, 1 + c);
    for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
      const std::size_t i = c * cfg.samples_per_class + s;
      auto row = data.features.values.row(i);
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        row[d] = centroids.at(c, d) + cfg.noise * gaussian(rng);
      }
      const double norm = norm2({row.data(), row.size()});
      if (norm > 0.0) {
        for (double& v : row) v /= norm;
      }
      data.labels[i] = static_cast<std::int64_t>(c);
    }
  }
  data.features.normalized = true;
  return data;
}

}  // namespace battn

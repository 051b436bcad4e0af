#include "battn/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace battn {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x51ed2701d4bcd2f3ULL)));
}

double truncated_gaussian(std::mt19937_64& rng, double mean, double sd, double lo, double hi) {
  std::normal_distribution<double> gauss(mean, sd);
  for (;;) {
    const double v = gauss(rng);
    if (v >= lo && v <= hi) return v;
  }
}

namespace {

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

}  // namespace

double truncated_gaussian_cdf(double x, double mean, double sd, double lo, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double flo = std_normal_cdf((lo - mean) / sd);
  const double fhi = std_normal_cdf((hi - mean) / sd);
  return (std_normal_cdf((x - mean) / sd) - flo) / (fhi - flo);
}

double truncated_gaussian_mean(double location, double sd, double lo, double hi) {
  const double a = (lo - location) / sd;
  const double b = (hi - location) / sd;
  const double mass = std_normal_cdf(b) - std_normal_cdf(a);
  return location + sd * (std_normal_pdf(a) - std_normal_pdf(b)) / mass;
}

double truncated_gaussian_location(double target_mean, double sd, double lo, double hi) {
  if (!(target_mean > lo && target_mean < hi)) {
    throw std::invalid_argument("truncated_gaussian_location: target outside the interval");
  }
  // truncated mean is monotone in the location; bisect
  double left = lo - 12.0 * sd;
  double right = hi + 12.0 * sd;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (left + right);
    if (truncated_gaussian_mean(mid, sd, lo, hi) < target_mean) {
      left = mid;
    } else {
      right = mid;
    }
  }
  return 0.5 * (left + right);
}

}  // namespace battn

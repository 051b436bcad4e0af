#pragma once

#include <cstdint>
#include <random>

namespace battn {

std::uint64_t splitmix64(std::uint64_t x);

// Independent, reproducible substream for (seed, index). Worker scheduling
// cannot change what any given index draws.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index);

// Gaussian truncated to [lo, hi] via rejection. The bulk of the mass stays
// inside the interval for the parameter ranges used here, so rejection is cheap.
double truncated_gaussian(std::mt19937_64& rng, double mean, double sd, double lo, double hi);

// CDF of the truncated Gaussian at x.
double truncated_gaussian_cdf(double x, double mean, double sd, double lo, double hi);

// Mean of a Gaussian(location, sd) truncated to [lo, hi].
double truncated_gaussian_mean(double location, double sd, double lo, double hi);

// Location parameter whose truncated distribution has exactly the target
// mean; truncation pulls the realized mean toward the interval center, this
// undoes that shift. target must lie strictly inside (lo, hi).
double truncated_gaussian_location(double target_mean, double sd, double lo, double hi);

}  // namespace battn

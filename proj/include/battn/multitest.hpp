#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "battn/feature.hpp"
#include "battn/knn.hpp"

namespace battn {

enum class TestMode { binary, real };

// Parameters of the two-category statistical-test model. In binary mode a
// same-category test connects with probability p and a cross-category test
// with probability q; in real mode per-test similarities are bounded in
// [-1, 1] with means s_plus / s_minus.
struct TestModel {
  double p = 0.8;
  double q = 0.2;
  double alpha = 0.7;  // same-category fraction of the common candidate pool
  std::int64_t m = 1000;
  double gamma = 2.0;  // target error-reduction factor
  double s_plus = 0.8;
  double s_minus = 0.3;
  double noise_sd = 0.2;  // sd of the truncated-Gaussian similarity noise
  TestMode mode = TestMode::binary;

  void validate() const;

  // (1/gamma) * min((1-alpha)q, alpha(1-p)), or the s_plus/s_minus analogue.
  double delta() const;
};

struct SimMScore {
  double value = 0.0;
  std::int64_t support = 0;  // |V_i ∩ V_j|
  TestMode mode = TestMode::real;
};

// Multiple-tests similarity between nodes i and j over their common kNN
// candidates. Real mode averages sim_s(i,k) * sim_s(k,j); binary mode averages
// the product of threshold indicators. Empty intersection yields value 0 with
// support 0 so every kNN pair still gets a score.
SimMScore sim_m(const KnnGraph& graph, const FeatureMatrix& features, std::size_t i,
                std::size_t j, TestMode mode, double binary_threshold = 0.0);

// Two-sided tail bound exp(-eps^2 * mu / 3) for sums of independent Bernoulli
// variables; requires mu > 0 and 0 < eps < 1.
double chernoff_tail_bound(double mu, double epsilon);

// Expected (noisy, missing) edge counts of the single-test method:
// ((1-alpha) q m, alpha (1-p) m).
std::pair<double, double> single_test_expectations(const TestModel& model);

// Smallest m strictly satisfying the binary-mode pool-size bound at the
// model's gamma. Throws NumericError when the bound is infeasible (delta = 0).
std::int64_t min_m_binary(const TestModel& model);

// Real-valued analogue with (b-a)^2 = 4; requires s_plus > s_minus > 0.
std::int64_t min_m_real(const TestModel& model);

// Decision threshold between the inflated cross-category mean and the deflated
// same-category mean, at confidence 1 - delta; mode-dependent.
double threshold_s_t(const TestModel& model, double delta);

struct TrialRow {
  std::int64_t noisy_single = 0;
  std::int64_t miss_single = 0;
  double simm_same = 0.0;
  double simm_cross = 0.0;
};

struct SimulationReport {
  std::int64_t trials = 0;
  double noisy_mean = 0.0;
  double noisy_expected = 0.0;
  double miss_mean = 0.0;
  double miss_expected = 0.0;
  double noisy_rate_post = 0.0;  // fraction of trials where the cross pair passed S_t
  double miss_rate_post = 0.0;   // fraction of trials where the same pair fell below S_t
  double threshold_used = 0.0;
  std::vector<TrialRow> rows;
};

// Monte-Carlo check of the single-test expectations and the post-threshold
// Sim-M error rates. Deterministic given (model, trials, seed); trial t always
// uses substream(seed, t) regardless of scheduling.
SimulationReport simulate(const TestModel& model, std::int64_t trials, std::uint64_t seed);

}  // namespace battn

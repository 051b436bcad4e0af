#include "battn/multitest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "battn/error.hpp"
#include "battn/rng.hpp"

namespace battn {

namespace {

// 53-bit uniform in [0,1); keeps trial streams bit-reproducible across
// standard libraries (std::*_distribution is implementation-defined).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(std::mt19937_64& rng, double prob) { return uniform01(rng) < prob; }

}  // namespace

void TestModel::validate() const {
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("model: p must be in (0,1]");
  if (!(q >= 0.0 && q < 1.0)) throw ValidationError("model: q must be in [0,1)");
  if (!(p > q)) throw ValidationError("model: requires p > q");
  if (!(alpha > 0.5 && alpha <= 1.0)) throw ValidationError("model: alpha must be in (0.5,1]");
  if (m < 1) throw ValidationError("model: m must be >= 1");
  if (!(gamma > 1.0)) throw ValidationError("model: gamma must be > 1");
  if (mode == TestMode::real) {
    if (!(s_plus > -1.0 && s_plus < 1.0 && s_minus > -1.0 && s_minus < 1.0)) {
      throw ValidationError("model: s_plus and s_minus must lie in (-1,1)");
    }
    if (!(s_plus > s_minus)) throw ValidationError("model: requires s_plus > s_minus");
    if (!(noise_sd > 0.0)) throw ValidationError("model: noise_sd must be positive");
  }
}

double TestModel::delta() const {
  if (mode == TestMode::binary) {
    return std::min((1.0 - alpha) * q, alpha * (1.0 - p)) / gamma;
  }
  return std::min((1.0 - alpha) * s_minus, alpha * (1.0 - s_plus)) / gamma;
}

SimMScore sim_m(const KnnGraph& graph, const FeatureMatrix& features, std::size_t i,
                std::size_t j, TestMode mode, double binary_threshold) {
  const std::size_t n = graph.size();
  if (i >= n || j >= n) throw ValidationError("sim_m: node id out of range");
  if (i == j) throw ValidationError("sim_m: i and j must differ");
  if (features.rows() != n) throw ValidationError("sim_m: graph/features size mismatch");

  auto ids_of = [&](std::size_t node) {
    std::vector<std::int64_t> ids;
    ids.reserve(graph.neighbors[node].size());
    for (const auto& nb : graph.neighbors[node]) ids.push_back(nb.id);
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const auto vi = ids_of(i);
  const auto vj = ids_of(j);
  std::vector<std::int64_t> common;
  std::set_intersection(vi.begin(), vi.end(), vj.begin(), vj.end(), std::back_inserter(common));

  SimMScore score;
  score.mode = mode;
  score.support = static_cast<std::int64_t>(common.size());
  if (common.empty()) return score;

  double sum = 0.0;
  for (auto k : common) {
    const auto ks = static_cast<std::size_t>(k);
    const double s_ik = sim_s(features.row(i), features.row(ks));
    const double s_kj = sim_s(features.row(ks), features.row(j));
    if (mode == TestMode::real) {
      sum += s_ik * s_kj;
    } else {
      sum += (s_ik >= binary_threshold && s_kj >= binary_threshold) ? 1.0 : 0.0;
    }
  }
  score.value = sum / static_cast<double>(common.size());
  return score;
}

double chernoff_tail_bound(double mu, double epsilon) {
  if (!(mu > 0.0)) throw ValidationError("chernoff_tail_bound: mu must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ValidationError("chernoff_tail_bound: epsilon must lie in (0,1)");
  }
  return std::exp(-epsilon * epsilon * mu / 3.0);
}

std::pair<double, double> single_test_expectations(const TestModel& model) {
  model.validate();
  const double md = static_cast<double>(model.m);
  return {(1.0 - model.alpha) * model.q * md, model.alpha * (1.0 - model.p) * md};
}

namespace {

std::int64_t smallest_m_above(double rhs) {
  if (!std::isfinite(rhs)) throw NumericError("min_m: bound is not finite");
  if (rhs >= 4.0e15) throw NumericError("min_m: bound exceeds representable pool sizes");
  const double fl = std::floor(std::max(rhs, 0.0));
  return static_cast<std::int64_t>(fl) + 1;
}

}  // namespace

std::int64_t min_m_binary(const TestModel& model) {
  model.validate();
  const double p = model.p, q = model.q, a = model.alpha;
  const double floor_prob = std::min((1.0 - a) * q, a * (1.0 - p));
  if (!(floor_prob > 0.0)) {
    throw NumericError("min_m_binary: infeasible bound (min((1-a)q, a(1-p)) = 0)");
  }
  const double shift = (2.0 * a - 1.0) * (p * p - q * q);
  const double num = (p + q) * (p + q) + shift;
  const double den = (p - q) * (p - q) + shift;
  // log of the ratio computed as a difference so extreme gamma cannot overflow
  const double log_term = std::log(model.gamma) - std::log(floor_prob);
  const double rhs = 3.0 * num * num / (p * q * den * den) * log_term;
  return smallest_m_above(rhs);
}

std::int64_t min_m_real(const TestModel& model) {
  if (model.mode != TestMode::real) throw ValidationError("min_m_real: model must be in real mode");
  model.validate();
  const double sp = model.s_plus, sm = model.s_minus, a = model.alpha;
  if (!(sm > 0.0)) {
    throw ValidationError("min_m_real: requires s_minus > 0 (bound divides by s_plus^2 s_minus^2)");
  }
  const double floor_prob = std::min((1.0 - a) * sm, a * (1.0 - sp));
  if (!(floor_prob > 0.0)) {
    throw NumericError("min_m_real: infeasible bound (min((1-a)s-, a(1-s+)) = 0)");
  }
  const double shift = (2.0 * a - 1.0) * (sp * sp - sm * sm);
  const double num = (sp + sm) * (sp + sm) + shift;
  const double den = (sp - sm) * (sp - sm) + shift;
  const double log_term = std::log(model.gamma) - std::log(floor_prob);
  const double rhs = 4.0 * num * num / (sp * sp * sm * sm * den * den) * log_term;
  return smallest_m_above(rhs);
}

double threshold_s_t(const TestModel& model, double delta) {
  model.validate();
  if (model.m < 1) throw ValidationError("threshold_s_t: m must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("threshold_s_t: delta must lie in (0,1)");
  const double md = static_cast<double>(model.m);
  const double log_term = std::log(1.0 / delta);
  if (model.mode == TestMode::binary) {
    const double mu_cross = model.p * model.q;
    const double mu_same =
        model.alpha * model.p * model.p + (1.0 - model.alpha) * model.q * model.q;
    const double eps_cross = std::sqrt(3.0 * log_term / (mu_cross * md));
    const double eps_same = std::sqrt(3.0 * log_term / (mu_same * md));
    return (1.0 + eps_cross) * mu_cross / 2.0 + (1.0 - eps_same) * mu_same / 2.0;
  }
  if (!(model.s_minus > 0.0)) {
    throw ValidationError("threshold_s_t: real mode requires s_minus > 0");
  }
  const double mu_cross = model.s_plus * model.s_minus;
  const double mu_same = model.alpha * model.s_plus * model.s_plus +
                         (1.0 - model.alpha) * model.s_minus * model.s_minus;
  // generalized bound with (b-a)^2 = 4: eps = sqrt(4 log(1/delta) / m) / mean
  const double eps_scale = std::sqrt(4.0 * log_term / md);
  return (1.0 + eps_scale / mu_cross) * mu_cross / 2.0 +
         (1.0 - eps_scale / mu_same) * mu_same / 2.0;
}

namespace {

template <typename Fn>
void run_trials(std::int64_t trials, Fn&& fn) {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const auto n = static_cast<std::size_t>(trials);
  const std::size_t workers = std::min(hw, n);
  if (workers <= 1) {
    for (std::size_t t = 0; t < n; ++t) fn(t);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t t = lo; t < hi; ++t) fn(t);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

SimulationReport simulate(const TestModel& model, std::int64_t trials, std::uint64_t seed) {
  model.validate();
  if (trials < 1) throw ValidationError("simulate: trials must be >= 1");
  const double delta = model.delta();
  if (!(delta > 0.0 && delta < 1.0)) {
    throw NumericError("simulate: delta outside (0,1); threshold undefined");
  }
  const double s_t = threshold_s_t(model, delta);

  const std::int64_t n_same = std::clamp<std::int64_t>(
      std::llround(model.alpha * static_cast<double>(model.m)), 0, model.m);
  const std::int64_t n_cross = model.m - n_same;
  const double md = static_cast<double>(model.m);

  SimulationReport report;
  report.trials = trials;
  report.threshold_used = s_t;
  report.rows.resize(static_cast<std::size_t>(trials));

  const bool binary = model.mode == TestMode::binary;
  // locations adjusted so the truncated draws hit the model means exactly
  double loc_plus = 0.0, loc_minus = 0.0;
  if (!binary) {
    loc_plus = truncated_gaussian_location(model.s_plus, model.noise_sd, -1.0, 1.0);
    loc_minus = truncated_gaussian_location(model.s_minus, model.noise_sd, -1.0, 1.0);
  }
  run_trials(trials, [&](std::size_t t) {
    auto rng = substream(seed, t);
    TrialRow row;
    double sum_same = 0.0;
    double sum_cross = 0.0;
    if (binary) {
      // single-test pool: one connection test per candidate
      for (std::int64_t c = 0; c < n_cross; ++c) row.noisy_single += bernoulli(rng, model.q);
      for (std::int64_t c = 0; c < n_same; ++c) row.miss_single += !bernoulli(rng, model.p);
      // Sim-M for a same-category pair: candidate tests against both endpoints
      for (std::int64_t c = 0; c < n_same; ++c) {
        sum_same += (bernoulli(rng, model.p) && bernoulli(rng, model.p)) ? 1.0 : 0.0;
      }
      for (std::int64_t c = 0; c < n_cross; ++c) {
        sum_same += (bernoulli(rng, model.q) && bernoulli(rng, model.q)) ? 1.0 : 0.0;
      }
      // Sim-M for a cross-category pair
      for (std::int64_t c = 0; c < n_same; ++c) {
        sum_cross += (bernoulli(rng, model.p) && bernoulli(rng, model.q)) ? 1.0 : 0.0;
      }
      for (std::int64_t c = 0; c < n_cross; ++c) {
        sum_cross += (bernoulli(rng, model.q) && bernoulli(rng, model.p)) ? 1.0 : 0.0;
      }
    } else {
      const double mid = (model.s_plus + model.s_minus) / 2.0;
      auto draw = [&](double location) {
        return truncated_gaussian(rng, location, model.noise_sd, -1.0, 1.0);
      };
      for (std::int64_t c = 0; c < n_cross; ++c) row.noisy_single += draw(loc_minus) >= mid;
      for (std::int64_t c = 0; c < n_same; ++c) row.miss_single += draw(loc_plus) < mid;
      for (std::int64_t c = 0; c < n_same; ++c) sum_same += draw(loc_plus) * draw(loc_plus);
      for (std::int64_t c = 0; c < n_cross; ++c) sum_same += draw(loc_minus) * draw(loc_minus);
      for (std::int64_t c = 0; c < n_same; ++c) sum_cross += draw(loc_plus) * draw(loc_minus);
      for (std::int64_t c = 0; c < n_cross; ++c) sum_cross += draw(loc_minus) * draw(loc_plus);
    }
    row.simm_same = sum_same / md;
    row.simm_cross = sum_cross / md;
    report.rows[t] = row;
  });

  double noisy_sum = 0.0, miss_sum = 0.0;
  std::int64_t noisy_post = 0, miss_post = 0;
  for (const auto& row : report.rows) {
    noisy_sum += static_cast<double>(row.noisy_single);
    miss_sum += static_cast<double>(row.miss_single);
    noisy_post += row.simm_cross >= s_t;  // a cross pair kept above threshold is a noisy edge
    miss_post += row.simm_same < s_t;     // a same pair dropped below threshold is a missed edge
  }
  const auto td = static_cast<double>(trials);
  report.noisy_mean = noisy_sum / td;
  report.miss_mean = miss_sum / td;
  if (binary) {
    // expectations use the realized pool split so they stay exact when
    // alpha * m is not integral
    report.noisy_expected = static_cast<double>(n_cross) * model.q;
    report.miss_expected = static_cast<double>(n_same) * (1.0 - model.p);
  } else {
    const double mid = (model.s_plus + model.s_minus) / 2.0;
    const double p_noisy = 1.0 - truncated_gaussian_cdf(mid, loc_minus, model.noise_sd, -1.0, 1.0);
    const double p_miss = truncated_gaussian_cdf(mid, loc_plus, model.noise_sd, -1.0, 1.0);
    report.noisy_expected = static_cast<double>(n_cross) * p_noisy;
    report.miss_expected = static_cast<double>(n_same) * p_miss;
  }
  report.noisy_rate_post = static_cast<double>(noisy_post) / td;
  report.miss_rate_post = static_cast<double>(miss_post) / td;
  return report;
}

}  // namespace battn

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <random>

#include "battn/error.hpp"
#include "battn/feature.hpp"
#include "battn/knn.hpp"
#include "doctest.h"

using namespace battn;

namespace {

FeatureMatrix make_features(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix f;
  f.values = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), f.values.row(i).begin());
  }
  return f;
}

FeatureMatrix random_features(std::size_t n, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureMatrix f;
  f.values = Matrix(n, m);
  for (double& v : f.values.data) v = u(rng);
  return l2_normalize(f);
}

// Independent reference: full O(N^2) scan with a complete sort per probe.
std::vector<std::vector<Neighbor>> knn_oracle(const FeatureMatrix& f, std::size_t k) {
  const std::size_t n = f.rows();
  std::vector<std::vector<Neighbor>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Neighbor> cand;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0.0;
      for (std::size_t d = 0; d < f.cols(); ++d) s += f.row(i)[d] * f.row(j)[d];
      cand.push_back({static_cast<std::int64_t>(j), s});
    }
    std::sort(cand.begin(), cand.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    });
    cand.resize(k);
    out[i] = std::move(cand);
  }
  return out;
}

}  // namespace

TEST_CASE("l2_normalize scales rows to unit norm") {
  auto f = make_features({{3.0, 4.0}});
  auto out = l2_normalize(f);
  CHECK(out.values.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(out.values.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(out.normalized);
}

TEST_CASE("l2_normalize leaves zero rows untouched") {
  auto out = l2_normalize(make_features({{0.0, 0.0}, {1.0, 1.0}}));
  CHECK(out.values.at(0, 0) == 0.0);
  CHECK(out.values.at(0, 1) == 0.0);
}

TEST_CASE("l2_normalize random matrix has unit rows") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  FeatureMatrix f;
  f.values = Matrix(5, 3);
  for (double& v : f.values.data) v = u(rng);
  auto out = l2_normalize(f);
  for (std::size_t i = 0; i < 5; ++i) {
    // independent norm recomputation
    double s = 0.0;
    for (double v : out.row(i)) s += v * v;
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-6);
  }
}

TEST_CASE("l2_normalize rejects non-finite input") {
  auto f = make_features({{1.0, std::numeric_limits<double>::infinity()}});
  CHECK_THROWS_AS(l2_normalize(f), ValidationError);
}

TEST_CASE("sim_s basics") {
  std::vector<double> e1{1.0, 0.0};
  std::vector<double> e2{0.0, 1.0};
  CHECK(sim_s(e1, e1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sim_s(e1, e2) == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<double> diag{1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
  CHECK(std::abs(sim_s(e1, diag) - 0.7071067811865475) < 1e-6);
}

TEST_CASE("sim_s rejects two zero rows, tolerates one") {
  std::vector<double> zero{0.0, 0.0};
  std::vector<double> one{1.0, 0.0};
  CHECK_THROWS_AS(sim_s(zero, zero), ValidationError);
  CHECK(sim_s(zero, one) == 0.0);
}

TEST_CASE("sim_s is exactly symmetric") {
  auto f = random_features(20, 6, 11);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = i + 1; j < f.rows(); ++j) {
      CHECK(sim_s(f.row(i), f.row(j)) == sim_s(f.row(j), f.row(i)));
    }
  }
}

TEST_CASE("sim_s_gaussian equals 1 at zero distance and decays") {
  std::vector<double> a{0.5, 0.5};
  std::vector<double> b{0.5, 0.7};
  CHECK(sim_s_gaussian(a, a, 0.3) == doctest::Approx(1.0));
  CHECK(sim_s_gaussian(a, b, 0.3) == doctest::Approx(std::exp(-0.04 / (2.0 * 0.09))));
  CHECK_THROWS_AS(sim_s_gaussian(a, b, 0.0), ValidationError);
}

TEST_CASE("knn tie-break goes to the lower id") {
  auto f = l2_normalize(make_features({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  auto g = build_knn_graph(f, 1);
  CHECK(g.neighbors[0][0].id == 1);
  CHECK(g.neighbors[1][0].id == 0);
  CHECK(g.neighbors[2][0].id == 0);
}

TEST_CASE("knn picks cluster mates in two tight clusters") {
  auto f = l2_normalize(make_features({
      {1.0, 0.01},
      {1.0, -0.01},
      {0.01, 1.0},
      {-0.01, 1.0},
  }));
  auto g = build_knn_graph(f, 1);
  CHECK(g.neighbors[0][0].id == 1);
  CHECK(g.neighbors[1][0].id == 0);
  CHECK(g.neighbors[2][0].id == 3);
  CHECK(g.neighbors[3][0].id == 2);
}

TEST_CASE("knn matches the full-scan oracle on random data") {
  auto f = random_features(100, 8, 23);
  auto g = build_knn_graph(f, 10);
  auto oracle = knn_oracle(f, 10);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    REQUIRE(g.neighbors[i].size() == oracle[i].size());
    for (std::size_t t = 0; t < oracle[i].size(); ++t) {
      CHECK(g.neighbors[i][t].id == oracle[i][t].id);
      CHECK(g.neighbors[i][t].score == oracle[i][t].score);
    }
  }
}

TEST_CASE("knn is deterministic across runs") {
  auto f = random_features(60, 5, 31);
  auto g1 = build_knn_graph(f, 7);
  auto g2 = build_knn_graph(f, 7);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t t = 0; t < 7; ++t) {
      CHECK(g1.neighbors[i][t].id == g2.neighbors[i][t].id);
      CHECK(g1.neighbors[i][t].score == g2.neighbors[i][t].score);
    }
  }
}

TEST_CASE("knn rejects k >= N and unnormalized input") {
  auto f = random_features(5, 3, 41);
  CHECK_THROWS_AS(build_knn_graph(f, 5), ValidationError);
  FeatureMatrix raw = f;
  raw.normalized = false;
  CHECK_THROWS_AS(build_knn_graph(raw, 2), ValidationError);
}

TEST_CASE("enr counts cross-label edges") {
  KnnGraph g;
  g.k = 4;
  g.neighbors = {{{1, .9}, {2, .8}, {3, .7}, {4, .6}}, {}, {}, {}, {}};
  LabelVector labels{0, 0, 0, 0, 1};
  CHECK(enr(g, labels, 0) == doctest::Approx(0.25));
  LabelVector clean{0, 0, 0, 0, 0};
  CHECK(enr(g, clean, 0) == 0.0);
  CHECK_THROWS_AS(enr(g, labels, 1), ValidationError);  // isolated
}

TEST_CASE("enr matches per-edge recount on a random graph") {
  auto f = random_features(50, 6, 77);
  auto g = build_knn_graph(f, 5);
  std::mt19937_64 rng(99);
  LabelVector labels(50);
  for (auto& v : labels) v = static_cast<std::int64_t>(rng() % 4);
  for (std::size_t i = 0; i < 50; ++i) {
    std::size_t noisy = 0;
    for (const auto& nb : g.neighbors[i]) {
      if (labels[static_cast<std::size_t>(nb.id)] != labels[i]) ++noisy;
    }
    CHECK(enr(g, labels, i) ==
          doctest::Approx(static_cast<double>(noisy) / 5.0).epsilon(1e-15));
  }
}

TEST_CASE("avg_enr is the mean over non-isolated nodes") {
  KnnGraph g;
  g.k = 2;
  g.neighbors = {{{1, .9}, {2, .8}}, {{0, .9}, {2, .5}}, {}};
  LabelVector labels{0, 0, 1};
  // node0: 1 of 2 cross; node1: 1 of 2 cross; node2 isolated
  CHECK(avg_enr(g, labels) == doctest::Approx(0.5));
  LabelVector clean{0, 0, 0};
  CHECK(avg_enr(g, clean) == 0.0);
  KnnGraph empty;
  empty.neighbors = {{}, {}};
  CHECK_THROWS_AS(avg_enr(empty, LabelVector{0, 1}), ValidationError);
}

TEST_CASE("avg_enr recovers injected per-node rates") {
  // node i gets 4 neighbors with a known number of cross-label endpoints
  KnnGraph g;
  g.k = 4;
  const std::size_t n = 8;
  LabelVector labels(n, 0);
  for (std::size_t i = 4; i < n; ++i) labels[i] = 1;
  g.neighbors.resize(n);
  std::vector<double> want;
  for (std::size_t i = 0; i < 4; ++i) {
    // i cross edges out of 4 for node i
    std::vector<Neighbor> nbs;
    for (std::size_t t = 0; t < 4 - i; ++t) {
      nbs.push_back({static_cast<std::int64_t>((i + 1 + t) % 4), 0.5});
    }
    for (std::size_t t = 0; t < i; ++t) nbs.push_back({static_cast<std::int64_t>(4 + t), 0.4});
    g.neighbors[i] = nbs;
    want.push_back(static_cast<double>(i) / 4.0);
  }
  double expected = 0.0;
  for (double w : want) expected += w;
  expected /= 4.0;
  CHECK(avg_enr(g, labels) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("graph validation rejects malformed neighbor lists") {
  KnnGraph self_loop;
  self_loop.k = 1;
  self_loop.neighbors = {{{0, 0.5}}};
  CHECK_THROWS_AS(self_loop.validate(), ValidationError);

  KnnGraph out_of_range;
  out_of_range.k = 1;
  out_of_range.neighbors = {{{5, 0.5}}};
  CHECK_THROWS_AS(out_of_range.validate(), ValidationError);

  KnnGraph unsorted;
  unsorted.k = 2;
  unsorted.neighbors = {{{1, 0.2}, {2, 0.9}}, {}, {}};
  CHECK_THROWS_AS(unsorted.validate(), ValidationError);

  KnnGraph fine;
  fine.k = 2;
  fine.neighbors = {{{1, 0.9}, {2, 0.2}}, {{0, 0.9}}, {}};
  CHECK_NOTHROW(fine.validate());
}

TEST_CASE("merging two label ids never raises any node ENR") {
  auto f = random_features(40, 4, 123);
  auto g = build_knn_graph(f, 6);
  std::mt19937_64 rng(5);
  LabelVector labels(40);
  for (auto& v : labels) v = static_cast<std::int64_t>(rng() % 5);
  LabelVector merged = labels;
  for (auto& v : merged) {
    if (v == 3) v = 1;
  }
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(enr(g, merged, i) <= enr(g, labels, i) + 1e-15);
  }
}

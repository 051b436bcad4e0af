#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <queue>
#include <random>
#include <set>

#include "battn/clustering.hpp"
#include "battn/error.hpp"
#include "doctest.h"

using namespace battn;

namespace {

// BFS connected components over kept edges, the independent oracle.
ClusterAssignment bfs_components(const ScoredEdgeList& edges, std::size_t n, double threshold) {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : edges) {
    if (e.score > threshold) {
      adj[e.a].push_back(e.b);
      adj[e.b].push_back(e.a);
    }
  }
  ClusterAssignment out(n, -1);
  std::int64_t next = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (out[start] >= 0) continue;
    const std::int64_t id = next++;
    std::queue<std::size_t> frontier;
    frontier.push(start);
    out[start] = id;
    while (!frontier.empty()) {
      const std::size_t v = frontier.front();
      frontier.pop();
      for (std::size_t w : adj[v]) {
        if (out[w] < 0) {
          out[w] = id;
          frontier.push(w);
        }
      }
    }
  }
  return out;
}

ScoredEdgeList random_edges(std::size_t n, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScoredEdgeList edges;
  std::set<std::pair<std::size_t, std::size_t>> used;
  while (edges.size() < count) {
    const std::size_t a = rng() % n;
    const std::size_t b = rng() % n;
    if (a == b) continue;
    const auto key = std::minmax(a, b);
    if (!used.insert(key).second) continue;
    edges.push_back({key.first, key.second, static_cast<double>(rng() % 1000) / 1000.0});
  }
  return edges;
}

std::size_t component_count(const ClusterAssignment& a) {
  return static_cast<std::size_t>(*std::max_element(a.begin(), a.end())) + 1;
}

}  // namespace

TEST_CASE("fresh union-find has one component per element") {
  UnionFind uf(5);
  CHECK(uf.components() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(uf.find(i) == i);
}

TEST_CASE("union is transitive") {
  UnionFind uf(4);
  uf.unite(0, 1);
  uf.unite(1, 2);
  CHECK(uf.find(0) == uf.find(2));
  CHECK(uf.components() == 2);
  CHECK(!uf.unite(0, 2));  // already merged
}

TEST_CASE("union-find agrees with BFS components on random graphs") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const std::size_t n = 200;
    const auto edges = random_edges(n, 300, seed);
    UnionFind uf(n);
    for (const auto& e : edges) uf.unite(e.a, e.b);
    const auto oracle = bfs_components(edges, n, -1.0);  // keep everything
    // same partition: roots agree exactly when oracle ids agree
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < i + 5 && j < n; ++j) {
        CHECK((uf.find(i) == uf.find(j)) == (oracle[i] == oracle[j]));
      }
    }
    CHECK(uf.components() == component_count(oracle));
  }
}

TEST_CASE("g_cut keeps edges strictly above the threshold") {
  ScoredEdgeList edges{{0, 1, 0.9}, {1, 2, 0.3}};
  const auto a = g_cut(edges, 3, 0.5);
  CHECK(a == ClusterAssignment{0, 0, 1});
  // strict inequality: an edge exactly at the threshold is dropped
  const auto b = g_cut(edges, 3, 0.9);
  CHECK(b == ClusterAssignment{0, 1, 2});
}

TEST_CASE("g_cut with a threshold above every score yields singletons") {
  const auto edges = random_edges(12, 20, 9);
  const auto a = g_cut(edges, 12, 2.0);
  for (std::size_t i = 0; i < 12; ++i) CHECK(a[i] == static_cast<std::int64_t>(i));
}

TEST_CASE("g_cut matches BFS over kept edges across thresholds") {
  const std::size_t n = 80;
  const auto edges = random_edges(n, 150, 31);
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    CHECK(g_cut(edges, n, t) == bfs_components(edges, n, t));
  }
}

TEST_CASE("g_cut output does not depend on edge order") {
  const std::size_t n = 40;
  auto edges = random_edges(n, 80, 17);
  const auto a = g_cut(edges, n, 0.4);
  std::mt19937_64 rng(1);
  for (int round = 0; round < 3; ++round) {
    for (std::size_t i = edges.size(); i > 1; --i) std::swap(edges[i - 1], edges[rng() % i]);
    CHECK(g_cut(edges, n, 0.4) == a);
  }
}

TEST_CASE("raising the threshold never decreases the component count") {
  const std::size_t n = 60;
  const auto edges = random_edges(n, 120, 23);
  std::size_t prev = 0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const std::size_t count = component_count(g_cut(edges, n, t));
    CHECK(count >= prev);
    prev = count;
  }
}

TEST_CASE("threshold_sweep finds the separating threshold") {
  // two clean clusters: in-cluster scores 0.9, cross scores 0.1
  ScoredEdgeList edges{{0, 1, 0.9}, {2, 3, 0.9}, {1, 2, 0.1}};
  LabelVector labels{0, 0, 1, 1};
  const auto sweep = threshold_sweep(edges, 4, labels, {0.05, 0.5, 0.95});
  CHECK(sweep.rows[sweep.best_index].threshold == doctest::Approx(0.5));
  CHECK(sweep.rows[sweep.best_index].fp == doctest::Approx(1.0));
  CHECK(sweep.rows[sweep.best_index].fb == doctest::Approx(1.0));
}

TEST_CASE("threshold_sweep with a single grid point returns it") {
  ScoredEdgeList edges{{0, 1, 0.9}};
  LabelVector labels{0, 0};
  const auto sweep = threshold_sweep(edges, 2, labels, {0.5});
  REQUIRE(sweep.rows.size() == 1);
  CHECK(sweep.best_index == 0);
}

TEST_CASE("threshold_sweep agrees with an exhaustive recompute") {
  const std::size_t n = 50;
  std::mt19937_64 rng(77);
  LabelVector labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::int64_t>(i % 3);
  ScoredEdgeList edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double base = labels[i] == labels[j] ? 0.7 : 0.3;
      edges.push_back({i, j, base + static_cast<double>(rng() % 200) / 1000.0});
    }
  }
  std::vector<double> grid{0.2, 0.35, 0.5, 0.65, 0.8, 0.95};
  const auto sweep = threshold_sweep(edges, n, labels, grid);

  double best = -1.0;
  std::size_t best_idx = 0;
  std::sort(grid.begin(), grid.end());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto a = g_cut(edges, n, grid[g]);
    const double fp = pairwise_f(a, labels).f;
    const double fb = bcubed_f(a, labels).f;
    CHECK(sweep.rows[g].fp == doctest::Approx(fp).epsilon(1e-15));
    CHECK(sweep.rows[g].fb == doctest::Approx(fb).epsilon(1e-15));
    if (std::min(fp, fb) > best) {
      best = std::min(fp, fb);
      best_idx = g;
    }
  }
  CHECK(sweep.best_index == best_idx);
}

TEST_CASE("union-find matches BFS at scale") {
  const std::size_t n = 1000;
  const auto edges = random_edges(n, 1500, 101);
  const auto a = g_cut(edges, n, 0.5);
  const auto oracle = bfs_components(edges, n, 0.5);
  CHECK(a == oracle);
}

TEST_CASE("edges_from_knn respects union vs intersection semantics") {
  FeatureMatrix f;
  f.values = Matrix(3, 2);
  f.values.at(0, 0) = 1.0;
  f.values.at(1, 0) = 1.0;
  f.values.at(2, 1) = 1.0;
  f.normalized = true;
  KnnGraph g;
  g.k = 1;
  // 0 -> 1 and 1 -> 0 are mutual; 2 -> 0 is one-directional
  g.neighbors = {{{1, 1.0}}, {{0, 1.0}}, {{0, 0.0}}};
  const auto u = edges_from_knn(g, f, EdgeScorer::cosine, EdgeMode::union_directed);
  CHECK(u.size() == 2);
  const auto m = edges_from_knn(g, f, EdgeScorer::cosine, EdgeMode::intersection);
  REQUIRE(m.size() == 1);
  CHECK(m[0].a == 0);
  CHECK(m[0].b == 1);
  CHECK(m[0].score == doctest::Approx(1.0));
}

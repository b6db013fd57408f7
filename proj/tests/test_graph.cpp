#include <catch_amalgamated.hpp>

#include <cmath>

#include <knnformer/graph.hpp>
#include <knnformer/geometry.hpp>

#include "oracles.hpp"

using namespace knnf;

namespace {

Grid<double> distances_from_points(const std::vector<std::pair<double, double>>& pts) {
  const int n = static_cast<int>(pts.size());
  Grid<double> d(n, n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      d(i, j) = std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second);
  return d;
}

}  // namespace

TEST_CASE("knn graph on a line: nearest-neighbor edges, self loops, symmetry") {
  // Points at x = 0, 1, 2, 3. With k = 1, node 1's tie between 0 and 2
  // resolves to the lower index.
  const Grid<double> d = distances_from_points({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  const KnnGraph g = build_knn_graph(d, 1);
  REQUIRE(g.n == 4);
  CHECK(g.k == 1);
  CHECK_FALSE(g.k_clipped);
  for (int i = 0; i < 4; ++i) CHECK(g.adj(i, i) == 1);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(g.adj(i, j) == g.adj(j, i));
  CHECK(g.adj(0, 1) == 1);  // 0 -> 1 and 1 -> 0 (tie with 2 broken low)
  CHECK(g.adj(1, 2) == 1);  // 2 -> 1
  CHECK(g.adj(2, 3) == 1);  // 3 -> 2
  CHECK(g.adj(0, 2) == 0);
  CHECK(g.adj(0, 3) == 0);
  CHECK(g.adj(1, 3) == 0);
}

TEST_CASE("hop distances on the line graph") {
  const Grid<double> d = distances_from_points({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  const Grid<int> hops = hop_distances(build_knn_graph(d, 1));
  CHECK(hops(0, 0) == 0);
  CHECK(hops(0, 1) == 1);
  CHECK(hops(0, 2) == 2);
  CHECK(hops(0, 3) == 3);
  CHECK(hops(3, 0) == 3);
}

TEST_CASE("equidistant neighbors resolve to the lower index") {
  // Node 0 is equidistant from 1 and 2; with k = 1 it must pick 1. Nodes 1
  // and 2 each have a closer private partner so they never pick 0.
  const Grid<double> d =
      distances_from_points({{0, 0}, {1, 0}, {-1, 0}, {1.1, 0}, {-1.1, 0}});
  const KnnGraph g = build_knn_graph(d, 1);
  CHECK(g.adj(0, 1) == 1);
  CHECK(g.adj(0, 2) == 0);
  CHECK(g.adj(1, 3) == 1);
  CHECK(g.adj(2, 4) == 1);
  const Grid<int> hops = hop_distances(g);
  CHECK(hops(0, 2) == kUnreachable);  // the {2,4} cluster is cut off
  CHECK(hops(0, 4) == kUnreachable);
  CHECK(hops(0, 3) == 2);
}

TEST_CASE("attention_mask allows pairs within the hop threshold") {
  const Grid<double> d = distances_from_points({{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  const Grid<int> hops = hop_distances(build_knn_graph(d, 1));
  const Grid<uint8_t> mask = attention_mask(hops, 2);
  CHECK(mask(0, 0) == 1);
  CHECK(mask(0, 1) == 1);
  CHECK(mask(0, 2) == 1);
  CHECK(mask(0, 3) == 0);
  CHECK(mask(3, 0) == 0);
  CHECK_THROWS_AS(attention_mask(hops, 0), InvalidInputError);
}

TEST_CASE("attention_mask blocks unreachable pairs") {
  const Grid<double> d =
      distances_from_points({{0, 0}, {0.1, 0}, {5, 0}, {5.1, 0}});
  const Grid<int> hops = hop_distances(build_knn_graph(d, 1));
  REQUIRE(hops(0, 2) == kUnreachable);
  const Grid<uint8_t> mask = attention_mask(hops, 100);
  CHECK(mask(0, 2) == 0);
  CHECK(mask(0, 1) == 1);
}

TEST_CASE("bucket_hops clamps and reserves a slot for unreachable") {
  const Grid<double> d =
      distances_from_points({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {9, 0}, {9.1, 0}});
  const Grid<int> hops = hop_distances(build_knn_graph(d, 1));
  const Grid<int> buckets = bucket_hops(hops, 2);
  CHECK(buckets(0, 0) == 0);
  CHECK(buckets(0, 1) == 1);
  CHECK(buckets(0, 2) == 2);
  CHECK(buckets(0, 3) == 2);          // clamped at max_bucket
  CHECK(buckets(0, 4) == 3);          // unreachable -> max_bucket + 1
  CHECK_THROWS_AS(bucket_hops(hops, 0), InvalidInputError);
}

TEST_CASE("build_knn_graph validates its input") {
  CHECK_THROWS_AS(build_knn_graph(Grid<double>(0, 0, 0.0), 1), InvalidInputError);
  CHECK_THROWS_AS(build_knn_graph(Grid<double>(2, 3, 0.0), 1), InvalidInputError);
  const Grid<double> ok = distances_from_points({{0, 0}, {1, 0}});
  CHECK_THROWS_AS(build_knn_graph(ok, 0), InvalidInputError);
  Grid<double> diag = ok;
  diag(0, 0) = 0.5;
  CHECK_THROWS_AS(build_knn_graph(diag, 1), InvalidInputError);
  Grid<double> asym = ok;
  asym(0, 1) += 1.0;
  CHECK_THROWS_AS(build_knn_graph(asym, 1), InvalidInputError);
  Grid<double> nan = ok;
  nan(0, 1) = nan(1, 0) = std::nan("");
  CHECK_THROWS_AS(build_knn_graph(nan, 1), InvalidInputError);
}

TEST_CASE("k at least n-1 yields the complete graph and sets k_clipped") {
  const Grid<double> d = distances_from_points({{0, 0}, {1, 0}, {2, 0}});
  const KnnGraph g = build_knn_graph(d, 10);
  CHECK(g.k_clipped);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(g.adj(i, j) == 1);
  CHECK_FALSE(build_knn_graph(d, 2).k_clipped);
}

TEST_CASE("single-node graph") {
  const KnnGraph g = build_knn_graph(Grid<double>(1, 1, 0.0), 3);
  CHECK(g.n == 1);
  CHECK(g.adj(0, 0) == 1);
  const Grid<int> hops = hop_distances(g);
  CHECK(hops(0, 0) == 0);
}

TEST_CASE("breadth-first hops agree with Floyd-Warshall on random graphs") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = rng.uniform_int(2, 40);
    const int k = rng.uniform_int(1, 5);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < n; ++i) pts.emplace_back(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
    const KnnGraph g = build_knn_graph(distances_from_points(pts), k);
    const Grid<int> bfs = hop_distances(g);
    const Grid<int> fw = knnft::floyd_warshall_hops(g);
    REQUIRE(bfs == fw);
  }
}

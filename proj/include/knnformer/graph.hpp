#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "core.hpp"

namespace knnf {

inline constexpr int kUnreachable = -1;

// Symmetrized k-nearest-neighbor graph with self-loops.
struct KnnGraph {
  int n = 0;
  int k = 0;
  bool k_clipped = false;  // set when k >= n forced an all-pairs graph
  Grid<uint8_t> adj;       // symmetric, adj(i,i) == 1
};

// dist must be square, symmetric, zero-diagonal. Each node links to its k
// nearest others (ties broken toward the lower index); edges are then
// symmetrized and self-loops added. k >= n degrades to the complete graph
// with a warning flag rather than an error.
inline KnnGraph build_knn_graph(const Grid<double>& dist, int k) {
  const int n = dist.rows();
  if (n < 1 || dist.cols() != n) throw InvalidInputError("build_knn_graph: distance matrix must be square and nonempty");
  if (k < 1) throw InvalidInputError("build_knn_graph: k must be >= 1");
  for (int i = 0; i < n; ++i) {
    if (dist(i, i) != 0.0) throw InvalidInputError("build_knn_graph: nonzero diagonal");
    for (int j = i + 1; j < n; ++j) {
      if (!std::isfinite(dist(i, j)) || std::fabs(dist(i, j) - dist(j, i)) > 1e-12)
        throw InvalidInputError("build_knn_graph: distance matrix must be finite and symmetric");
    }
  }

  KnnGraph g;
  g.n = n;
  g.k = k;
  g.k_clipped = k >= n;
  g.adj = Grid<uint8_t>(n, n, 0);

  const int k_eff = std::min(k, n - 1);
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    order.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
      return a < b;  // deterministic tie-break
    });
    for (int t = 0; t < k_eff; ++t) {
      g.adj(i, order[t]) = 1;
      g.adj(order[t], i) = 1;  // symmetrize
    }
  }
  for (int i = 0; i < n; ++i) g.adj(i, i) = 1;
  return g;
}

// All-pairs hop counts by BFS from every node. Disconnected pairs get
// kUnreachable. hops(i,i) == 0.
inline Grid<int> hop_distances(const KnnGraph& g) {
  const int n = g.n;
  Grid<int> hops(n, n, kUnreachable);
  std::vector<int> queue;
  queue.reserve(static_cast<size_t>(n));
  for (int s = 0; s < n; ++s) {
    queue.clear();
    queue.push_back(s);
    hops(s, s) = 0;
    for (size_t head = 0; head < queue.size(); ++head) {
      const int u = queue[head];
      const int du = hops(s, u);
      for (int v = 0; v < n; ++v) {
        if (g.adj(u, v) && hops(s, v) == kUnreachable) {
          hops(s, v) = du + 1;
          queue.push_back(v);
        }
      }
    }
  }
  return hops;
}

// Allowed attention pairs: finite hop distance within the threshold.
// Every diagonal entry stays allowed because hops(i,i) == 0.
inline Grid<uint8_t> attention_mask(const Grid<int>& hops, int threshold) {
  if (threshold < 1) throw InvalidInputError("attention_mask: threshold must be >= 1");
  const int n = hops.rows();
  if (n < 1 || hops.cols() != n) throw InvalidInputError("attention_mask: hop matrix must be square");
  Grid<uint8_t> mask(n, n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      mask(i, j) = (hops(i, j) != kUnreachable && hops(i, j) <= threshold) ? 1 : 0;
  return mask;
}

// Clamp hop counts into embedding-table range: min(hop, max_bucket), with a
// dedicated overflow bucket max_bucket+1 for unreachable pairs (those only
// feed attention when the local mask is ablated).
inline Grid<int> bucket_hops(const Grid<int>& hops, int max_bucket) {
  if (max_bucket < 1) throw InvalidInputError("bucket_hops: max_bucket must be >= 1");
  const int n = hops.rows();
  Grid<int> buckets(n, hops.cols(), 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < hops.cols(); ++j)
      buckets(i, j) = (hops(i, j) == kUnreachable) ? max_bucket + 1 : std::min(hops(i, j), max_bucket);
  return buckets;
}

}  // namespace knnf

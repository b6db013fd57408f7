// Independent reference implementations the tests compare against. Everything
// here favors the most literal possible formulation over speed: per-pair
// loops, textbook algorithms, central finite differences.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <knnformer/knnformer.hpp>

namespace knnft {

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.
// ---------------------------------------------------------------------------

struct FdFailure {
  std::string param;
  int row = 0, col = 0;
  double analytic = 0.0, numeric = 0.0;
};

struct FdResult {
  long checked = 0;
  std::vector<FdFailure> failures;
  bool ok() const { return failures.empty(); }
};

// Central differences over every coordinate of every listed parameter.
// make_loss() must rebuild the forward graph from the parameters' current
// values and return a 1x1 tensor.
template <typename MakeLoss>
FdResult fd_check(const std::vector<std::pair<std::string, knnf::Tensor>>& params,
                  MakeLoss&& make_loss, double step = 1e-5) {
  using knnf::Grid;
  for (const auto& [name, p] : params) p->zero_grad();
  knnf::Tensor loss = make_loss();
  knnf::backward(loss);

  std::vector<Grid<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, p] : params)
    analytic.push_back(p->grad.empty() ? Grid<double>(p->value.rows(), p->value.cols(), 0.0)
                                       : p->grad);

  FdResult res;
  knnf::NoGradGuard quiet;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    knnf::Tensor t = params[pi].second;
    for (int r = 0; r < t->value.rows(); ++r) {
      for (int c = 0; c < t->value.cols(); ++c) {
        const double keep = t->value(r, c);
        t->value(r, c) = keep + step;
        const double up = make_loss()->value(0, 0);
        t->value(r, c) = keep - step;
        const double down = make_loss()->value(0, 0);
        t->value(r, c) = keep;
        const double fd = (up - down) / (2.0 * step);
        const double an = analytic[pi](r, c);
        ++res.checked;
        const double tol = 1e-4 * std::max(std::abs(an), std::abs(fd)) + 1e-8;
        if (std::abs(an - fd) > tol)
          res.failures.push_back(FdFailure{params[pi].first, r, c, an, fd});
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Graph references.
// ---------------------------------------------------------------------------

inline knnf::Grid<int> floyd_warshall_hops(const knnf::KnnGraph& g) {
  const int n = g.n;
  const int inf = 1 << 28;
  knnf::Grid<int> d(n, n, inf);
  for (int i = 0; i < n; ++i) d(i, i) = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && g.adj(i, j)) d(i, j) = 1;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        d(i, j) = std::min(d(i, j), d(i, k) + d(k, j));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (d(i, j) >= inf) d(i, j) = knnf::kUnreachable;
  return d;
}

// ---------------------------------------------------------------------------
// Assignment references.
// ---------------------------------------------------------------------------

inline double assignment_cost(const knnf::Grid<double>& cost, const std::vector<int>& row_to_col) {
  double s = 0.0;
  for (int i = 0; i < cost.rows(); ++i) s += cost(i, row_to_col[static_cast<size_t>(i)]);
  return s;
}

inline std::pair<double, std::vector<int>> exhaustive_assignment(const knnf::Grid<double>& cost) {
  const int n = cost.rows();
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> best_perm = perm;
  do {
    const double s = assignment_cost(cost, perm);
    if (s < best) {
      best = s;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, best_perm};
}

inline bool is_permutation_of_columns(const std::vector<int>& asg, int n) {
  if (static_cast<int>(asg.size()) != n) return false;
  std::vector<char> seen(static_cast<size_t>(n), 0);
  for (const int c : asg) {
    if (c < 0 || c >= n || seen[static_cast<size_t>(c)]) return false;
    seen[static_cast<size_t>(c)] = 1;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Attention references: one pair at a time, explicit dot products, no
// precomputation and no fused aggregates.
// ---------------------------------------------------------------------------

inline double dot_row(const knnf::Grid<double>& a, int ai, const knnf::Grid<double>& b, int bi) {
  double s = 0.0;
  for (int c = 0; c < a.cols(); ++c) s += a(ai, c) * b(bi, c);
  return s;
}

inline knnf::Grid<double> attention_scores_oracle(const knnf::Grid<double>& q,
                                                  const knnf::Grid<double>& k,
                                                  const knnf::HeadParams& hp,
                                                  const knnf::SpatialBundle& sp,
                                                  const knnf::ModelConfig& cfg) {
  const int n = q.rows(), d = q.cols();
  knnf::Grid<double> out(n, n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!sp.mask(i, j)) continue;
      double e = dot_row(q, i, k, j);
      const int r = cfg.p2c_uses_key_of_j ? j : i;
      if (cfg.use_hop_bias) {
        const int b = sp.buckets(i, j);
        e += dot_row(q, i, hp.hq->value, b);
        e += dot_row(k, r, hp.hk->value, b);
      }
      if (cfg.use_sigma_bias) {
        const double sig[2] = {sp.sigma.dist(i, j), sp.sigma.angle(i, j)};
        for (int p = 0; p < 2; ++p)
          e += (dot_row(q, i, hp.rq->value, p) + dot_row(k, r, hp.rk->value, p)) * sig[p];
      }
      out(i, j) = e / std::sqrt(static_cast<double>(d));
    }
  }
  return out;
}

inline knnf::Grid<double> masked_softmax_oracle(const knnf::Grid<double>& scores,
                                                const knnf::Grid<uint8_t>& mask) {
  const int n = scores.rows(), c = scores.cols();
  knnf::Grid<double> out(n, c, 0.0);
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (mask(i, j)) mx = std::max(mx, scores(i, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j)
      if (mask(i, j)) {
        out(i, j) = std::exp(scores(i, j) - mx);
        z += out(i, j);
      }
    for (int j = 0; j < c; ++j) out(i, j) /= z;
  }
  return out;
}

inline knnf::Grid<double> attention_output_oracle(const knnf::Grid<double>& probs,
                                                  const knnf::Grid<double>& v,
                                                  const knnf::HeadParams& hp,
                                                  const knnf::SpatialBundle& sp,
                                                  const knnf::ModelConfig& cfg) {
  const int n = probs.rows(), d = v.cols();
  knnf::Grid<double> out(n, d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!sp.mask(i, j) || probs(i, j) == 0.0) continue;
      for (int c = 0; c < d; ++c) {
        double contrib = v(j, c);
        if (cfg.use_hop_bias) contrib += hp.hv->value(sp.buckets(i, j), c);
        if (cfg.use_sigma_bias)
          contrib += sp.sigma.dist(i, j) * hp.rv->value(0, c) +
                     sp.sigma.angle(i, j) * hp.rv->value(1, c);
        out(i, c) += probs(i, j) * contrib;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random fixtures.
// ---------------------------------------------------------------------------

inline knnf::Grid<double> random_grid(knnf::Rng& rng, int rows, int cols, double lo = -1.0,
                                      double hi = 1.0) {
  knnf::Grid<double> g(rows, cols, 0.0);
  for (auto& v : g.cells()) v = rng.uniform(lo, hi);
  return g;
}

// A normalized document with n random boxes and random lowercase texts.
// Categories default to unlabeled; tests assign what they need.
inline knnf::Document random_document(knnf::Rng& rng, int n) {
  knnf::Document doc;
  doc.id = "fixture";
  doc.tag = "fixture";
  doc.page_w = 1.0;
  doc.page_h = 1.0;
  doc.normalized = true;
  for (int i = 0; i < n; ++i) {
    const double cx = rng.uniform(0.08, 0.92);
    const double cy = rng.uniform(0.08, 0.92);
    const double w = rng.uniform(0.02, 0.08);
    const double h = rng.uniform(0.015, 0.04);
    knnf::Entity e;
    e.box = knnf::clamp_to_unit_page(knnf::BBox{cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
    int len = static_cast<int>(rng.uniform_int(3, 8));
    for (int c = 0; c < len; ++c)
      e.text.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
    e.category = knnf::kNoCategory;
    doc.entities.push_back(std::move(e));
  }
  return doc;
}

}  // namespace knnft

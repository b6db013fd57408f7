#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "core.hpp"

namespace knnf {

// ---------------------------------------------------------------------------
// Dense matrix kernels (accumulating). All gradients flow through these.
// ---------------------------------------------------------------------------

inline void check_mm(int am, int an, int bm, int bn, int cm, int cn, const char* who) {
  if (an != bm || cm != am || cn != bn) throw InvalidShapeError(std::string(who) + ": shape mismatch");
}

// C += A * B
inline void mm_nn_acc(const Grid<double>& a, const Grid<double>& b, Grid<double>& c) {
  check_mm(a.rows(), a.cols(), b.rows(), b.cols(), c.rows(), c.cols(), "mm_nn_acc");
  const int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) c(i, j) += av * b(p, j);
    }
}

// C += A * B^T
inline void mm_nt_acc(const Grid<double>& a, const Grid<double>& b, Grid<double>& c) {
  check_mm(a.rows(), a.cols(), b.cols(), b.rows(), c.rows(), c.cols(), "mm_nt_acc");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a(i, p) * b(j, p);
      c(i, j) += s;
    }
}

// C += A^T * B
inline void mm_tn_acc(const Grid<double>& a, const Grid<double>& b, Grid<double>& c) {
  check_mm(a.cols(), a.rows(), b.rows(), b.cols(), c.rows(), c.cols(), "mm_tn_acc");
  const int k = a.rows(), m = a.cols(), n = b.cols();
  for (int p = 0; p < k; ++p)
    for (int i = 0; i < m; ++i) {
      const double av = a(p, i);
      if (av == 0.0) continue;
      for (int j = 0; j < n; ++j) c(i, j) += av * b(p, j);
    }
}

// ---------------------------------------------------------------------------
// Reverse-mode autodiff over Grid<double> values.
// ---------------------------------------------------------------------------

struct TensorNode;
using Tensor = std::shared_ptr<TensorNode>;

struct TensorNode {
  Grid<double> value;
  Grid<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<Tensor> parents;
  std::function<void(const Grid<double>&)> backward_fn;  // writes into parents' grads

  void accumulate(const Grid<double>& g) {
    if (g.rows() != value.rows() || g.cols() != value.cols())
      throw InvalidShapeError("TensorNode::accumulate: gradient shape mismatch");
    if (grad.rows() == 0) grad = Grid<double>(value.rows(), value.cols(), 0.0);
    for (size_t i = 0; i < grad.cells().size(); ++i) grad.cells()[i] += g.cells()[i];
  }
  void zero_grad() { grad = Grid<double>(); }
};

// Thread-local switch mirroring the usual gradient-mode idiom: ops built
// while disabled record no parents and no backward closure.
inline bool& grad_mode_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_enabled()) { grad_mode_enabled() = false; }
  ~NoGradGuard() { grad_mode_enabled() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline Tensor make_tensor(Grid<double> v, bool requires_grad = false) {
  auto t = std::make_shared<TensorNode>();
  t->value = std::move(v);
  t->requires_grad = requires_grad;
  return t;
}

inline Tensor make_param(Grid<double> v) { return make_tensor(std::move(v), true); }

// Factory for differentiable ops. The backward closure receives d(loss)/d(out)
// and must call parent->accumulate(...) for each parent that requires grad.
// Custom ops outside this header (e.g. fused attention) use the same entry.
inline Tensor make_op(Grid<double> value, std::vector<Tensor> parents,
                      std::function<void(const Grid<double>&)> backward_fn) {
  auto t = std::make_shared<TensorNode>();
  t->value = std::move(value);
  bool req = false;
  if (grad_mode_enabled())
    for (const auto& p : parents)
      if (p && p->requires_grad) req = true;
  t->requires_grad = req;
  if (req) {
    t->parents = std::move(parents);
    t->backward_fn = std::move(backward_fn);
  }
  return t;
}

// Reverse pass from a scalar (1x1) root. Topological order is built with an
// iterative DFS so deep graphs cannot overflow the call stack.
inline void backward(const Tensor& root) {
  if (!root) throw InvalidInputError("backward: null root");
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw InvalidShapeError("backward: root must be a 1x1 scalar");
  if (!root->requires_grad) return;

  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;  // (node, next parent index)
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->accumulate(Grid<double>(1, 1, 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward_fn && node->grad.rows() > 0) node->backward_fn(node->grad);
  }
}

// ---------------------------------------------------------------------------
// Core ops.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Grid<double> out(a->value.rows(), b->value.cols(), 0.0);
  mm_nn_acc(a->value, b->value, out);
  return make_op(std::move(out), {a, b}, [a, b](const Grid<double>& g) {
    if (a->requires_grad) {
      Grid<double> da(a->value.rows(), a->value.cols(), 0.0);
      mm_nt_acc(g, b->value, da);
      a->accumulate(da);
    }
    if (b->requires_grad) {
      Grid<double> db(b->value.rows(), b->value.cols(), 0.0);
      mm_tn_acc(a->value, g, db);
      b->accumulate(db);
    }
  });
}

// a * b^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  Grid<double> out(a->value.rows(), b->value.rows(), 0.0);
  mm_nt_acc(a->value, b->value, out);
  return make_op(std::move(out), {a, b}, [a, b](const Grid<double>& g) {
    if (a->requires_grad) {
      Grid<double> da(a->value.rows(), a->value.cols(), 0.0);
      mm_nn_acc(g, b->value, da);
      a->accumulate(da);
    }
    if (b->requires_grad) {
      Grid<double> db(b->value.rows(), b->value.cols(), 0.0);
      mm_tn_acc(g, a->value, db);
      b->accumulate(db);
    }
  });
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw InvalidShapeError(std::string(who) + ": operand shapes differ");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Grid<double> out = a->value;
  for (size_t i = 0; i < out.cells().size(); ++i) out.cells()[i] += b->value.cells()[i];
  return make_op(std::move(out), {a, b}, [a, b](const Grid<double>& g) {
    if (a->requires_grad) a->accumulate(g);
    if (b->requires_grad) b->accumulate(g);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Grid<double> out = a->value;
  for (size_t i = 0; i < out.cells().size(); ++i) out.cells()[i] -= b->value.cells()[i];
  return make_op(std::move(out), {a, b}, [a, b](const Grid<double>& g) {
    if (a->requires_grad) a->accumulate(g);
    if (b->requires_grad) {
      Grid<double> neg = g;
      for (auto& v : neg.cells()) v = -v;
      b->accumulate(neg);
    }
  });
}

inline Tensor scale(const Tensor& a, double s) {
  Grid<double> out = a->value;
  for (auto& v : out.cells()) v *= s;
  return make_op(std::move(out), {a}, [a, s](const Grid<double>& g) {
    if (!a->requires_grad) return;
    Grid<double> da = g;
    for (auto& v : da.cells()) v *= s;
    a->accumulate(da);
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Grid<double> out = a->value;
  for (size_t i = 0; i < out.cells().size(); ++i) out.cells()[i] *= b->value.cells()[i];
  return make_op(std::move(out), {a, b}, [a, b](const Grid<double>& g) {
    if (a->requires_grad) {
      Grid<double> da = g;
      for (size_t i = 0; i < da.cells().size(); ++i) da.cells()[i] *= b->value.cells()[i];
      a->accumulate(da);
    }
    if (b->requires_grad) {
      Grid<double> db = g;
      for (size_t i = 0; i < db.cells().size(); ++i) db.cells()[i] *= a->value.cells()[i];
      b->accumulate(db);
    }
  });
}

// Broadcast a 1xC bias over every row of a.
inline Tensor bias_add(const Tensor& a, const Tensor& bias) {
  if (bias->value.rows() != 1 || bias->value.cols() != a->value.cols())
    throw InvalidShapeError("bias_add: bias must be 1 x cols(a)");
  Grid<double> out = a->value;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += bias->value(0, j);
  return make_op(std::move(out), {a, bias}, [a, bias](const Grid<double>& g) {
    if (a->requires_grad) a->accumulate(g);
    if (bias->requires_grad) {
      Grid<double> db(1, g.cols(), 0.0);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
      bias->accumulate(db);
    }
  });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a->value.rows() != b->value.rows()) throw InvalidShapeError("concat_cols: row counts differ");
  const int n = a->value.rows(), ca = a->value.cols(), cb = b->value.cols();
  Grid<double> out(n, ca + cb, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < ca; ++j) out(i, j) = a->value(i, j);
    for (int j = 0; j < cb; ++j) out(i, ca + j) = b->value(i, j);
  }
  return make_op(std::move(out), {a, b}, [a, b, ca, cb](const Grid<double>& g) {
    if (a->requires_grad) {
      Grid<double> da(g.rows(), ca, 0.0);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < ca; ++j) da(i, j) = g(i, j);
      a->accumulate(da);
    }
    if (b->requires_grad) {
      Grid<double> db(g.rows(), cb, 0.0);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < cb; ++j) db(i, j) = g(i, ca + j);
      b->accumulate(db);
    }
  });
}

// Row-wise softmax with an optional 0/1 mask. Disallowed cells are exactly
// zero in the output and receive no gradient. A row with no allowed cell is
// an error rather than a silent NaN.
inline Tensor row_softmax(const Tensor& a, const Grid<uint8_t>& mask = Grid<uint8_t>()) {
  const int n = a->value.rows(), c = a->value.cols();
  const bool masked = mask.rows() > 0;
  if (masked && (mask.rows() != n || mask.cols() != c))
    throw InvalidShapeError("row_softmax: mask shape mismatch");
  Grid<double> out(n, c, 0.0);
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j)
      if (!masked || mask(i, j)) mx = std::max(mx, a->value(i, j));
    if (!std::isfinite(mx)) throw InvalidMaskError("row_softmax: row " + std::to_string(i) + " has no allowed column");
    double z = 0.0;
    for (int j = 0; j < c; ++j)
      if (!masked || mask(i, j)) {
        out(i, j) = std::exp(a->value(i, j) - mx);
        z += out(i, j);
      }
    for (int j = 0; j < c; ++j) out(i, j) /= z;
  }
  Grid<double> probs = out;  // captured for the backward pass
  return make_op(std::move(out), {a}, [a, probs, masked, mask](const Grid<double>& g) {
    if (!a->requires_grad) return;
    Grid<double> da(probs.rows(), probs.cols(), 0.0);
    for (int i = 0; i < probs.rows(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < probs.cols(); ++j) dot += g(i, j) * probs(i, j);
      for (int j = 0; j < probs.cols(); ++j) {
        if (masked && !mask(i, j)) continue;
        da(i, j) = probs(i, j) * (g(i, j) - dot);
      }
    }
    a->accumulate(da);
  });
}

// Row-wise layer normalization with affine parameters (1xC each).
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
  const int n = x->value.rows(), c = x->value.cols();
  if (gamma->value.rows() != 1 || gamma->value.cols() != c || beta->value.rows() != 1 || beta->value.cols() != c)
    throw InvalidShapeError("layer_norm: gamma/beta must be 1 x cols(x)");
  if (c < 1) throw InvalidShapeError("layer_norm: empty rows");
  Grid<double> xhat(n, c, 0.0), out(n, c, 0.0);
  std::vector<double> inv_std(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += x->value(i, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = x->value(i, j) - mu;
      var += d * d;
    }
    var /= c;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = is;
    for (int j = 0; j < c; ++j) {
      xhat(i, j) = (x->value(i, j) - mu) * is;
      out(i, j) = xhat(i, j) * gamma->value(0, j) + beta->value(0, j);
    }
  }
  return make_op(std::move(out), {x, gamma, beta},
                 [x, gamma, beta, xhat, inv_std](const Grid<double>& g) {
    const int n = xhat.rows(), c = xhat.cols();
    if (gamma->requires_grad) {
      Grid<double> dg(1, c, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) dg(0, j) += g(i, j) * xhat(i, j);
      gamma->accumulate(dg);
    }
    if (beta->requires_grad) {
      Grid<double> db(1, c, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) db(0, j) += g(i, j);
      beta->accumulate(db);
    }
    if (x->requires_grad) {
      Grid<double> dx(n, c, 0.0);
      for (int i = 0; i < n; ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (int j = 0; j < c; ++j) {
          const double dxh = g(i, j) * gamma->value(0, j);
          mean_dxhat += dxh;
          mean_dxhat_xhat += dxh * xhat(i, j);
        }
        mean_dxhat /= c;
        mean_dxhat_xhat /= c;
        for (int j = 0; j < c; ++j) {
          const double dxh = g(i, j) * gamma->value(0, j);
          dx(i, j) = inv_std[static_cast<size_t>(i)] * (dxh - mean_dxhat - xhat(i, j) * mean_dxhat_xhat);
        }
      }
      x->accumulate(dx);
    }
  });
}

// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor& a) {
  Grid<double> out = a->value;
  for (auto& v : out.cells()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return make_op(std::move(out), {a}, [a](const Grid<double>& g) {
    if (!a->requires_grad) return;
    Grid<double> da = g;
    for (size_t i = 0; i < da.cells().size(); ++i) {
      const double x = a->value.cells()[i];
      const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi);
      da.cells()[i] *= cdf + x * pdf;
    }
    a->accumulate(da);
  });
}

// Gather rows of an embedding table; gradients scatter-add back.
inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& indices) {
  const int t = table->value.rows(), d = table->value.cols();
  Grid<double> out(static_cast<int>(indices.size()), d, 0.0);
  for (size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= t) throw InvalidInputError("embedding_lookup: index out of range");
    for (int j = 0; j < d; ++j) out(static_cast<int>(i), j) = table->value(idx, j);
  }
  return make_op(std::move(out), {table}, [table, indices](const Grid<double>& g) {
    if (!table->requires_grad) return;
    Grid<double> dt(table->value.rows(), table->value.cols(), 0.0);
    for (size_t i = 0; i < indices.size(); ++i)
      for (int j = 0; j < g.cols(); ++j) dt(indices[i], j) += g(static_cast<int>(i), j);
    table->accumulate(dt);
  });
}

// Mean cross-entropy from raw logits. Rows whose target is negative are
// ignored; at least one row must count.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  const int n = logits->value.rows(), c = logits->value.cols();
  if (static_cast<int>(targets.size()) != n) throw InvalidShapeError("cross_entropy: one target per row required");
  Grid<double> probs(n, c, 0.0);
  double loss = 0.0;
  int counted = 0;
  for (int i = 0; i < n; ++i) {
    double mx = logits->value(i, 0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, logits->value(i, j));
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      probs(i, j) = std::exp(logits->value(i, j) - mx);
      z += probs(i, j);
    }
    for (int j = 0; j < c; ++j) probs(i, j) /= z;
    const int t = targets[i];
    if (t < 0) continue;
    if (t >= c) throw InvalidInputError("cross_entropy: target out of range");
    loss += -(logits->value(i, t) - mx - std::log(z));
    ++counted;
  }
  if (counted == 0) throw InvalidInputError("cross_entropy: no labeled rows");
  Grid<double> out(1, 1, loss / counted);
  return make_op(std::move(out), {logits}, [logits, probs, targets, counted](const Grid<double>& g) {
    if (!logits->requires_grad) return;
    const double s = g(0, 0) / counted;
    Grid<double> dl(probs.rows(), probs.cols(), 0.0);
    for (int i = 0; i < probs.rows(); ++i) {
      if (targets[static_cast<size_t>(i)] < 0) continue;
      for (int j = 0; j < probs.cols(); ++j) dl(i, j) = s * probs(i, j);
      dl(i, targets[static_cast<size_t>(i)]) -= s;
    }
    logits->accumulate(dl);
  });
}

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (const auto& v : a->value.cells()) s += v;
  return make_op(Grid<double>(1, 1, s), {a}, [a](const Grid<double>& g) {
    if (!a->requires_grad) return;
    a->accumulate(Grid<double>(a->value.rows(), a->value.cols(), g(0, 0)));
  });
}

// Plain (non-differentiable) row softmax used by decoding and evaluation.
inline Grid<double> softmax_rows(const Grid<double>& logits) {
  Grid<double> out(logits.rows(), logits.cols(), 0.0);
  for (int i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (int j = 1; j < logits.cols(); ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (int j = 0; j < logits.cols(); ++j) {
      out(i, j) = std::exp(logits(i, j) - mx);
      z += out(i, j);
    }
    for (int j = 0; j < logits.cols(); ++j) out(i, j) /= z;
  }
  return out;
}

}  // namespace knnf

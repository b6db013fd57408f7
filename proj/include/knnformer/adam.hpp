#pragma once

#include <cmath>
#include <vector>

#include "tensor.hpp"

namespace knnf {

struct AdamConfig {
  double lr = 5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

enum class NonFinitePolicy { kFail, kSkip };

// First/second moment estimates for one list of parameters, in list order.
struct AdamState {
  std::vector<Grid<double>> m;
  std::vector<Grid<double>> v;
  long long step = 0;

  explicit AdamState(const std::vector<Tensor>& params) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.emplace_back(p->value.rows(), p->value.cols(), 0.0);
      v.emplace_back(p->value.rows(), p->value.cols(), 0.0);
    }
  }
};

// One Adam update with bias correction. Parameters with no accumulated
// gradient are treated as zero-gradient. Returns false when a non-finite
// gradient was found and the whole step was skipped (kSkip); kFail throws.
inline bool adam_step(const std::vector<Tensor>& params, AdamState& state, const AdamConfig& cfg,
                      NonFinitePolicy policy = NonFinitePolicy::kFail) {
  if (params.size() != state.m.size()) throw InvalidInputError("adam_step: state/param count mismatch");
  for (const auto& p : params) {
    if (p->grad.rows() == 0) continue;
    for (const double g : p->grad.cells())
      if (!std::isfinite(g)) {
        if (policy == NonFinitePolicy::kSkip) return false;
        throw InvalidInputError("adam_step: non-finite gradient");
      }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    const bool has_grad = p->grad.rows() > 0;
    for (size_t i = 0; i < p->value.cells().size(); ++i) {
      const double g = has_grad ? p->grad.cells()[i] : 0.0;
      m.cells()[i] = cfg.beta1 * m.cells()[i] + (1.0 - cfg.beta1) * g;
      v.cells()[i] = cfg.beta2 * v.cells()[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m.cells()[i] / bc1;
      const double vhat = v.cells()[i] / bc2;
      p->value.cells()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return true;
}

inline void zero_grads(const std::vector<Tensor>& params) {
  for (const auto& p : params) p->zero_grad();
}

}  // namespace knnf

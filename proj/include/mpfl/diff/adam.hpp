#pragma once

#include <cmath>
#include <vector>

#include "mpfl/diff/tensor.hpp"

namespace mpfl::diff {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

// One bias-corrected Adam update over `params`, reading their accumulated
// gradients. Frozen parameters (requires_grad off) are left alone.
inline void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].tensor.size(), 0.0);
      state.v[i].assign(params[i].tensor.size(), 0.0);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].tensor;
    if (!t.requires_grad()) continue;
    const auto g = t.grad();
    if (g.empty()) continue;
    auto w = t.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw Error(ErrorKind::Shape, "adam state mismatch for " + params[i].name);
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      w[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

}  // namespace mpfl::diff

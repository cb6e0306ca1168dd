#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hnmt/common.hpp"
#include "hnmt/tensor.hpp"

namespace hnmt {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Adam with bias correction. Moments and step counters are kept per
// parameter: only the parameters handed to update() advance, so task-private
// parameters never feel another task's steps.
class AdamState {
public:
  void update(NamedParams& params, const AdamConfig& cfg) {
    for (auto& [id, p] : params) {
      if (!p.has_grad())
        throw ContractError("adam_update: missing gradient on parameter '" + id + "'");
      Slot& s = slots_[id];
      if (s.m.empty()) {
        s.m.assign(p.size(), 0.0);
        s.v.assign(p.size(), 0.0);
      }
      s.t += 1;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
      const auto& g = p.grad();
      double* w = p.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * g[i];
        s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      }
      p.zero_grad();
    }
  }

  long step_count(const std::string& id) const {
    auto it = slots_.find(id);
    return it == slots_.end() ? 0 : it->second.t;
  }

private:
  struct Slot {
    std::vector<double> m, v;
    long t = 0;
  };
  std::map<std::string, Slot> slots_;
};

inline double global_grad_norm(const NamedParams& params) {
  double acc = 0.0;
  for (const auto& [id, p] : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) acc += g * g;
  }
  return std::sqrt(acc);
}

// Global-norm clipping across the given parameter set; no-op when the norm
// is within bounds or max_norm <= 0.
inline void clip_gradients(NamedParams& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  const double s = max_norm / norm;
  for (auto& [id, p] : params) {
    if (!p.has_grad()) continue;
    for (double& g : p.grad()) g *= s;
  }
}

inline void adam_update(NamedParams& params, AdamState& state, const AdamConfig& cfg) {
  state.update(params, cfg);
}

}  // namespace hnmt

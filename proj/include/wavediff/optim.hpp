#pragma once

#include <cmath>
#include <cstddef>

#include "wavediff/errors.hpp"
#include "wavediff/param_store.hpp"

namespace wavediff::nn {

// ============================================================================
// Adam with bias correction. One call consumes the accumulated gradients and
// zeroes them; calling without fresh gradients is a caller bug and throws.
// ============================================================================

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(ParamStore& store, const AdamConfig& cfg = {}) {
  require(store.grads_ready, "adam_step: no gradients accumulated since last step");
  store.adam_t += 1;
  const double t = static_cast<double>(store.adam_t);
  const double corr1 = 1.0 - std::pow(cfg.beta1, t);
  const double corr2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : store.entries()) {
    (void)name;
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
      const double g = e.grad[i];
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m[i] / corr1;
      const double vhat = e.v[i] / corr2;
      e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.zero_grads();
}

}  // namespace wavediff::nn

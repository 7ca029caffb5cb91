#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "wavediff/autodiff.hpp"
#include "wavediff/denoiser.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/rng.hpp"
#include "wavediff/schedule.hpp"

namespace wavediff {

// ============================================================================
// Forward noising, training objective, and reverse-process samplers.
//
// All tensors here are normalized wavelet-coefficient stacks [C,H,W]. The
// null condition for classifier-free mixing is the all-zero condition tensor:
// zeroed content channels plus a zeroed realness flag.
// ============================================================================

// ----------------------------------------------------------------------------
// Forward process algebra
// ----------------------------------------------------------------------------

/// x_k = sqrt(abar_k) x0 + sqrt(1-abar_k) eps.
inline nn::Tensor forward_noise(const NoiseSchedule& ns, const nn::Tensor& x0,
                                const nn::Tensor& eps, std::size_t k) {
  require(x0.same_dims(eps), "forward_noise: x0/eps shape mismatch");
  const double a = std::sqrt(ns.alpha_bar(k));
  const double b = std::sqrt(1.0 - ns.alpha_bar(k));
  nn::Tensor out(x0.dims);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

/// Invert the forward map given a noise estimate:
/// x0_hat = (x_k - sqrt(1-abar_k) eps_hat) / sqrt(abar_k).
inline nn::Tensor estimate_x0(const NoiseSchedule& ns, const nn::Tensor& xk,
                              const nn::Tensor& eps_hat, std::size_t k) {
  require(xk.same_dims(eps_hat), "estimate_x0: shape mismatch");
  const double inv_a = 1.0 / std::sqrt(ns.alpha_bar(k));
  const double b = std::sqrt(1.0 - ns.alpha_bar(k));
  nn::Tensor out(xk.dims);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (xk[i] - b * eps_hat[i]) * inv_a;
  return out;
}

// ----------------------------------------------------------------------------
// Conditional noise prediction with classifier-free mixing
// ----------------------------------------------------------------------------

/// eps(x, null) + w (eps(x, cond) - eps(x, null)); w == 1 short-circuits to a
/// single conditional pass, w == 0 to a single unconditional pass.
inline nn::Tensor cfg_epsilon(const nn::DenoiserConfig& dcfg, const nn::ParamStore& store,
                              const nn::Tensor& x, const nn::Tensor& cond, std::size_t k,
                              double w) {
  require(w >= 0.0 && w <= 1.0, "cfg_epsilon: mixing weight must lie in [0,1]");
  if (w == 1.0) return nn::denoiser_infer(dcfg, store, x, cond, k);
  const nn::Tensor null_cond(cond.dims);
  nn::Tensor uncond = nn::denoiser_infer(dcfg, store, x, null_cond, k);
  if (w == 0.0) return uncond;
  const nn::Tensor with = nn::denoiser_infer(dcfg, store, x, cond, k);
  for (std::size_t i = 0; i < uncond.numel(); ++i)
    uncond[i] += w * (with[i] - uncond[i]);
  return uncond;
}

// ----------------------------------------------------------------------------
// Training
// ----------------------------------------------------------------------------

/// One optimizer-ready step on a batch of (x0, cond) pairs: per sample draw
/// k uniform on [1,K], then the noise field, then the condition-drop coin —
/// in that order, which is the reproducibility contract. The loss is the
/// per-sample sum of squared noise-prediction errors, averaged over the
/// batch; gradients are accumulated into the store.
inline double diffusion_train_step(const NoiseSchedule& ns, const nn::DenoiserConfig& dcfg,
                                   nn::ParamStore& store, const std::vector<nn::Tensor>& x0s,
                                   const std::vector<nn::Tensor>& conds,
                                   double cond_drop_prob, Rng& rng) {
  require(!x0s.empty() && x0s.size() == conds.size(),
          "train_step: batch must pair x0 with cond");
  require(cond_drop_prob >= 0.0 && cond_drop_prob < 1.0,
          "train_step: cond_drop_prob must lie in [0,1)");
  nn::Tape tape;
  const nn::ParamLeaves leaves = nn::make_leaves(tape, store, true);
  nn::NodePtr total;
  for (std::size_t s = 0; s < x0s.size(); ++s) {
    const std::size_t k = 1 + static_cast<std::size_t>(rng.below(ns.steps()));
    nn::Tensor eps(x0s[s].dims);
    for (auto& e : eps.v) e = rng.normal();
    const bool drop = rng.bernoulli(cond_drop_prob);
    const nn::Tensor xk = forward_noise(ns, x0s[s], eps, k);
    const nn::Tensor cond_used = drop ? nn::Tensor(conds[s].dims) : conds[s];
    const nn::NodePtr out = nn::denoiser_forward(tape, dcfg, leaves, xk, cond_used, k);
    const nn::NodePtr loss = nn::sum_squared_diff(tape, out, eps);
    total = total ? nn::add(tape, total, loss) : loss;
  }
  total = nn::scale(tape, total, 1.0 / static_cast<double>(x0s.size()));
  tape.backward(total);
  nn::accumulate_grads(store, leaves);
  return total->val[0];
}

// ----------------------------------------------------------------------------
// Sampling
// ----------------------------------------------------------------------------

enum class SamplerKind {
  kDdpm,  // full-length ancestral sampling
  kDdim   // subsampled deterministic-to-stochastic family
};

struct SampleConfig {
  SamplerKind kind = SamplerKind::kDdpm;
  std::size_t ddim_steps = 50;  // model evaluations when kind == kDdim
  double eta = 1.0;             // DDIM noise scale in [0,1]
  double cfg_weight = 1.0;      // classifier-free mixing weight in [0,1]
  double guidance_weight = 0.0; // objective-gradient strength (lambda)

  void validate(std::size_t schedule_steps) const {
    require(eta >= 0.0 && eta <= 1.0, "sampler: eta must lie in [0,1]");
    require(cfg_weight >= 0.0 && cfg_weight <= 1.0,
            "sampler: cfg weight must lie in [0,1]");
    require(guidance_weight >= 0.0, "sampler: guidance weight must be >= 0");
    if (kind == SamplerKind::kDdim)
      require(ddim_steps >= 2 && ddim_steps <= schedule_steps,
              "sampler: ddim steps must lie in [2, schedule steps]");
  }
};

/// Gradient of a scalar objective with respect to the clean-sample estimate,
/// evaluated in the same normalized coefficient space the sampler works in.
using ObjectiveGrad = std::function<nn::Tensor(const nn::Tensor& x0_hat)>;

namespace detail {

/// Cosine ramp: zero strength at k=K rising to ~lambda at k=1.
inline double guidance_scale(double lambda, std::size_t k, std::size_t K) {
  const double phase = M_PI * static_cast<double>(K - k) / static_cast<double>(K);
  return lambda * 0.5 * (1.0 - std::cos(phase));
}

/// Model-evaluation step indices 1 = tau_0 < ... < tau_{S-1} = K.
inline std::vector<std::size_t> ddim_taus(std::size_t S, std::size_t K) {
  std::vector<std::size_t> tau(S);
  for (std::size_t i = 0; i < S; ++i)
    tau[i] = static_cast<std::size_t>(std::llround(
        1.0 + static_cast<double>(i) * static_cast<double>(K - 1) /
                  static_cast<double>(S - 1)));
  return tau;
}

inline void apply_guidance(nn::Tensor& mean, const nn::Tensor& x0_hat, double lambda,
                           std::size_t k, std::size_t K, const ObjectiveGrad& objective) {
  if (lambda <= 0.0 || !objective) return;
  const double lam_k = guidance_scale(lambda, k, K);
  if (lam_k == 0.0) return;
  const nn::Tensor g = objective(x0_hat);
  require(g.same_dims(mean), "guidance: gradient shape mismatch");
  for (std::size_t i = 0; i < mean.numel(); ++i) mean[i] -= lam_k * g[i];
}

}  // namespace detail

/// Draw one sample of shape x_dims by reversing the diffusion from pure noise.
/// Consumes rng in a fixed order: the initial field, then one noise field per
/// stochastic transition (sigma > 0), so equal seeds give equal samples.
inline nn::Tensor sample(const NoiseSchedule& ns, const nn::DenoiserConfig& dcfg,
                         const nn::ParamStore& store, const nn::Tensor& cond,
                         const std::vector<std::size_t>& x_dims, const SampleConfig& sc,
                         Rng& rng, const ObjectiveGrad& objective = {}) {
  const std::size_t K = ns.steps();
  sc.validate(K);
  require(sc.guidance_weight == 0.0 || static_cast<bool>(objective),
          "sampler: guidance weight set but no objective gradient provided");

  nn::Tensor x(x_dims);
  for (auto& v : x.v) v = rng.normal();

  const auto predict = [&](const nn::Tensor& xk, std::size_t k) {
    return cfg_epsilon(dcfg, store, xk, cond, k, sc.cfg_weight);
  };
  const auto add_noise = [&](nn::Tensor& mean, double sigma) {
    if (sigma > 0.0)
      for (auto& v : mean.v) v += sigma * rng.normal();
  };

  if (sc.kind == SamplerKind::kDdpm) {
    for (std::size_t k = K; k >= 1; --k) {
      const nn::Tensor eps = predict(x, k);
      const double inv_sqrt_alpha = 1.0 / std::sqrt(ns.alpha(k));
      const double coef = ns.beta(k) / std::sqrt(1.0 - ns.alpha_bar(k));
      nn::Tensor mean(x.dims);
      for (std::size_t i = 0; i < x.numel(); ++i)
        mean[i] = inv_sqrt_alpha * (x[i] - coef * eps[i]);
      if (sc.guidance_weight > 0.0 && objective)
        detail::apply_guidance(mean, estimate_x0(ns, x, eps, k), sc.guidance_weight, k,
                               K, objective);
      add_noise(mean, ns.sigma(k));
      x = std::move(mean);
    }
  } else {
    const std::vector<std::size_t> tau = detail::ddim_taus(sc.ddim_steps, K);
    // Transitions tau_i -> tau_{i-1}, then tau_0 = 1 -> 0 (the clean sample;
    // alpha_bar(0) = 1 collapses that last update to x0_hat).
    for (std::size_t i = tau.size(); i-- > 0;) {
      const std::size_t k = tau[i];
      const std::size_t s = i > 0 ? tau[i - 1] : 0;
      const nn::Tensor eps = predict(x, k);
      const nn::Tensor x0_hat = estimate_x0(ns, x, eps, k);
      const double ab_k = ns.alpha_bar(k), ab_s = ns.alpha_bar(s);
      const double sigma = sc.eta * std::sqrt((1.0 - ab_s) / (1.0 - ab_k)) *
                           std::sqrt(1.0 - ab_k / ab_s);
      const double dir = std::sqrt(std::max(0.0, 1.0 - ab_s - sigma * sigma));
      const double scale_x0 = std::sqrt(ab_s);
      nn::Tensor mean(x.dims);
      for (std::size_t j = 0; j < x.numel(); ++j)
        mean[j] = scale_x0 * x0_hat[j] + dir * eps[j];
      if (sc.guidance_weight > 0.0 && objective)
        detail::apply_guidance(mean, x0_hat, sc.guidance_weight, k, K, objective);
      add_noise(mean, sigma);
      x = std::move(mean);
    }
  }

  for (double v : x.v)
    if (!std::isfinite(v)) throw NumericalError("sampler: non-finite sample");
  return x;
}

}  // namespace wavediff

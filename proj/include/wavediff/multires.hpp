#pragma once

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <utility>
#include <vector>

#include "wavediff/codec.hpp"
#include "wavediff/diffusion.hpp"
#include "wavediff/denoiser.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"
#include "wavediff/param_store.hpp"
#include "wavediff/rng.hpp"
#include "wavediff/wavelet.hpp"

namespace wavediff {

// ============================================================================
// Inference across resolution levels.
//
// A trained model carries per-level channel statistics (store.stats keyed by
// level, level 0 = the stored grid, level L = stride-2^L decimation). When a
// query grid sits at a level the model never saw — coarser, or finer than the
// stored data entirely — the nearest trained level's statistics are used.
// Levels finer than the stored grid are expressed as negative integers.
//
// Sampling runs in normalized coefficient space end to end: conditions are
// z-scored on the way in, generated stacks un-scored on the way out.
// ============================================================================

/// Statistics of the trained level nearest to `level` (ties prefer finer).
inline const nn::NormStats& stats_for_level(const nn::ParamStore& store, int level) {
  require(!store.stats.empty(), "stats_for_level: model has no channel statistics");
  const nn::NormStats* best = nullptr;
  long best_dist = 0;
  for (const auto& [lvl, st] : store.stats) {
    const long dist = std::labs(static_cast<long>(lvl) - static_cast<long>(level));
    if (best == nullptr || dist < best_dist) {
      best = &st;
      best_dist = dist;
    }
  }
  return *best;
}

/// Subband-stack dims [channels, h, w] generated for a task on a state grid.
inline std::vector<std::size_t> gen_dims(TaskKind task,
                                         const std::vector<std::size_t>& state_dims,
                                         const WaveletSpec& w) {
  require(state_dims.size() == 2, "gen_dims: expected [time, space] dims");
  return {gen_channels(task), w.coeff_len(state_dims[0]), w.coeff_len(state_dims[1])};
}

/// Wavelet recorded in a trained model's metadata.
inline WaveletSpec w_of(const nn::ParamStore& store) {
  const auto& m = store.meta.at("wavelet");
  return WaveletSpec::make(m.at("family").get<std::string>(),
                           boundary_mode_from_name(m.at("mode").get<std::string>()));
}

/// Draw one generation in raw coefficient space: normalizes the condition,
/// samples, and un-normalizes the result with the level's statistics.
inline nn::Tensor sample_gen(const NoiseSchedule& ns, const nn::DenoiserConfig& dcfg,
                             const nn::ParamStore& store, TaskKind task,
                             const nn::Tensor& raw_cond, int level,
                             const std::vector<std::size_t>& state_dims,
                             const SampleConfig& sc, Rng& rng,
                             const ObjectiveGrad& objective = {}) {
  require(raw_cond.dims.size() == 3 && raw_cond.dims[0] == cond_channels(task),
          "sample_gen: condition channel count does not match the task");
  const nn::NormStats& st = stats_for_level(store, level);
  nn::Tensor cond = raw_cond;
  normalize_cond(cond, st, gen_channels(task));
  nn::Tensor gen = sample(ns, dcfg, store, cond, gen_dims(task, state_dims, w_of(store)), sc,
                          rng, objective);
  denormalize_gen(gen, st);
  return gen;
}

/// Simulate: sample the state grid given a force grid and initial profile.
inline GridTensor sample_simulate(const NoiseSchedule& ns, const nn::DenoiserConfig& dcfg,
                                  const nn::ParamStore& store, const GridTensor& f,
                                  const std::vector<double>& u0, int level,
                                  const SampleConfig& sc, Rng& rng) {
  const WaveletSpec w = w_of(store);
  require(f.dim(1) == u0.size(), "sample_simulate: force and profile widths differ");
  const std::vector<std::size_t> state_dims = {f.dim(0) + 1, f.dim(1)};
  const nn::Tensor wf = encode_force(f, w);
  const nn::Tensor cond = pack_channels({wf, encode_profile(u0, wf.dims[1], w),
                                         flag_channel(wf.dims[1], wf.dims[2], 1.0)});
  const nn::Tensor gen =
      sample_gen(ns, dcfg, store, TaskKind::kSimulate, cond, level, state_dims, sc, rng);
  return decode_state(gen, 0, state_dims, w);
}

/// Control: jointly sample state and force steering u0 toward u_target.
/// The optional objective gradient acts on the normalized 8-channel stack.
inline std::pair<GridTensor, GridTensor> sample_control(
    const NoiseSchedule& ns, const nn::DenoiserConfig& dcfg, const nn::ParamStore& store,
    const std::vector<double>& u0, const std::vector<double>& u_target,
    const std::vector<std::size_t>& state_dims, int level, const SampleConfig& sc, Rng& rng,
    const ObjectiveGrad& objective = {}) {
  const WaveletSpec w = w_of(store);
  require(state_dims.size() == 2 && state_dims[1] == u0.size(),
          "sample_control: state dims must match the profiles");
  const std::size_t h = w.coeff_len(state_dims[0]);
  const nn::Tensor cond = control_condition(u0, u_target, h, w);
  const nn::Tensor gen = sample_gen(ns, dcfg, store, TaskKind::kControl, cond, level,
                                    state_dims, sc, rng, objective);
  return decode_control(gen, state_dims, w);
}

/// One refinement stage: coarse state subbands -> subbands at the grid of
/// (f_high, u0_high).
inline nn::Tensor superres_stage(const NoiseSchedule& ns, const nn::DenoiserConfig& dcfg,
                                 const nn::ParamStore& store, const nn::Tensor& low_state,
                                 const GridTensor& f_high, const std::vector<double>& u0_high,
                                 int level, const SampleConfig& sc, Rng& rng) {
  const WaveletSpec w = w_of(store);
  const std::vector<std::size_t> state_dims = {f_high.dim(0) + 1, f_high.dim(1)};
  const nn::Tensor cond = superres_condition(low_state, f_high, u0_high, w);
  return sample_gen(ns, dcfg, store, TaskKind::kSuperres, cond, level, state_dims, sc, rng);
}

/// Full chain: simulate `stages` levels coarser than the (f, u0) grid, then
/// refine upward one factor-2 step at a time. Coarser-stage inputs are the
/// stride-2 decimations of (f, u0); `finest_level` names the level of the
/// input grid itself (negative when finer than the stored data).
inline GridTensor superres_rollout(
    const NoiseSchedule& base_ns, const nn::DenoiserConfig& base_cfg,
    const nn::ParamStore& base_store, const NoiseSchedule& refine_ns,
    const nn::DenoiserConfig& refine_cfg, const nn::ParamStore& refine_store,
    const GridTensor& f, const std::vector<double>& u0, int finest_level,
    std::size_t stages, const SampleConfig& sc, Rng& rng) {
  const WaveletSpec w = w_of(base_store);
  require(f.dim(1) == u0.size(), "superres_rollout: force and profile widths differ");

  // Input ladder, finest first.
  std::vector<GridTensor> fs = {f};
  std::vector<std::vector<double>> u0s = {u0};
  for (std::size_t s = 0; s < stages; ++s) {
    fs.push_back(downsample(fs.back(), {2, 2}));
    std::vector<double>& prev = u0s.back();
    std::vector<double> half(prev.size() / 2 + prev.size() % 2);
    for (std::size_t j = 0; j < half.size(); ++j) half[j] = prev[2 * j];
    u0s.push_back(std::move(half));
  }

  const GridTensor& fc = fs[stages];
  const std::vector<std::size_t> coarse_dims = {fc.dim(0) + 1, fc.dim(1)};
  const nn::Tensor wf = encode_force(fc, w);
  const nn::Tensor cond = pack_channels({wf, encode_profile(u0s[stages], wf.dims[1], w),
                                         flag_channel(wf.dims[1], wf.dims[2], 1.0)});
  nn::Tensor state = sample_gen(base_ns, base_cfg, base_store, TaskKind::kSimulate, cond,
                                finest_level + static_cast<int>(stages), coarse_dims, sc, rng);

  for (std::size_t s = stages; s-- > 0;)
    state = superres_stage(refine_ns, refine_cfg, refine_store, state, fs[s], u0s[s],
                           finest_level + static_cast<int>(s), sc, rng);

  return decode_state(state, 0, {f.dim(0) + 1, f.dim(1)}, w);
}

// ----------------------------------------------------------------------------
// Guidance objective for control
// ----------------------------------------------------------------------------

/// Gradient of the steering objective with respect to the normalized control
/// stack, for use as a sampling objective:
///
///   J = sum_x |u(T,x) - u*(x)|^2 dx + alpha * sum_{t,x} f^2 dt dx
///       [+ recon_weight * sum_x |u(0,x) - u0(x)|^2 dx]
///
/// with dx = 1/nx and dt = horizon/nt on the decoded grid itself. The chain
/// rule runs decode backwards: grid gradients -> reconstruction adjoint ->
/// un-normalization scale.
inline ObjectiveGrad make_control_objective(const nn::ParamStore& store,
                                            const std::vector<std::size_t>& state_dims,
                                            int level, std::vector<double> u_target,
                                            double alpha, double horizon,
                                            double recon_weight = 0.0,
                                            std::vector<double> u0 = {}) {
  require(state_dims.size() == 2 && state_dims[1] == u_target.size(),
          "control objective: target length must match the state width");
  require(recon_weight == 0.0 || u0.size() == u_target.size(),
          "control objective: recon term needs an initial profile of matching length");
  const WaveletSpec w = w_of(store);
  const nn::NormStats st = stats_for_level(store, level);
  require(st.mean.size() >= 8, "control objective: statistics cover too few channels");

  return [=](const nn::Tensor& x0_hat) -> nn::Tensor {
    require(x0_hat.dims.size() == 3 && x0_hat.dims[0] == 8,
            "control objective: expected an 8-channel stack");
    const std::size_t nt = state_dims[0] - 1, nx = state_dims[1];
    const double dx = 1.0 / static_cast<double>(nx);
    const double dt = horizon / static_cast<double>(nt);

    // Decode to raw grids.
    nn::Tensor raw = x0_hat;
    denormalize_gen(raw, st);
    const GridTensor u = decode_state(raw, 0, state_dims, w);
    const GridTensor fl = decode_state(raw, 4, state_dims, w);

    // Grid-space gradients.
    GridTensor gu(state_dims, u.roles());
    const std::size_t last = nt * nx;
    for (std::size_t j = 0; j < nx; ++j)
      gu.data()[last + j] = 2.0 * (u[last + j] - u_target[j]) * dx;
    if (recon_weight > 0.0)
      for (std::size_t j = 0; j < nx; ++j)
        gu.data()[j] = 2.0 * recon_weight * (u[j] - u0[j]) * dx;
    GridTensor gf(state_dims, fl.roles());
    const double fscale = 2.0 * alpha * dt * dx;
    for (std::size_t i = 0; i < last; ++i) gf.data()[i] = fscale * fl[i];
    // The lifted duplicate row is dropped on decode, so it gets no gradient.

    // Back through reconstruction and normalization.
    const SubbandSet like = state_template(state_dims, w);
    const nn::Tensor gsu = stack_bands(idwt_nd_adjoint(gu, like));
    const nn::Tensor gsf = stack_bands(idwt_nd_adjoint(gf, like));
    nn::Tensor grad = pack_channels({gsu, gsf});
    const std::size_t hw = grad.dims[1] * grad.dims[2];
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t i = 0; i < hw; ++i) grad.v[c * hw + i] *= st.stdev[c];
    return grad;
  };
}

}  // namespace wavediff

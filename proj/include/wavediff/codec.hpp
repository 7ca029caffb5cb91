#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavediff/autodiff.hpp"
#include "wavediff/dataset.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"
#include "wavediff/param_store.hpp"
#include "wavediff/resample.hpp"
#include "wavediff/wavelet.hpp"

namespace wavediff {

// ============================================================================
// Task codecs: trajectories <-> normalized channel stacks in coefficient
// space.
//
// Every model works on [C, h, w] stacks where (h, w) are the 2-D subband dims
// of the state grid and channels are, per task:
//
//   simulate   gen:  state subbands (4)
//              cond: force subbands (4) + initial-profile pair (2) + flag
//   control    gen:  state subbands (4) + force subbands (4)
//              cond: initial-profile pair (2) + target-profile pair (2) + flag
//   superres   gen:  state subbands at the finer level (4)
//              cond: coarser-level state subbands aligned up (4)
//                    + force subbands (4) + initial-profile pair (2) + flag
//
// The force grid has one row fewer than the state grid (left-endpoint time
// stamps), so it is lifted by duplicating its last row before the transform
// and that row is dropped again on decode. 1-D profiles (initial/target
// states) are transformed along space only and repeated across rows; their
// coefficient length matches the subband width by construction. The flag
// channel is 1 for a real condition and 0 for the null condition used in
// classifier-free training.
// ============================================================================

enum class TaskKind { kSimulate, kControl, kSuperres };

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::kSimulate: return "simulate";
    case TaskKind::kControl: return "control";
    case TaskKind::kSuperres: return "superres";
  }
  return "?";
}

inline TaskKind task_from_name(const std::string& name) {
  if (name == "simulate") return TaskKind::kSimulate;
  if (name == "control") return TaskKind::kControl;
  if (name == "superres") return TaskKind::kSuperres;
  throw ValidationError("unknown task '" + name + "'");
}

constexpr std::size_t gen_channels(TaskKind t) {
  return t == TaskKind::kControl ? 8 : 4;
}

constexpr std::size_t cond_channels(TaskKind t) {
  switch (t) {
    case TaskKind::kSimulate: return 7;
    case TaskKind::kControl: return 5;
    case TaskKind::kSuperres: return 11;
  }
  return 0;
}

// ----------------------------------------------------------------------------
// Channel-stack primitives
// ----------------------------------------------------------------------------

/// Concatenate [C_i, h, w] stacks along the channel axis.
inline nn::Tensor pack_channels(const std::vector<nn::Tensor>& parts) {
  require(!parts.empty(), "pack_channels: nothing to pack");
  const std::size_t h = parts[0].dims.at(1), w = parts[0].dims.at(2);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    require(p.dims.size() == 3 && p.dims[1] == h && p.dims[2] == w,
            "pack_channels: spatial dims mismatch");
    channels += p.dims[0];
  }
  nn::Tensor out({channels, h, w});
  auto dst = out.v.begin();
  for (const auto& p : parts) dst = std::copy(p.v.begin(), p.v.end(), dst);
  return out;
}

/// Stack the subbands of a 2-D transform as channels, in canonical band order
/// (LL, LH, HL, HH).
inline nn::Tensor stack_bands(const SubbandSet& s) {
  require(s.band_count() == 4, "stack_bands: expected a 2-D subband set");
  const auto& bd = s.bands.front().second.dims();
  nn::Tensor out({4, bd[0], bd[1]});
  for (std::size_t b = 0; b < 4; ++b) {
    const GridTensor& band = s.bands[b].second;
    require(band.dims() == bd, "stack_bands: ragged band dims");
    std::copy(band.data().begin(), band.data().end(),
              out.v.begin() + static_cast<std::ptrdiff_t>(b * band.element_count()));
  }
  return out;
}

/// Empty 2-D subband set for a [time, space] grid of the given size.
inline SubbandSet state_template(const std::vector<std::size_t>& dims,
                                 const WaveletSpec& w) {
  require(dims.size() == 2, "state_template: expected [time, space] dims");
  SubbandSet s;
  s.spec = w;
  s.source_dims = dims;
  s.axes = {0, 1};
  const std::vector<std::size_t> bd = {w.coeff_len(dims[0]), w.coeff_len(dims[1])};
  const std::vector<AxisRole> roles = {AxisRole::kTime, AxisRole::kSpace};
  for (const char* key : {"LL", "LH", "HL", "HH"}) s.bands.emplace_back(key, GridTensor(bd, roles));
  return s;
}

/// Write 4 consecutive channels of a stack into the bands of a subband set.
inline void unstack_bands(const nn::Tensor& x, std::size_t first_channel, SubbandSet& into) {
  require(into.band_count() == 4, "unstack_bands: expected a 2-D subband set");
  require(x.dims.size() == 3 && first_channel + 4 <= x.dims[0],
          "unstack_bands: channel range out of bounds");
  const std::size_t hw = x.dims[1] * x.dims[2];
  for (std::size_t b = 0; b < 4; ++b) {
    GridTensor& band = into.bands[b].second;
    require(band.dims() == std::vector<std::size_t>{x.dims[1], x.dims[2]},
            "unstack_bands: band dims mismatch");
    std::copy_n(x.v.begin() + static_cast<std::ptrdiff_t>((first_channel + b) * hw), hw,
                band.data().begin());
  }
}

/// Duplicate the low-resolution stack onto a finer coefficient grid:
/// out[c,i,j] = low[c, min(i/2, h-1), min(j/2, w-1)]. Valid when each target
/// size lies within one sample of doubling, which is exactly the slack the
/// per-level coefficient sizes produce.
inline nn::Tensor align_nearest(const nn::Tensor& low, std::size_t ht, std::size_t wt) {
  require(low.dims.size() == 3, "align_nearest: expected [C,h,w]");
  const std::size_t C = low.dims[0], h = low.dims[1], w = low.dims[2];
  require(ht + 1 >= 2 * h && ht <= 2 * h + 1,
          "align_nearest: target height not within one of doubling");
  require(wt + 1 >= 2 * w && wt <= 2 * w + 1,
          "align_nearest: target width not within one of doubling");
  nn::Tensor out({C, ht, wt});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < ht; ++i) {
      const double* src = &low.v[(c * h + std::min(i / 2, h - 1)) * w];
      double* dst = &out.v[(c * ht + i) * wt];
      for (std::size_t j = 0; j < wt; ++j) dst[j] = src[std::min(j / 2, w - 1)];
    }
  return out;
}

// ----------------------------------------------------------------------------
// Encoding primitives
// ----------------------------------------------------------------------------

/// 2-D subband channels [4, h, w] of a [time, space] grid.
inline nn::Tensor encode_state(const GridTensor& u, const WaveletSpec& w) {
  require(u.rank() == 2 && u.role(0) == AxisRole::kTime && u.role(1) == AxisRole::kSpace,
          "encode_state: expected a [time, space] grid");
  return stack_bands(dwt_nd(u, w, {0, 1}));
}

/// Force rows are left-endpoint stamps; lift to the state row count by
/// duplicating the final row.
inline GridTensor lift_force(const GridTensor& f) {
  require(f.rank() == 2 && f.role(0) == AxisRole::kTime && f.role(1) == AxisRole::kSpace,
          "lift_force: expected a [time, space] grid");
  const std::size_t nt = f.dim(0), nx = f.dim(1);
  GridTensor out({nt + 1, nx}, f.roles(), f.extent());
  std::copy(f.data().begin(), f.data().end(), out.data().begin());
  std::copy(f.data().end() - static_cast<std::ptrdiff_t>(nx), f.data().end(),
            out.data().end() - static_cast<std::ptrdiff_t>(nx));
  return out;
}

inline nn::Tensor encode_force(const GridTensor& f, const WaveletSpec& w) {
  return encode_state(lift_force(f), w);
}

/// 1-D spatial profile -> [2, rows, coeff_len] with the (lo, hi) coefficient
/// rows repeated down the time axis.
inline nn::Tensor encode_profile(const std::vector<double>& profile, std::size_t rows,
                                 const WaveletSpec& w) {
  require(!profile.empty(), "encode_profile: empty profile");
  const std::size_t c = w.coeff_len(profile.size());
  std::vector<double> lo(c), hi(c);
  detail::dwt_line(w, profile.data(), profile.size(), lo.data(), hi.data());
  nn::Tensor out({2, rows, c});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(lo.begin(), lo.end(), out.v.begin() + static_cast<std::ptrdiff_t>(r * c));
    std::copy(hi.begin(), hi.end(),
              out.v.begin() + static_cast<std::ptrdiff_t>((rows + r) * c));
  }
  return out;
}

inline nn::Tensor flag_channel(std::size_t rows, std::size_t cols, double value) {
  nn::Tensor out({1, rows, cols});
  std::fill(out.v.begin(), out.v.end(), value);
  return out;
}

inline std::vector<double> state_row(const GridTensor& u, std::size_t row) {
  const std::size_t nx = u.dim(1);
  const auto begin = u.data().begin() + static_cast<std::ptrdiff_t>(row * nx);
  return {begin, begin + static_cast<std::ptrdiff_t>(nx)};
}

// ----------------------------------------------------------------------------
// Task encoders (training side: everything derives from one trajectory)
// ----------------------------------------------------------------------------

struct TaskTensors {
  nn::Tensor gen, cond;
};

inline TaskTensors encode_simulate(const GridTensor& u, const GridTensor& f,
                                   const WaveletSpec& w) {
  require(f.dim(0) + 1 == u.dim(0) && f.dim(1) == u.dim(1),
          "encode_simulate: force grid must be one row short of the state grid");
  TaskTensors t;
  t.gen = encode_state(u, w);
  const std::size_t h = t.gen.dims[1], wd = t.gen.dims[2];
  t.cond = pack_channels(
      {encode_force(f, w), encode_profile(state_row(u, 0), h, w), flag_channel(h, wd, 1.0)});
  return t;
}

/// Condition for steering toward a target profile from an initial one.
inline nn::Tensor control_condition(const std::vector<double>& u0,
                                    const std::vector<double>& u_target,
                                    std::size_t rows, const WaveletSpec& w) {
  require(u0.size() == u_target.size(), "control_condition: profile length mismatch");
  const std::size_t c = w.coeff_len(u0.size());
  return pack_channels({encode_profile(u0, rows, w), encode_profile(u_target, rows, w),
                        flag_channel(rows, c, 1.0)});
}

/// Training encoding: the trajectory's own endpoints provide the condition.
inline TaskTensors encode_control(const GridTensor& u, const GridTensor& f,
                                  const WaveletSpec& w) {
  require(f.dim(0) + 1 == u.dim(0) && f.dim(1) == u.dim(1),
          "encode_control: force grid must be one row short of the state grid");
  TaskTensors t;
  t.gen = pack_channels({encode_state(u, w), encode_force(f, w)});
  t.cond = control_condition(state_row(u, 0), state_row(u, u.dim(0) - 1), t.gen.dims[1], w);
  return t;
}

/// Condition for one super-resolution stage: the coarser level's state
/// subbands (as generated or encoded), plus the fine-level force and initial
/// profile.
inline nn::Tensor superres_condition(const nn::Tensor& low_state,
                                     const GridTensor& f_high,
                                     const std::vector<double>& u0_high,
                                     const WaveletSpec& w) {
  const nn::Tensor wf = encode_force(f_high, w);
  const std::size_t h = wf.dims[1], wd = wf.dims[2];
  return pack_channels({align_nearest(low_state, h, wd), wf,
                        encode_profile(u0_high, h, w), flag_channel(h, wd, 1.0)});
}

/// Training encoding: the coarser level is the stride-2 downsample of the
/// fine trajectory.
inline TaskTensors encode_superres(const GridTensor& u_high, const GridTensor& f_high,
                                   const WaveletSpec& w) {
  require(f_high.dim(0) + 1 == u_high.dim(0) && f_high.dim(1) == u_high.dim(1),
          "encode_superres: force grid must be one row short of the state grid");
  TaskTensors t;
  t.gen = encode_state(u_high, w);
  const GridTensor u_low = downsample(u_high, {2, 2});
  t.cond = superres_condition(encode_state(u_low, w), f_high, state_row(u_high, 0), w);
  return t;
}

inline TaskTensors encode_task(TaskKind task, const GridTensor& u, const GridTensor& f,
                               const WaveletSpec& w) {
  switch (task) {
    case TaskKind::kSimulate: return encode_simulate(u, f, w);
    case TaskKind::kControl: return encode_control(u, f, w);
    case TaskKind::kSuperres: return encode_superres(u, f, w);
  }
  throw ValidationError("encode_task: bad task");
}

// ----------------------------------------------------------------------------
// Decoding
// ----------------------------------------------------------------------------

/// Rebuild a [time, space] grid from 4 consecutive subband channels.
inline GridTensor decode_state(const nn::Tensor& x, std::size_t first_channel,
                               const std::vector<std::size_t>& state_dims,
                               const WaveletSpec& w) {
  SubbandSet s = state_template(state_dims, w);
  unstack_bands(x, first_channel, s);
  return idwt_nd(s);
}

/// Rebuild a force grid (drops the lifted duplicate row).
inline GridTensor decode_force(const nn::Tensor& x, std::size_t first_channel,
                               const std::vector<std::size_t>& force_dims,
                               const WaveletSpec& w) {
  const GridTensor lifted =
      decode_state(x, first_channel, {force_dims[0] + 1, force_dims[1]}, w);
  GridTensor out(force_dims, lifted.roles(), lifted.extent());
  std::copy_n(lifted.data().begin(), out.element_count(), out.data().begin());
  return out;
}

/// Split a control generation into its state and force grids.
inline std::pair<GridTensor, GridTensor> decode_control(
    const nn::Tensor& gen, const std::vector<std::size_t>& state_dims,
    const WaveletSpec& w) {
  require(gen.dims.size() == 3 && gen.dims[0] == 8, "decode_control: expected 8 channels");
  return {decode_state(gen, 0, state_dims, w),
          decode_force(gen, 4, {state_dims[0] - 1, state_dims[1]}, w)};
}

// ----------------------------------------------------------------------------
// Resolution levels and normalization
// ----------------------------------------------------------------------------

/// Stride-2^level decimation of both trajectory grids.
inline Trajectory trajectory_at_level(const Trajectory& t, std::size_t level) {
  if (level == 0) return t;
  const std::size_t f = std::size_t{1} << level;
  return {downsample(t.u, {f, f}), downsample(t.f, {f, f})};
}

/// Per-channel statistics over a set of encoded samples, covering the gen
/// channels followed by the condition channels except the trailing flag.
/// Degenerate channels get a floor so normalization stays invertible.
inline nn::NormStats compute_norm_stats(const std::vector<TaskTensors>& samples) {
  require(!samples.empty(), "compute_norm_stats: no samples");
  const std::size_t cg = samples[0].gen.dims[0];
  const std::size_t cc = samples[0].cond.dims[0] - 1;
  nn::NormStats st;
  st.mean.assign(cg + cc, 0.0);
  st.stdev.assign(cg + cc, 0.0);
  std::vector<double> m2(cg + cc, 0.0);
  std::size_t count = 0;
  for (const auto& s : samples) {
    require(s.gen.dims[0] == cg && s.cond.dims[0] == cc + 1,
            "compute_norm_stats: inconsistent channel counts");
    const std::size_t hw = s.gen.dims[1] * s.gen.dims[2];
    for (std::size_t c = 0; c < cg + cc; ++c) {
      const double* base = c < cg ? &s.gen.v[c * hw] : &s.cond.v[(c - cg) * hw];
      for (std::size_t i = 0; i < hw; ++i) {
        st.mean[c] += base[i];
        m2[c] += base[i] * base[i];
      }
    }
    count += hw;
  }
  for (std::size_t c = 0; c < cg + cc; ++c) {
    st.mean[c] /= static_cast<double>(count);
    const double var = m2[c] / static_cast<double>(count) - st.mean[c] * st.mean[c];
    st.stdev[c] = std::sqrt(std::max(var, 0.0));
    if (st.stdev[c] < 1e-6) st.stdev[c] = 1e-6;
  }
  st.validate();
  return st;
}

/// z-score the gen channels in place.
inline void normalize_gen(nn::Tensor& gen, const nn::NormStats& st) {
  const std::size_t cg = gen.dims[0], hw = gen.dims[1] * gen.dims[2];
  require(st.mean.size() >= cg, "normalize_gen: stats too short");
  for (std::size_t c = 0; c < cg; ++c) {
    const double mu = st.mean[c], inv = 1.0 / st.stdev[c];
    double* base = &gen.v[c * hw];
    for (std::size_t i = 0; i < hw; ++i) base[i] = (base[i] - mu) * inv;
  }
}

/// Undo normalize_gen.
inline void denormalize_gen(nn::Tensor& gen, const nn::NormStats& st) {
  const std::size_t cg = gen.dims[0], hw = gen.dims[1] * gen.dims[2];
  require(st.mean.size() >= cg, "denormalize_gen: stats too short");
  for (std::size_t c = 0; c < cg; ++c) {
    const double mu = st.mean[c], sd = st.stdev[c];
    double* base = &gen.v[c * hw];
    for (std::size_t i = 0; i < hw; ++i) base[i] = base[i] * sd + mu;
  }
}

/// z-score the condition's content channels in place; the flag passes through.
inline void normalize_cond(nn::Tensor& cond, const nn::NormStats& st, std::size_t cg) {
  const std::size_t cc = cond.dims[0] - 1, hw = cond.dims[1] * cond.dims[2];
  require(st.mean.size() == cg + cc, "normalize_cond: stats length mismatch");
  for (std::size_t c = 0; c < cc; ++c) {
    const double mu = st.mean[cg + c], inv = 1.0 / st.stdev[cg + c];
    double* base = &cond.v[c * hw];
    for (std::size_t i = 0; i < hw; ++i) base[i] = (base[i] - mu) * inv;
  }
}

}  // namespace wavediff

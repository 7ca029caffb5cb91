#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"

namespace wavediff {

// ============================================================================
// Strided downsampling and its approximate inverses.
//
// Downsampling keeps every factor-th sample starting at index 0, so an axis of
// length N maps to ceil(N/factor). Endpoint-inclusive axes (N = factor*m + 1)
// keep both boundary samples. A factor must divide N or N-1; anything else
// silently shifts grid alignment and is rejected.
// ============================================================================

enum class UpsampleScheme { kNearest, kLinear };

namespace detail {

inline std::size_t downsampled_len(std::size_t n, std::size_t f) {
  return (n - 1) / f + 1;
}

/// Apply an independent per-axis index map: out[idx] = in[map_axis(idx)].
template <typename MapFn>
GridTensor remap_axes(const GridTensor& in, const std::vector<std::size_t>& out_dims,
                      MapFn&& source_index) {
  GridTensor out(out_dims, in.roles(), in.extent());
  const auto in_strides = in.strides();
  const std::size_t rank = in.rank();
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = out.element_count();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < rank; ++a) src += source_index(a, idx[a]) * in_strides[a];
    out[flat] = in[src];
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < out_dims[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace detail

/// Keep every factor-th sample along each axis (factor 1 = pass-through).
/// Requires factor | N or factor | N-1 per axis.
inline GridTensor downsample(const GridTensor& in, const std::vector<std::size_t>& factors) {
  require(factors.size() == in.rank(), "downsample: one factor per axis required");
  std::vector<std::size_t> out_dims(in.rank());
  for (std::size_t a = 0; a < in.rank(); ++a) {
    const std::size_t n = in.dim(a), f = factors[a];
    require(f >= 1, "downsample: factors must be >= 1");
    require(n % f == 0 || (n - 1) % f == 0,
            "downsample: factor " + std::to_string(f) + " divides neither " +
                std::to_string(n) + " nor " + std::to_string(n - 1));
    out_dims[a] = detail::downsampled_len(n, f);
  }
  return detail::remap_axes(in, out_dims,
                            [&](std::size_t a, std::size_t i) { return i * factors[a]; });
}

/// Upsample along each axis. Axes with endpoint[a] = true are treated as
/// endpoint-inclusive sample grids: N -> factor*(N-1)+1, exact at coarse nodes.
/// Other axes map N -> factor*N with clamped interpolation at the tail.
inline GridTensor upsample(const GridTensor& in, const std::vector<std::size_t>& factors,
                           UpsampleScheme scheme, const std::vector<bool>& endpoint) {
  require(factors.size() == in.rank(), "upsample: one factor per axis required");
  require(endpoint.size() == in.rank(), "upsample: one endpoint flag per axis required");
  std::vector<std::size_t> out_dims(in.rank());
  for (std::size_t a = 0; a < in.rank(); ++a) {
    const std::size_t n = in.dim(a), f = factors[a];
    require(f >= 1, "upsample: factors must be >= 1");
    out_dims[a] = endpoint[a] ? f * (n - 1) + 1 : f * n;
  }

  GridTensor out(out_dims, in.roles(), in.extent());
  const auto in_strides = in.strides();
  const std::size_t rank = in.rank();
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t total = out.element_count();
  for (std::size_t flat = 0; flat < total; ++flat) {
    if (scheme == UpsampleScheme::kNearest) {
      std::size_t src = 0;
      for (std::size_t a = 0; a < rank; ++a) {
        const std::size_t f = factors[a], n = in.dim(a);
        // Endpoint grids round to the nearest node; cell grids replicate the
        // covering coarse cell.
        std::size_t i = endpoint[a] ? (idx[a] + f / 2) / f : idx[a] / f;
        if (i >= n) i = n - 1;
        src += i * in_strides[a];
      }
      out[flat] = in[src];
    } else {
      // Multi-linear: accumulate corner contributions of the enclosing cell.
      double acc = 0.0;
      const std::size_t corners = std::size_t{1} << rank;
      for (std::size_t c = 0; c < corners; ++c) {
        double w = 1.0;
        std::size_t src = 0;
        for (std::size_t a = 0; a < rank; ++a) {
          const std::size_t f = factors[a], n = in.dim(a);
          const std::size_t i0 = idx[a] / f;
          const double frac = static_cast<double>(idx[a] % f) / static_cast<double>(f);
          const bool hi = (c >> a) & 1u;
          std::size_t i = hi ? i0 + 1 : i0;
          if (i >= n) i = n - 1;  // endpoint clamp
          w *= hi ? frac : 1.0 - frac;
          src += i * in_strides[a];
        }
        if (w != 0.0) acc += w * in[src];
      }
      out[flat] = acc;
    }
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < out_dims[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace wavediff

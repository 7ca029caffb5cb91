#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavediff/bundle.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"

namespace wavediff {

// ============================================================================
// Single-level separable discrete wavelet transform.
//
// Families: bior1.3, bior2.4, db4, sym4. Boundary modes: periodization
// (circular; odd lengths are extended by repeating the last sample, giving
// ceil(N/2) coefficients per band) and zero padding (floor((N+L-1)/2)
// coefficients per band, boundary-exact once cropped back to N).
//
// Analysis convolves with the decomposition filters and keeps odd output
// phases; synthesis places coefficients back at those phases, convolves with
// the reconstruction filters, and compensates the filter-pair group delay of
// L-1 samples. The biorthogonal banks store all four filters explicitly; the
// orthogonal banks derive highpass/reconstruction filters from dec_lo.
// ============================================================================

enum class BoundaryMode { kPeriodization, kZero };

inline const char* boundary_mode_name(BoundaryMode m) {
  return m == BoundaryMode::kPeriodization ? "periodization" : "zero";
}

inline BoundaryMode boundary_mode_from_name(const std::string& s) {
  if (s == "periodization") return BoundaryMode::kPeriodization;
  if (s == "zero") return BoundaryMode::kZero;
  throw ValidationError("unknown boundary mode: " + s);
}

struct WaveletSpec {
  std::string name;
  BoundaryMode mode = BoundaryMode::kPeriodization;
  std::vector<double> dec_lo, dec_hi, rec_lo, rec_hi;

  [[nodiscard]] std::size_t filter_len() const { return dec_lo.size(); }

  [[nodiscard]] std::size_t coeff_len(std::size_t n) const {
    require(n >= 1, "coeff_len: empty axis");
    if (mode == BoundaryMode::kPeriodization) {
      require(n >= 2, "periodization requires axis length >= 2");
      return (n + 1) / 2;
    }
    return (n + filter_len() - 1) / 2;
  }

  static WaveletSpec make(const std::string& name, BoundaryMode mode);
};

namespace detail {

inline std::vector<double> scaled(std::initializer_list<double> ints, double scale) {
  std::vector<double> v;
  v.reserve(ints.size());
  for (double x : ints) v.push_back(x * scale);
  return v;
}

/// Highpass completion from the lowpass pair. With analysis sampling at odd
/// phases, alias cancellation and the odd-centered halfband identity hold for
///   dec_hi[n] = (-1)^(n+1) rec_lo[n],  rec_hi[n] = (-1)^n dec_lo[n],
/// giving perfect reconstruction at synthesis delay L-1.
inline void complete_highpass(WaveletSpec& w) {
  const std::size_t n = w.dec_lo.size();
  w.dec_hi.resize(n);
  w.rec_hi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    w.dec_hi[i] = -sign * w.rec_lo[i];
    w.rec_hi[i] = sign * w.dec_lo[i];
  }
}

}  // namespace detail

// ----------------------------------------------------------------------------
// 1-D worker kernels
// ----------------------------------------------------------------------------

namespace detail {

inline void dwt_line(const WaveletSpec& w, const double* x, std::size_t n,
                     double* lo, double* hi) {
  const std::size_t L = w.filter_len();
  if (w.mode == BoundaryMode::kPeriodization) {
    const std::size_t m = (n % 2 == 0) ? n : n + 1;  // odd: repeat last sample
    auto sample = [&](std::ptrdiff_t t) -> double {
      std::ptrdiff_t r = t % static_cast<std::ptrdiff_t>(m);
      if (r < 0) r += static_cast<std::ptrdiff_t>(m);
      const auto u = static_cast<std::size_t>(r);
      return x[u < n ? u : n - 1];
    };
    for (std::size_t i = 0; i < m / 2; ++i) {
      double alo = 0.0, ahi = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        const double v = sample(static_cast<std::ptrdiff_t>(2 * i + 1) -
                                static_cast<std::ptrdiff_t>(j));
        alo += w.dec_lo[j] * v;
        ahi += w.dec_hi[j] * v;
      }
      lo[i] = alo;
      hi[i] = ahi;
    }
  } else {
    const std::size_t c = (n + L - 1) / 2;
    for (std::size_t i = 0; i < c; ++i) {
      double alo = 0.0, ahi = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(2 * i + 1) -
                                 static_cast<std::ptrdiff_t>(j);
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
        const double v = x[static_cast<std::size_t>(t)];
        alo += w.dec_lo[j] * v;
        ahi += w.dec_hi[j] * v;
      }
      lo[i] = alo;
      hi[i] = ahi;
    }
  }
}

/// Scatter one reconstructed sample stream: for every coefficient i placed at
/// phase 2i+1, add rec[j] into position 2i+1+j-(L-1). Periodization wraps;
/// zero mode drops out-of-range taps (they fall on the padding).
inline void idwt_line(const WaveletSpec& w, const double* lo, const double* hi,
                      std::size_t n, double* out) {
  const std::size_t L = w.filter_len();
  const std::ptrdiff_t delay = static_cast<std::ptrdiff_t>(L) - 1;
  const std::size_t c = w.coeff_len(n);
  if (w.mode == BoundaryMode::kPeriodization) {
    const std::size_t m = (n % 2 == 0) ? n : n + 1;
    std::vector<double> ext(m, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        std::ptrdiff_t t = static_cast<std::ptrdiff_t>(2 * i + 1 + j) - delay;
        std::ptrdiff_t r = t % static_cast<std::ptrdiff_t>(m);
        if (r < 0) r += static_cast<std::ptrdiff_t>(m);
        ext[static_cast<std::size_t>(r)] += w.rec_lo[j] * lo[i] + w.rec_hi[j] * hi[i];
      }
    }
    for (std::size_t t = 0; t < n; ++t) out[t] = ext[t];
  } else {
    for (std::size_t t = 0; t < n; ++t) out[t] = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(2 * i + 1 + j) - delay;
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
        out[static_cast<std::size_t>(t)] += w.rec_lo[j] * lo[i] + w.rec_hi[j] * hi[i];
      }
    }
  }
}

/// Adjoint of idwt_line as a linear map (lo, hi) -> out: accumulates the
/// gradient w.r.t. the coefficients from a gradient w.r.t. the signal.
inline void idwt_line_adjoint(const WaveletSpec& w, const double* gout, std::size_t n,
                              double* glo, double* ghi) {
  const std::size_t L = w.filter_len();
  const std::ptrdiff_t delay = static_cast<std::ptrdiff_t>(L) - 1;
  const std::size_t c = w.coeff_len(n);
  if (w.mode == BoundaryMode::kPeriodization) {
    const std::size_t m = (n % 2 == 0) ? n : n + 1;
    // Positions >= n were cropped by idwt_line, so their gradient is zero.
    for (std::size_t i = 0; i < c; ++i) {
      double alo = 0.0, ahi = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        std::ptrdiff_t t = static_cast<std::ptrdiff_t>(2 * i + 1 + j) - delay;
        std::ptrdiff_t r = t % static_cast<std::ptrdiff_t>(m);
        if (r < 0) r += static_cast<std::ptrdiff_t>(m);
        if (static_cast<std::size_t>(r) >= n) continue;
        const double g = gout[static_cast<std::size_t>(r)];
        alo += w.rec_lo[j] * g;
        ahi += w.rec_hi[j] * g;
      }
      glo[i] = alo;
      ghi[i] = ahi;
    }
  } else {
    for (std::size_t i = 0; i < c; ++i) {
      double alo = 0.0, ahi = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(2 * i + 1 + j) - delay;
        if (t < 0 || t >= static_cast<std::ptrdiff_t>(n)) continue;
        const double g = gout[static_cast<std::size_t>(t)];
        alo += w.rec_lo[j] * g;
        ahi += w.rec_hi[j] * g;
      }
      glo[i] = alo;
      ghi[i] = ahi;
    }
  }
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Axis-wise transforms over GridTensors
// ----------------------------------------------------------------------------

/// Transform one axis; returns the (lo, hi) pair of band tensors.
inline std::pair<GridTensor, GridTensor> dwt_axis(const GridTensor& x,
                                                  const WaveletSpec& w,
                                                  std::size_t axis) {
  require(axis < x.rank(), "dwt_axis: axis out of range");
  require(x.role(axis) != AxisRole::kChannel, "dwt_axis: channel axes are not transformable");
  const std::size_t n = x.dim(axis);
  const std::size_t c = w.coeff_len(n);

  std::vector<std::size_t> out_dims = x.dims();
  out_dims[axis] = c;
  GridTensor lo(out_dims, x.roles(), x.extent());
  GridTensor hi(out_dims, x.roles(), x.extent());

  const auto sx = x.strides();
  const auto so = lo.strides();
  const std::size_t lines = x.element_count() / n;
  std::vector<double> line(n), blo(c), bhi(c);

  // Walk every 1-D line along `axis`: decompose the flat index of the line's
  // first element over the remaining axes.
  for (std::size_t l = 0; l < lines; ++l) {
    std::size_t rem = l, base_x = 0, base_o = 0;
    for (std::size_t a = x.rank(); a-- > 0;) {
      if (a == axis) continue;
      const std::size_t i = rem % x.dim(a);
      rem /= x.dim(a);
      base_x += i * sx[a];
      base_o += i * so[a];
    }
    for (std::size_t i = 0; i < n; ++i) line[i] = x[base_x + i * sx[axis]];
    detail::dwt_line(w, line.data(), n, blo.data(), bhi.data());
    for (std::size_t i = 0; i < c; ++i) {
      lo[base_o + i * so[axis]] = blo[i];
      hi[base_o + i * so[axis]] = bhi[i];
    }
  }
  return {std::move(lo), std::move(hi)};
}

/// Inverse of dwt_axis given the original axis length.
inline GridTensor idwt_axis(const GridTensor& lo, const GridTensor& hi,
                            const WaveletSpec& w, std::size_t axis, std::size_t n) {
  require(lo.same_shape(hi), "idwt_axis: band shape mismatch");
  require(axis < lo.rank(), "idwt_axis: axis out of range");
  require(lo.dim(axis) == w.coeff_len(n),
          "idwt_axis: band length inconsistent with source length");

  std::vector<std::size_t> out_dims = lo.dims();
  out_dims[axis] = n;
  GridTensor out(out_dims, lo.roles(), lo.extent());

  const std::size_t c = lo.dim(axis);
  const auto sb = lo.strides();
  const auto so = out.strides();
  const std::size_t lines = out.element_count() / n;
  std::vector<double> blo(c), bhi(c), line(n);

  for (std::size_t l = 0; l < lines; ++l) {
    std::size_t rem = l, base_b = 0, base_o = 0;
    for (std::size_t a = out.rank(); a-- > 0;) {
      if (a == axis) continue;
      const std::size_t i = rem % out.dim(a);
      rem /= out.dim(a);
      base_b += i * sb[a];
      base_o += i * so[a];
    }
    for (std::size_t i = 0; i < c; ++i) {
      blo[i] = lo[base_b + i * sb[axis]];
      bhi[i] = hi[base_b + i * sb[axis]];
    }
    detail::idwt_line(w, blo.data(), bhi.data(), n, line.data());
    for (std::size_t i = 0; i < n; ++i) out[base_o + i * so[axis]] = line[i];
  }
  return out;
}

// ----------------------------------------------------------------------------
// Subband sets (separable n-D transform, single level)
// ----------------------------------------------------------------------------

/// Bands are keyed by one letter per transformed axis, in ascending axis
/// order: L = lowpass, H = highpass. Order is binary counting (L before H),
/// e.g. 2-D: LL, LH, HL, HH. All bands share identical dims.
struct SubbandSet {
  WaveletSpec spec;
  std::vector<std::size_t> source_dims;
  std::vector<std::size_t> axes;  // transformed axes, ascending
  std::vector<std::pair<std::string, GridTensor>> bands;

  [[nodiscard]] std::size_t band_count() const { return bands.size(); }

  [[nodiscard]] const GridTensor& band(const std::string& key) const {
    for (const auto& [k, t] : bands)
      if (k == key) return t;
    throw ValidationError("subband set: no band '" + key + "'");
  }

  [[nodiscard]] GridTensor& band(const std::string& key) {
    for (auto& [k, t] : bands)
      if (k == key) return t;
    throw ValidationError("subband set: no band '" + key + "'");
  }
};

inline SubbandSet dwt_nd(const GridTensor& x, const WaveletSpec& w,
                         std::vector<std::size_t> axes) {
  require(!axes.empty(), "dwt_nd: need at least one axis");
  for (std::size_t i = 1; i < axes.size(); ++i)
    require(axes[i - 1] < axes[i], "dwt_nd: axes must be strictly ascending");
  SubbandSet s;
  s.spec = w;
  s.source_dims = x.dims();
  s.axes = axes;
  s.bands.emplace_back("", x);
  for (std::size_t axis : axes) {
    std::vector<std::pair<std::string, GridTensor>> next;
    next.reserve(s.bands.size() * 2);
    for (auto& [key, t] : s.bands) {
      auto [lo, hi] = dwt_axis(t, w, axis);
      next.emplace_back(key + "L", std::move(lo));
      next.emplace_back(key + "H", std::move(hi));
    }
    s.bands = std::move(next);
  }
  // Restore canonical binary-counting order (L=0, H=1 on the leading axis).
  std::sort(s.bands.begin(), s.bands.end(), [](const auto& a, const auto& b) {
    std::string ka, kb;
    for (char ch : a.first) ka += (ch == 'L' ? '0' : '1');
    for (char ch : b.first) kb += (ch == 'L' ? '0' : '1');
    return ka < kb;
  });
  return s;
}

inline GridTensor idwt_nd(const SubbandSet& s) {
  require(!s.bands.empty(), "idwt_nd: empty subband set");
  require(s.bands.size() == (std::size_t{1} << s.axes.size()),
          "idwt_nd: band count must be 2^#axes");
  std::vector<std::pair<std::string, GridTensor>> work = s.bands;
  // Merge axes in reverse order; keys shrink from the right.
  for (std::size_t ai = s.axes.size(); ai-- > 0;) {
    const std::size_t axis = s.axes[ai];
    const std::size_t n = s.source_dims[axis];
    std::vector<std::pair<std::string, GridTensor>> merged;
    for (auto& [key, t] : work) {
      if (key.back() != 'L') continue;
      const std::string prefix = key.substr(0, key.size() - 1);
      const GridTensor* hi = nullptr;
      for (auto& [k2, t2] : work)
        if (k2 == prefix + "H") hi = &t2;
      require(hi != nullptr, "idwt_nd: missing highpass partner for " + key);
      merged.emplace_back(prefix, idwt_axis(t, *hi, s.spec, axis, n));
    }
    work = std::move(merged);
  }
  require(work.size() == 1, "idwt_nd: reconstruction did not collapse to one tensor");
  return std::move(work.front().second);
}

/// Adjoint of idwt_nd as a linear map from bands to signal: given a gradient
/// w.r.t. the reconstructed signal, produce gradients w.r.t. every band.
/// Structurally a forward walk with the adjoint line kernel.
inline SubbandSet idwt_nd_adjoint(const GridTensor& gout, const SubbandSet& like) {
  require(gout.dims() == like.source_dims, "idwt_nd_adjoint: signal shape mismatch");
  SubbandSet g;
  g.spec = like.spec;
  g.source_dims = like.source_dims;
  g.axes = like.axes;
  g.bands.emplace_back("", gout);
  for (std::size_t axis : like.axes) {
    std::vector<std::pair<std::string, GridTensor>> next;
    next.reserve(g.bands.size() * 2);
    for (auto& [key, t] : g.bands) {
      const std::size_t n = t.dim(axis);
      const std::size_t c = like.spec.coeff_len(n);
      std::vector<std::size_t> out_dims = t.dims();
      out_dims[axis] = c;
      GridTensor glo(out_dims, t.roles(), t.extent());
      GridTensor ghi(out_dims, t.roles(), t.extent());
      const auto sx = t.strides();
      const auto so = glo.strides();
      const std::size_t lines = t.element_count() / n;
      std::vector<double> line(n), blo(c), bhi(c);
      for (std::size_t l = 0; l < lines; ++l) {
        std::size_t rem = l, base_x = 0, base_o = 0;
        for (std::size_t a = t.rank(); a-- > 0;) {
          if (a == axis) continue;
          const std::size_t i = rem % t.dim(a);
          rem /= t.dim(a);
          base_x += i * sx[a];
          base_o += i * so[a];
        }
        for (std::size_t i = 0; i < n; ++i) line[i] = t[base_x + i * sx[axis]];
        detail::idwt_line_adjoint(like.spec, line.data(), n, blo.data(), bhi.data());
        for (std::size_t i = 0; i < c; ++i) {
          glo[base_o + i * so[axis]] = blo[i];
          ghi[base_o + i * so[axis]] = bhi[i];
        }
      }
      next.emplace_back(key + "L", std::move(glo));
      next.emplace_back(key + "H", std::move(ghi));
    }
    g.bands = std::move(next);
  }
  std::sort(g.bands.begin(), g.bands.end(), [](const auto& a, const auto& b) {
    std::string ka, kb;
    for (char ch : a.first) ka += (ch == 'L' ? '0' : '1');
    for (char ch : b.first) kb += (ch == 'L' ? '0' : '1');
    return ka < kb;
  });
  return g;
}

// ----------------------------------------------------------------------------
// Registry and serialization
// ----------------------------------------------------------------------------

inline WaveletSpec WaveletSpec::make(const std::string& name, BoundaryMode mode) {
  constexpr double kSqrt2 = 1.41421356237309504880168872420969808;
  WaveletSpec w;
  w.name = name;
  w.mode = mode;
  if (name == "bior1.3") {
    w.dec_lo = detail::scaled({-1, 1, 8, 8, 1, -1}, kSqrt2 / 16.0);
    w.rec_lo = detail::scaled({0, 0, 8, 8, 0, 0}, kSqrt2 / 16.0);
    detail::complete_highpass(w);
  } else if (name == "bior2.4") {
    w.dec_lo = detail::scaled({0, 3, -6, -16, 38, 90, 38, -16, -6, 3}, kSqrt2 / 128.0);
    w.rec_lo = detail::scaled({0, 0, 0, 32, 64, 32, 0, 0, 0, 0}, kSqrt2 / 128.0);
    detail::complete_highpass(w);
  } else if (name == "db4") {
    w.dec_lo = {-0.010597401784997278, 0.032883011666982945, 0.030841381835986965,
                -0.18703481171888114,  -0.02798376941698385, 0.6308807679295904,
                0.7148465705525415,    0.23037781330885523};
    w.rec_lo.assign(w.dec_lo.rbegin(), w.dec_lo.rend());
    detail::complete_highpass(w);
  } else if (name == "sym4") {
    w.dec_lo = {-0.07576571478927333,  -0.02963552764599851, 0.49761866763201545,
                0.8037387518059161,    0.29785779560527736,  -0.09921954357684722,
                -0.012603967262037833, 0.0322231006040427};
    w.rec_lo.assign(w.dec_lo.rbegin(), w.dec_lo.rend());
    detail::complete_highpass(w);
  } else {
    throw ValidationError("unknown wavelet family: " + name);
  }

  // Fail-closed construction: prove perfect reconstruction on a fixed probe.
  {
    std::vector<double> probe(16);
    for (std::size_t i = 0; i < probe.size(); ++i)
      probe[i] = std::sin(0.7 * static_cast<double>(i) + 0.3) +
                 0.25 * static_cast<double>(i % 5);
    const std::size_t c = w.coeff_len(probe.size());
    std::vector<double> lo(c), hi(c), back(probe.size());
    detail::dwt_line(w, probe.data(), probe.size(), lo.data(), hi.data());
    detail::idwt_line(w, lo.data(), hi.data(), probe.size(), back.data());
    double err = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i)
      err = std::max(err, std::abs(back[i] - probe[i]));
    if (err > 1e-10)
      throw NumericalError("wavelet '" + name +
                           "': perfect reconstruction self-check failed");
  }
  return w;
}

inline TensorBundle subbands_to_bundle(const SubbandSet& s) {
  TensorBundle b;
  b.header = {{"kind", "subband_set"},
              {"wavelet", s.spec.name},
              {"mode", boundary_mode_name(s.spec.mode)},
              {"source_dims", s.source_dims},
              {"axes", s.axes}};
  for (const auto& [key, t] : s.bands) b.put(key, t);
  return b;
}

inline SubbandSet bundle_to_subbands(const TensorBundle& b) {
  if (!b.header.contains("kind") || b.header["kind"] != "subband_set")
    throw IoError("bundle does not hold a subband set");
  SubbandSet s;
  s.spec = WaveletSpec::make(b.header.at("wavelet").get<std::string>(),
                             boundary_mode_from_name(b.header.at("mode").get<std::string>()));
  s.source_dims = b.header.at("source_dims").get<std::vector<std::size_t>>();
  s.axes = b.header.at("axes").get<std::vector<std::size_t>>();
  s.bands = b.entries;
  require(s.bands.size() == (std::size_t{1} << s.axes.size()),
          "subband bundle: band count must be 2^#axes");
  return s;
}

}  // namespace wavediff

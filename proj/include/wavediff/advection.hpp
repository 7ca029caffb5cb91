#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"
#include "wavediff/rng.hpp"

namespace wavediff {

// ============================================================================
// Linear advection u_t + c u_x = 0 on the periodic unit interval, solved
// exactly as transport u(t, x) = u0(x - c t).
//
// The periodic grid carries nx cells at x_j = j/nx (no duplicated endpoint).
// Each stored frame is the trigonometric interpolant of u0 evaluated at the
// shifted nodes, which is exact for band-limited data and reduces to a
// circular shift whenever c*t is a whole number of cells. Sums are direct
// O(nx^2): exactness beats speed at these sizes.
// ============================================================================

struct AdvectionConfig {
  double speed = 1.0;
  double horizon = 8.0;
  std::size_t store_nx = 120;
  std::size_t store_nt = 80;  // stored intervals; state rows = store_nt+1

  void validate() const {
    require(horizon > 0.0, "advection: horizon must be positive");
    require(store_nx >= 4 && store_nt >= 1, "advection: storage grid too small");
  }
};

/// Gaussian bumps wrapped onto the periodic domain (images at x-1 and x+1
/// keep the profile smooth across the seam).
struct PeriodicICSpec {
  std::array<double, 2> amp{}, center{}, width{};

  static PeriodicICSpec sample(Rng& rng) {
    PeriodicICSpec s;
    s.amp[0] = rng.uniform(0.0, 2.0);
    s.amp[1] = rng.uniform(-2.0, 0.0);
    s.center[0] = rng.uniform(0.2, 0.4);
    s.center[1] = rng.uniform(0.6, 0.8);
    s.width[0] = rng.uniform(0.05, 0.15);
    s.width[1] = rng.uniform(0.05, 0.15);
    return s;
  }

  [[nodiscard]] double operator()(double x) const {
    double v = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      for (int image = -1; image <= 1; ++image) {
        const double z = (x + static_cast<double>(image) - center[i]) / width[i];
        v += amp[i] * std::exp(-0.5 * z * z);
      }
    }
    return v;
  }

  [[nodiscard]] GridTensor on_grid(std::size_t nx) const {
    GridTensor u0({nx}, {AxisRole::kSpace});
    for (std::size_t j = 0; j < nx; ++j)
      u0[j] = (*this)(static_cast<double>(j) / static_cast<double>(nx));
    return u0;
  }
};

/// Exact transport of u0 across store_nt stamps; returns the
/// (store_nt+1) x store_nx trajectory including the t=0 frame.
inline GridTensor solve_advection(const AdvectionConfig& cfg, const GridTensor& u0) {
  cfg.validate();
  require(u0.rank() == 1 && u0.dim(0) == cfg.store_nx,
          "solve_advection: u0 must carry store_nx samples");
  u0.require_finite("solve_advection: u0");

  const std::size_t n = cfg.store_nx;
  const double two_pi = 6.283185307179586476925286766559;

  // Real trigonometric coefficients: u0(x) = sum_m A_m cos(2pi m x) + B_m sin(2pi m x).
  const std::size_t mmax = n / 2;
  std::vector<double> A(mmax + 1, 0.0), B(mmax + 1, 0.0);
  for (std::size_t m = 0; m <= mmax; ++m) {
    double ca = 0.0, sa = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double phase = two_pi * static_cast<double>(m) * static_cast<double>(j) /
                           static_cast<double>(n);
      ca += u0[j] * std::cos(phase);
      sa += u0[j] * std::sin(phase);
    }
    const bool shared = m == 0 || (n % 2 == 0 && m == mmax);  // self-conjugate bins
    const double scale = (shared ? 1.0 : 2.0) / static_cast<double>(n);
    A[m] = ca * scale;
    B[m] = sa * scale;
  }

  GridTensor out({cfg.store_nt + 1, n}, {AxisRole::kTime, AxisRole::kSpace});
  for (std::size_t i = 0; i <= cfg.store_nt; ++i) {
    const double t = cfg.horizon * static_cast<double>(i) / static_cast<double>(cfg.store_nt);
    const double shift = cfg.speed * t;
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(n) - shift;
      double v = 0.0;
      for (std::size_t m = 0; m <= mmax; ++m) {
        const double phase = two_pi * static_cast<double>(m) * x;
        v += A[m] * std::cos(phase) + B[m] * std::sin(phase);
      }
      out[i * n + j] = v;
    }
  }
  out.require_finite("solve_advection: trajectory");
  return out;
}

}  // namespace wavediff

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"
#include "wavediff/rng.hpp"

namespace wavediff {

// ============================================================================
// Viscous Burgers ground-truth solver on [0,1] with homogeneous Dirichlet
// boundaries:  u_t + u u_x = nu u_xx + f(t, x).
//
// Storage convention: the spatial axis carries store_nx endpoint-inclusive
// nodes x_j = j/(store_nx-1), so both Dirichlet boundary nodes are stored and
// exactly zero in every frame. The solver integrates on a refined grid that
// splits each stored interval into fine_nx/store_nx cells; stored frames are
// strided restrictions of the fine solution (they land on fine nodes exactly).
//
// Time stepping is IMEX: the advection term uses an explicit Godunov flux
// (shock-robust, TVD under the advective CFL |u| dt/dx <= 1, which is checked
// every step), while the stiff diffusion term is integrated implicitly with
// backward Euler so the fine grid does not constrain dt through nu dt/dx^2.
// The implicit solve is a constant tridiagonal system, prefactored once.
// ============================================================================

struct BurgersConfig {
  double nu = 0.01;
  double horizon = 8.0;       // final time T
  std::size_t store_nx = 120; // stored spatial nodes (endpoint-inclusive)
  std::size_t store_nt = 80;  // stored time intervals; state rows = store_nt+1
  std::size_t fine_nx = 1920; // spatial cell budget; per-interval refinement = fine_nx/store_nx
  std::size_t fine_nt = 76800;

  void validate() const {
    require(nu > 0.0 && horizon > 0.0, "burgers: nu and horizon must be positive");
    require(store_nx >= 3 && store_nt >= 1, "burgers: storage grid too small");
    require(fine_nx % store_nx == 0, "burgers: fine_nx must be a multiple of store_nx");
    require(fine_nt % store_nt == 0, "burgers: fine_nt must be a multiple of store_nt");
  }

  [[nodiscard]] std::size_t space_refine() const { return fine_nx / store_nx; }
  [[nodiscard]] std::size_t time_refine() const { return fine_nt / store_nt; }
  /// Fine solver nodes: each of the store_nx-1 stored intervals is split
  /// space_refine() ways, keeping stored nodes on the fine grid.
  [[nodiscard]] std::size_t fine_nodes() const {
    return (store_nx - 1) * space_refine() + 1;
  }
  [[nodiscard]] double fine_dx() const {
    return 1.0 / static_cast<double>(fine_nodes() - 1);
  }
  [[nodiscard]] double fine_dt() const {
    return horizon / static_cast<double>(fine_nt);
  }

  /// Same physics on a storage grid refined by (factor_t, factor_x), keeping
  /// the per-interval refinement ratios.
  [[nodiscard]] BurgersConfig refined(std::size_t factor_t, std::size_t factor_x) const {
    BurgersConfig c = *this;
    c.store_nt *= factor_t;
    c.fine_nt *= factor_t;
    c.store_nx *= factor_x;
    c.fine_nx *= factor_x;
    return c;
  }

  /// Reduced fine grid for bulk desk-scale generation; same storage layout.
  static BurgersConfig desk() {
    BurgersConfig c;
    c.fine_nx = 480;   // 4 fine cells per stored interval
    c.fine_nt = 19200; // 240 fine steps per stored stamp
    return c;
  }
};

// ----------------------------------------------------------------------------
// Initial-condition and forcing distributions
// ----------------------------------------------------------------------------

/// Two Gaussian bumps, one positive on the left, one negative on the right.
struct ICSpec {
  std::array<double, 2> amp{}, center{}, width{};

  static ICSpec sample(Rng& rng) {
    ICSpec s;
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
      const double z = (x - center[i]) / width[i];
      v += amp[i] * std::exp(-0.5 * z * z);
    }
    return v;
  }

  /// Evaluate on the endpoint-inclusive stored grid with Dirichlet nodes
  /// pinned to zero.
  [[nodiscard]] GridTensor on_grid(std::size_t nx) const {
    GridTensor u0({nx}, {AxisRole::kSpace});
    for (std::size_t j = 1; j + 1 < nx; ++j)
      u0[j] = (*this)(static_cast<double>(j) / static_cast<double>(nx - 1));
    u0[0] = 0.0;
    u0[nx - 1] = 0.0;
    return u0;
  }
};

/// Eight space-time Gaussian bumps on the unit square (time normalized by T).
/// All amplitudes beyond the first are zeroed with probability 1/2.
struct ForceSpec {
  static constexpr std::size_t kTerms = 8;
  std::array<double, kTerms> amp{}, t_center{}, x_center{}, t_width{}, x_width{};

  static ForceSpec sample(Rng& rng) {
    ForceSpec s;
    for (std::size_t i = 0; i < kTerms; ++i) {
      s.t_center[i] = rng.uniform(0.0, 1.0);
      s.x_center[i] = rng.uniform(0.0, 1.0);
      s.t_width[i] = rng.uniform(0.1, 0.4);
      s.x_width[i] = rng.uniform(0.1, 0.4);
      const bool zero_out = i > 0 && rng.bernoulli(0.5);
      const double a = rng.uniform(-1.5, 1.5);
      s.amp[i] = zero_out ? 0.0 : a;
    }
    return s;
  }

  /// tau = t / T in [0,1].
  [[nodiscard]] double operator()(double tau, double x) const {
    double v = 0.0;
    for (std::size_t i = 0; i < kTerms; ++i) {
      if (amp[i] == 0.0) continue;
      const double zt = (tau - t_center[i]) / t_width[i];
      const double zx = (x - x_center[i]) / x_width[i];
      v += amp[i] * std::exp(-0.5 * (zt * zt + zx * zx));
    }
    return v;
  }

  /// Stamp rows at the left endpoints tau_i = i/nt (the force is held
  /// constant over each stored interval); columns on the endpoint grid.
  [[nodiscard]] GridTensor on_grid(std::size_t nt, std::size_t nx) const {
    GridTensor f({nt, nx}, {AxisRole::kTime, AxisRole::kSpace});
    for (std::size_t i = 0; i < nt; ++i) {
      const double tau = static_cast<double>(i) / static_cast<double>(nt);
      for (std::size_t j = 0; j < nx; ++j)
        f[i * nx + j] = (*this)(tau, static_cast<double>(j) / static_cast<double>(nx - 1));
    }
    return f;
  }
};

// ----------------------------------------------------------------------------
// Solver
// ----------------------------------------------------------------------------

namespace detail {

/// Godunov numerical flux for the convex flux u^2/2.
inline double godunov_flux(double ul, double ur) {
  if (ul <= ur) {
    if (ul > 0.0) return 0.5 * ul * ul;
    if (ur < 0.0) return 0.5 * ur * ur;
    return 0.0;
  }
  const double fl = 0.5 * ul * ul, fr = 0.5 * ur * ur;
  return fl > fr ? fl : fr;
}

/// Lift stored-node samples onto the fine grid by linear interpolation
/// (exact at stored nodes).
inline void lift_linear(const double* coarse, std::size_t nc, std::size_t refine,
                        double* fine) {
  for (std::size_t j = 0; j + 1 < nc; ++j) {
    const double a = coarse[j], b = coarse[j + 1];
    for (std::size_t q = 0; q < refine; ++q) {
      const double frac = static_cast<double>(q) / static_cast<double>(refine);
      fine[j * refine + q] = a + (b - a) * frac;
    }
  }
  fine[(nc - 1) * refine] = coarse[nc - 1];
}

}  // namespace detail

/// Integrate the trajectory for a stored initial state and a stored
/// piecewise-constant-in-time force; returns the (store_nt+1) x store_nx
/// stored trajectory including the t=0 frame.
inline GridTensor solve_burgers(const BurgersConfig& cfg, const GridTensor& u0,
                                const GridTensor& force) {
  cfg.validate();
  require(u0.rank() == 1 && u0.dim(0) == cfg.store_nx,
          "solve_burgers: u0 must carry store_nx samples");
  require(force.rank() == 2 && force.dim(0) == cfg.store_nt &&
              force.dim(1) == cfg.store_nx,
          "solve_burgers: force must be store_nt x store_nx");
  u0.require_finite("solve_burgers: u0");
  force.require_finite("solve_burgers: force");

  const std::size_t nf = cfg.fine_nodes();
  const std::size_t refine = cfg.space_refine();
  const std::size_t per_stamp = cfg.time_refine();
  const double h = cfg.fine_dx();
  const double dt = cfg.fine_dt();
  const double lam = cfg.nu * dt / (h * h);

  // Prefactored Thomas coefficients for (I - nu dt D2) on the interior.
  const std::size_t ni = nf - 2;
  const double diag = 1.0 + 2.0 * lam, off = -lam;
  std::vector<double> cp(ni), inv_den(ni);
  {
    double den = diag;
    inv_den[0] = 1.0 / den;
    cp[0] = off * inv_den[0];
    for (std::size_t i = 1; i < ni; ++i) {
      den = diag - off * cp[i - 1];
      inv_den[i] = 1.0 / den;
      cp[i] = off * inv_den[i];
    }
  }

  std::vector<double> u(nf, 0.0), rhs(ni), flux(nf - 1), f_fine(nf, 0.0);
  detail::lift_linear(u0.data().data(), cfg.store_nx, refine, u.data());
  u[0] = 0.0;
  u[nf - 1] = 0.0;

  GridTensor out({cfg.store_nt + 1, cfg.store_nx}, {AxisRole::kTime, AxisRole::kSpace});
  auto store_row = [&](std::size_t row) {
    for (std::size_t j = 0; j < cfg.store_nx; ++j)
      out[row * cfg.store_nx + j] = u[j * refine];
  };
  store_row(0);

  std::size_t cached_stamp = cfg.store_nt;  // invalid: force reload on first step
  const double cfl_limit = h / dt;          // CFL <= 1  <=>  max|u| <= h/dt
  for (std::size_t n = 0; n < cfg.fine_nt; ++n) {
    const std::size_t stamp = n / per_stamp;
    if (stamp != cached_stamp) {
      detail::lift_linear(force.data().data() + stamp * cfg.store_nx, cfg.store_nx,
                          refine, f_fine.data());
      cached_stamp = stamp;
    }

    double vmax = 0.0;
    for (std::size_t k = 0; k + 1 < nf; ++k) {
      const double a = std::abs(u[k]);
      if (a > vmax) vmax = a;
      flux[k] = detail::godunov_flux(u[k], u[k + 1]);
    }
    if (!(vmax < 1e6))
      throw NumericalError("solve_burgers: solution blow-up at step " + std::to_string(n));
    if (!(vmax <= cfl_limit))
      throw NumericalError("solve_burgers: advective CFL violated at step " +
                           std::to_string(n) + " (max|u| = " + std::to_string(vmax) + ")");

    // Explicit advection + forcing into the implicit-diffusion RHS.
    const double r = dt / h;
    for (std::size_t k = 1; k + 1 < nf; ++k)
      rhs[k - 1] = u[k] - r * (flux[k] - flux[k - 1]) + dt * f_fine[k];

    // Thomas substitution (boundaries stay 0, so no boundary coupling terms).
    rhs[0] *= inv_den[0];
    for (std::size_t i = 1; i < ni; ++i)
      rhs[i] = (rhs[i] - off * rhs[i - 1]) * inv_den[i];
    for (std::size_t i = ni - 1; i-- > 0;) rhs[i] -= cp[i] * rhs[i + 1];
    for (std::size_t k = 1; k + 1 < nf; ++k) u[k] = rhs[k - 1];

    if ((n + 1) % per_stamp == 0) store_row((n + 1) / per_stamp);
  }
  out.require_finite("solve_burgers: stored trajectory");
  return out;
}

// ----------------------------------------------------------------------------
// Control objective
// ----------------------------------------------------------------------------

/// J split into its two quadratic terms; `energy` is already alpha-weighted.
struct ControlScore {
  double terminal = 0.0;
  double energy = 0.0;
  double total = 0.0;
};

/// J(f) = sum_x |u(T,x) - u*(x)|^2 dx + alpha sum_{t,x} |f|^2 dt dx with cell
/// measures dx = 1/store_nx and dt = T/store_nt of the input's own grid;
/// u(T,.) comes from the ground-truth solver. Inputs may sit on any integer
/// refinement of the base storage grid.
inline ControlScore eval_control_objective(const GridTensor& f, const GridTensor& u0,
                                           const GridTensor& u_star, double alpha,
                                           const BurgersConfig& base = {}) {
  require(f.rank() == 2, "control objective: f must be rank 2");
  require(u0.rank() == 1 && u_star.rank() == 1,
          "control objective: u0 and u_star must be rank 1");
  const std::size_t nt = f.dim(0), nx = f.dim(1);
  require(u0.dim(0) == nx && u_star.dim(0) == nx,
          "control objective: state vectors must match f's spatial grid");
  require(nt % base.store_nt == 0 && nx % base.store_nx == 0,
          "control objective: input grid must be an integer refinement of the base grid");

  const BurgersConfig cfg = base.refined(nt / base.store_nt, nx / base.store_nx);
  const GridTensor u = solve_burgers(cfg, u0, f);

  const double dx = 1.0 / static_cast<double>(nx);
  const double dt = cfg.horizon / static_cast<double>(nt);
  ControlScore s;
  const std::size_t last = cfg.store_nt * nx;
  for (std::size_t j = 0; j < nx; ++j) {
    const double d = u[last + j] - u_star[j];
    s.terminal += d * d * dx;
  }
  for (std::size_t i = 0; i < f.element_count(); ++i) s.energy += f[i] * f[i];
  s.energy *= alpha * dt * dx;
  s.total = s.terminal + s.energy;
  return s;
}

}  // namespace wavediff

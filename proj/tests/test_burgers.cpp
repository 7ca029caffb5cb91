#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "test_support.hpp"
#include "wavediff/advection.hpp"
#include "wavediff/burgers.hpp"
#include "wavediff/dataset.hpp"
#include "wavediff/metrics.hpp"
#include "wavediff/resample.hpp"

using namespace wavediff;

namespace {

double total_variation(const GridTensor& u, std::size_t row) {
  const std::size_t nx = u.dim(1);
  double tv = 0.0;
  for (std::size_t j = 0; j + 1 < nx; ++j)
    tv += std::abs(u[row * nx + j + 1] - u[row * nx + j]);
  return tv;
}

double row_energy(const GridTensor& u, std::size_t row) {
  const std::size_t nx = u.dim(1);
  double e = 0.0;
  for (std::size_t j = 0; j < nx; ++j) e += u[row * nx + j] * u[row * nx + j];
  return e / static_cast<double>(nx);
}

GridTensor zero_force(const BurgersConfig& cfg) {
  return GridTensor({cfg.store_nt, cfg.store_nx}, {AxisRole::kTime, AxisRole::kSpace});
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("config validation rejects misaligned grids", "[burgers]") {
  BurgersConfig cfg;
  cfg.fine_nx = 1900;  // not a multiple of 120
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg = BurgersConfig{};
  cfg.fine_nt = 76801;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  CHECK_NOTHROW(BurgersConfig{}.validate());
  CHECK_NOTHROW(BurgersConfig::desk().validate());
  CHECK(BurgersConfig{}.fine_nodes() == 1905);
  CHECK(BurgersConfig::desk().fine_nodes() == 477);
}

TEST_CASE("zero state with zero force stays zero", "[burgers]") {
  const auto cfg = BurgersConfig::desk();
  GridTensor u0({cfg.store_nx}, {AxisRole::kSpace});
  const auto u = solve_burgers(cfg, u0, zero_force(cfg));
  REQUIRE(u.dims() == std::vector<std::size_t>{81, 120});
  for (std::size_t i = 0; i < u.element_count(); ++i) CHECK(u[i] == 0.0);
}

TEST_CASE("stored frames keep Dirichlet endpoints exactly zero", "[burgers]") {
  const auto cfg = BurgersConfig::desk();
  Rng rng(5);
  const auto u0 = ICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto f = ForceSpec::sample(rng).on_grid(cfg.store_nt, cfg.store_nx);
  const auto u = solve_burgers(cfg, u0, f);
  CHECK(u.role(0) == AxisRole::kTime);
  CHECK(u.role(1) == AxisRole::kSpace);
  for (std::size_t i = 0; i <= cfg.store_nt; ++i) {
    CHECK(u[i * cfg.store_nx] == 0.0);
    CHECK(u[i * cfg.store_nx + cfg.store_nx - 1] == 0.0);
  }
}

TEST_CASE("unforced evolution is TV- and energy-dissipative", "[burgers]") {
  const auto cfg = BurgersConfig::desk();
  GridTensor u0({cfg.store_nx}, {AxisRole::kSpace});
  for (std::size_t j = 1; j + 1 < cfg.store_nx; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(cfg.store_nx - 1);
    u0[j] = 1.5 * std::exp(-0.5 * (x - 0.35) * (x - 0.35) / (0.08 * 0.08));
  }
  const auto u = solve_burgers(cfg, u0, zero_force(cfg));
  for (std::size_t i = 0; i < cfg.store_nt; ++i) {
    CHECK(total_variation(u, i + 1) <= total_variation(u, i) + 1e-8);
    CHECK(row_energy(u, i + 1) <= row_energy(u, i) + 1e-8);
  }
}

TEST_CASE("solver self-converges under fine-grid refinement", "[burgers]") {
  BurgersConfig cfg;  // full-resolution integration grid
  Rng rng(11);
  const auto u0 = ICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto f = ForceSpec::sample(rng).on_grid(cfg.store_nt, cfg.store_nx);
  const auto coarse = solve_burgers(cfg, u0, f);

  BurgersConfig cfg2 = cfg;
  cfg2.fine_nx *= 2;
  cfg2.fine_nt *= 2;
  const auto fine = solve_burgers(cfg2, u0, f);

  CHECK(compute_metrics(coarse, fine).rel_l2 <= 1e-3);
}

TEST_CASE("CFL violations and bad inputs are rejected", "[burgers]") {
  const auto cfg = BurgersConfig::desk();
  GridTensor u0({cfg.store_nx}, {AxisRole::kSpace});
  for (std::size_t j = 1; j + 1 < cfg.store_nx; ++j) u0[j] = 50.0;  // limit is ~5
  CHECK_THROWS_AS(solve_burgers(cfg, u0, zero_force(cfg)), NumericalError);

  GridTensor short_u0({cfg.store_nx - 1}, {AxisRole::kSpace});
  CHECK_THROWS_AS(solve_burgers(cfg, short_u0, zero_force(cfg)), ValidationError);
  GridTensor bad_f({cfg.store_nt + 1, cfg.store_nx}, {AxisRole::kTime, AxisRole::kSpace});
  GridTensor ok_u0({cfg.store_nx}, {AxisRole::kSpace});
  CHECK_THROWS_AS(solve_burgers(cfg, ok_u0, bad_f), ValidationError);
}

TEST_CASE("sampled parameters respect their supports", "[burgers]") {
  Rng rng(99);
  std::size_t zeros = 0, draws = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto ic = ICSpec::sample(rng);
    CHECK((ic.amp[0] >= 0.0 && ic.amp[0] < 2.0));
    CHECK((ic.amp[1] >= -2.0 && ic.amp[1] < 0.0));
    CHECK((ic.center[0] >= 0.2 && ic.center[0] < 0.4));
    CHECK((ic.center[1] >= 0.6 && ic.center[1] < 0.8));
    for (double w : ic.width) CHECK((w >= 0.05 && w < 0.15));

    const auto fs = ForceSpec::sample(rng);
    for (std::size_t i = 0; i < ForceSpec::kTerms; ++i) {
      CHECK((fs.t_center[i] >= 0.0 && fs.t_center[i] < 1.0));
      CHECK((fs.x_center[i] >= 0.0 && fs.x_center[i] < 1.0));
      CHECK((fs.t_width[i] >= 0.1 && fs.t_width[i] < 0.4));
      CHECK((fs.x_width[i] >= 0.1 && fs.x_width[i] < 0.4));
      CHECK((fs.amp[i] >= -1.5 && fs.amp[i] < 1.5));
      if (i > 0) {
        ++draws;
        if (fs.amp[i] == 0.0) ++zeros;
      }
    }
  }
  const double zero_frac = static_cast<double>(zeros) / static_cast<double>(draws);
  CHECK(zero_frac == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("zero speed transports nothing", "[advection]") {
  AdvectionConfig cfg;
  cfg.speed = 0.0;
  Rng rng(3);
  const auto u0 = PeriodicICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto u = solve_advection(cfg, u0);
  REQUIRE(u.dims() == std::vector<std::size_t>{81, 120});
  for (std::size_t i = 0; i <= cfg.store_nt; ++i)
    for (std::size_t j = 0; j < cfg.store_nx; ++j)
      CHECK(u[i * cfg.store_nx + j] == Catch::Approx(u0[j]).margin(1e-10));
}

TEST_CASE("full-period transport returns the initial state", "[advection]") {
  AdvectionConfig cfg;  // speed 1, horizon 8: stamp 10 is one full period
  Rng rng(4);
  const auto u0 = PeriodicICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto u = solve_advection(cfg, u0);
  for (std::size_t period = 1; period <= 8; ++period) {
    const std::size_t row = 10 * period;
    for (std::size_t j = 0; j < cfg.store_nx; ++j)
      CHECK(std::abs(u[row * cfg.store_nx + j] - u0[j]) < 1e-10);
  }
}

TEST_CASE("sine waves transport against the closed form", "[advection]") {
  AdvectionConfig cfg;
  cfg.speed = 0.37;  // deliberately off-grid shifts
  const double two_pi = 6.283185307179586476925286766559;
  GridTensor u0({cfg.store_nx}, {AxisRole::kSpace});
  for (std::size_t j = 0; j < cfg.store_nx; ++j)
    u0[j] = std::sin(two_pi * static_cast<double>(j) / static_cast<double>(cfg.store_nx));
  const auto u = solve_advection(cfg, u0);
  for (std::size_t i = 0; i <= cfg.store_nt; ++i) {
    const double t = cfg.horizon * static_cast<double>(i) / static_cast<double>(cfg.store_nt);
    for (std::size_t j = 0; j < cfg.store_nx; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(cfg.store_nx);
      const double expect = std::sin(two_pi * (x - cfg.speed * t));
      CHECK(std::abs(u[i * cfg.store_nx + j] - expect) <= 1e-8);
    }
  }
}

TEST_CASE("transport preserves the discrete norm", "[advection]") {
  AdvectionConfig cfg;
  Rng rng(6);
  const auto u0 = PeriodicICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto u = solve_advection(cfg, u0);
  const double e0 = row_energy(u, 0);
  for (std::size_t i = 1; i <= cfg.store_nt; ++i)
    CHECK(row_energy(u, i) == Catch::Approx(e0).margin(1e-8));
}

TEST_CASE("generation is byte-deterministic and manifests round-trip", "[dataset]") {
  GenConfig gen;
  gen.system = PdeSystem::kBurgers;
  gen.count = 2;
  gen.seed = 42;
  gen.burgers = BurgersConfig::desk();

  testsupport::TempDir a("dataset_a"), b("dataset_b");
  const auto ma = gen_dataset(gen, a.path());
  const auto mb = gen_dataset(gen, b.path());
  REQUIRE(ma.size() == 2);

  CHECK(file_bytes(a.path() / "manifest.csv") == file_bytes(b.path() / "manifest.csv"));
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(file_bytes(a.path() / ma.entries[i].u_path) ==
          file_bytes(b.path() / mb.entries[i].u_path));
    CHECK(file_bytes(a.path() / ma.entries[i].f_path) ==
          file_bytes(b.path() / mb.entries[i].f_path));
  }

  const auto loaded = load_manifest(a.path());
  REQUIRE(loaded.size() == ma.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(loaded.entries[i].sample_id == ma.entries[i].sample_id);
    CHECK(loaded.entries[i].seed == ma.entries[i].seed);
    const auto t = load_trajectory(a.path(), loaded.entries[i]);
    CHECK(t.u.dims() == std::vector<std::size_t>{81, 120});
    CHECK(t.f.dims() == std::vector<std::size_t>{80, 120});

    // Any row regenerates its trajectory from the recorded seed alone.
    const auto re = gen_trajectory(gen, loaded.entries[i].seed);
    CHECK(compute_metrics(re.u, t.u).linf == 0.0);
    CHECK(compute_metrics(re.f, t.f).linf == 0.0);
  }
}

TEST_CASE("advection datasets reuse the trajectory layout", "[dataset]") {
  GenConfig gen;
  gen.system = PdeSystem::kAdvection;
  gen.count = 1;
  gen.seed = 7;
  testsupport::TempDir dir("dataset_adv");
  const auto m = gen_dataset(gen, dir.path());
  const auto t = load_trajectory(dir.path(), m.entries[0]);
  CHECK(t.u.dims() == std::vector<std::size_t>{81, 120});
  for (std::size_t i = 0; i < t.f.element_count(); ++i) CHECK(t.f[i] == 0.0);
}

TEST_CASE("objective vanishes when the target is the unforced rollout", "[objective]") {
  const auto cfg = BurgersConfig::desk();
  Rng rng(8);
  const auto u0 = ICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto f = zero_force(cfg);
  const auto u = solve_burgers(cfg, u0, f);
  GridTensor u_star({cfg.store_nx}, {AxisRole::kSpace});
  for (std::size_t j = 0; j < cfg.store_nx; ++j)
    u_star[j] = u[cfg.store_nt * cfg.store_nx + j];
  const auto s = eval_control_objective(f, u0, u_star, 2e-5, cfg);
  CHECK(s.total == 0.0);
}

TEST_CASE("objective terms scale as quadratic forms", "[objective]") {
  const auto cfg = BurgersConfig::desk();
  Rng rng(9);
  const auto u0 = ICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto fs = ForceSpec::sample(rng);
  const auto f = fs.on_grid(cfg.store_nt, cfg.store_nx);
  GridTensor f2 = f;
  for (std::size_t i = 0; i < f2.element_count(); ++i) f2[i] *= 2.0;
  GridTensor u_star({cfg.store_nx}, {AxisRole::kSpace});

  const auto s_alpha0 = eval_control_objective(f, u0, u_star, 0.0, cfg);
  CHECK(s_alpha0.energy == 0.0);
  CHECK(s_alpha0.total == s_alpha0.terminal);

  const double alpha = 2e-5;
  const auto s1 = eval_control_objective(f, u0, u_star, alpha, cfg);
  const auto s2 = eval_control_objective(f2, u0, u_star, alpha, cfg);
  CHECK(s2.energy == Catch::Approx(4.0 * s1.energy).epsilon(1e-12));
  CHECK(s1.terminal == Catch::Approx(s_alpha0.terminal).epsilon(1e-12));
}

TEST_CASE("objective quadrature matches a naive reimplementation", "[objective]") {
  const auto cfg = BurgersConfig::desk();
  Rng rng(10);
  const auto u0 = ICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto f = ForceSpec::sample(rng).on_grid(cfg.store_nt, cfg.store_nx);
  GridTensor u_star({cfg.store_nx}, {AxisRole::kSpace});
  for (std::size_t j = 0; j < cfg.store_nx; ++j)
    u_star[j] = 0.3 * std::sin(6.28 * static_cast<double>(j) / 119.0);
  const double alpha = 2e-5;

  const auto s = eval_control_objective(f, u0, u_star, alpha, cfg);

  // Oracle: rerun the solver, then accumulate both integrals with plain loops
  // in the opposite iteration order.
  const auto u = solve_burgers(cfg, u0, f);
  const double dx = 1.0 / 120.0, dt = cfg.horizon / 80.0;
  double terminal = 0.0;
  for (std::size_t j = cfg.store_nx; j-- > 0;) {
    const double d = u[cfg.store_nt * cfg.store_nx + j] - u_star[j];
    terminal += d * d;
  }
  terminal *= dx;
  double energy = 0.0;
  for (std::size_t j = cfg.store_nx; j-- > 0;)
    for (std::size_t i = cfg.store_nt; i-- > 0;)
      energy += f[i * cfg.store_nx + j] * f[i * cfg.store_nx + j];
  energy *= alpha * dt * dx;

  CHECK(s.terminal == Catch::Approx(terminal).epsilon(1e-10));
  CHECK(s.energy == Catch::Approx(energy).epsilon(1e-10));
  CHECK(s.total == Catch::Approx(terminal + energy).epsilon(1e-10));
}

TEST_CASE("objective is stable under simultaneous grid refinement", "[objective]") {
  BurgersConfig cfg;  // full integration grid so solver error stays small
  Rng rng(12);
  const auto u0 = ICSpec::sample(rng).on_grid(cfg.store_nx);
  const auto f = ForceSpec::sample(rng).on_grid(cfg.store_nt, cfg.store_nx);
  GridTensor u_star({cfg.store_nx}, {AxisRole::kSpace});
  for (std::size_t j = 1; j + 1 < cfg.store_nx; ++j)
    u_star[j] = 0.4 * std::exp(-30.0 * (static_cast<double>(j) / 119.0 - 0.5) *
                               (static_cast<double>(j) / 119.0 - 0.5));
  const double alpha = 2e-5;
  const auto base = eval_control_objective(f, u0, u_star, alpha, cfg);

  // Refined storage doubles the sample count per axis (state time axes are
  // the only endpoint-style doublings, and none appear here).
  const auto f2 = upsample(f, {2, 2}, UpsampleScheme::kLinear, {false, false});
  const auto u0_2 = upsample(u0, {2}, UpsampleScheme::kLinear, {false});
  const auto us_2 = upsample(u_star, {2}, UpsampleScheme::kLinear, {false});
  const auto refined = eval_control_objective(f2, u0_2, us_2, alpha, cfg);

  // Refinement shifts both the quadrature cells and the solver grid; the
  // first-order solver term dominates the difference.
  CHECK(refined.total == Catch::Approx(base.total).epsilon(0.02));
}

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wavediff/advection.hpp"
#include "wavediff/burgers.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"
#include "wavediff/rng.hpp"

namespace wavediff {

// ============================================================================
// Trajectory dataset generation and loading.
//
// A dataset directory holds one state file and one force file per trajectory
// plus `manifest.csv` (sample_id, seed, u_path, f_path). Every trajectory is
// driven by a seed derived from (master seed, index), so generation order and
// parallelism cannot change the output, and any single trajectory can be
// regenerated from its manifest row alone.
// ============================================================================

enum class PdeSystem { kBurgers, kAdvection };

inline const char* pde_system_name(PdeSystem s) {
  return s == PdeSystem::kBurgers ? "burgers" : "advection";
}

inline PdeSystem pde_system_from_name(const std::string& s) {
  if (s == "burgers") return PdeSystem::kBurgers;
  if (s == "advection") return PdeSystem::kAdvection;
  throw ValidationError("unknown pde system: " + s);
}

struct DatasetEntry {
  std::size_t sample_id = 0;
  std::uint64_t seed = 0;
  std::string u_path, f_path;  // relative to the dataset directory
};

struct DatasetManifest {
  std::vector<DatasetEntry> entries;

  [[nodiscard]] std::size_t size() const { return entries.size(); }
};

struct GenConfig {
  PdeSystem system = PdeSystem::kBurgers;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  BurgersConfig burgers;      // also carries the shared storage layout
  double advection_speed = 1.0;
};

// ----------------------------------------------------------------------------
// Manifest I/O
// ----------------------------------------------------------------------------

inline void save_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  std::ofstream out(dir / "manifest.csv", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << "sample_id,seed,u_path,f_path\n";
  for (const auto& e : m.entries)
    out << e.sample_id << ',' << e.seed << ',' << e.u_path << ',' << e.f_path << '\n';
  if (!out) throw IoError("manifest write failed in " + dir.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.csv", std::ios::binary);
  if (!in) throw IoError("cannot open manifest in " + dir.string());
  DatasetManifest m;
  std::string line;
  std::getline(in, line);
  require(line == "sample_id,seed,u_path,f_path",
          "manifest: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    DatasetEntry e;
    std::string field;
    std::getline(row, field, ',');
    e.sample_id = static_cast<std::size_t>(std::stoull(field));
    std::getline(row, field, ',');
    e.seed = std::stoull(field);
    std::getline(row, e.u_path, ',');
    std::getline(row, e.f_path, ',');
    require(!e.u_path.empty() && !e.f_path.empty(), "manifest: malformed row '" + line + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

/// One trajectory: state u [(nt+1) x nx] and force f [nt x nx].
struct Trajectory {
  GridTensor u, f;
};

inline Trajectory load_trajectory(const std::filesystem::path& dir, const DatasetEntry& e) {
  Trajectory t{load_tensor(dir / e.u_path), load_tensor(dir / e.f_path)};
  require(t.u.rank() == 2 && t.f.rank() == 2 &&
              t.u.dim(0) == t.f.dim(0) + 1 && t.u.dim(1) == t.f.dim(1),
          "trajectory " + e.u_path + ": state/force shapes inconsistent");
  return t;
}

// ----------------------------------------------------------------------------
// Generation
// ----------------------------------------------------------------------------

namespace detail {

inline std::string indexed_name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu.wdt", prefix, i);
  return buf;
}

}  // namespace detail

/// Generate one trajectory from its derived seed (manifest `seed` column).
inline Trajectory gen_trajectory(const GenConfig& cfg, std::uint64_t traj_seed) {
  Rng rng(traj_seed);
  if (cfg.system == PdeSystem::kBurgers) {
    const auto ic = ICSpec::sample(rng);
    const auto fs = ForceSpec::sample(rng);
    const auto u0 = ic.on_grid(cfg.burgers.store_nx);
    const auto f = fs.on_grid(cfg.burgers.store_nt, cfg.burgers.store_nx);
    return {solve_burgers(cfg.burgers, u0, f), f};
  }
  AdvectionConfig acfg;
  acfg.speed = cfg.advection_speed;
  acfg.horizon = cfg.burgers.horizon;
  acfg.store_nx = cfg.burgers.store_nx;
  acfg.store_nt = cfg.burgers.store_nt;
  const auto ic = PeriodicICSpec::sample(rng);
  // Advection is unforced; the zero force keeps the file layout uniform.
  GridTensor f({acfg.store_nt, acfg.store_nx}, {AxisRole::kTime, AxisRole::kSpace});
  return {solve_advection(acfg, ic.on_grid(acfg.store_nx)), f};
}

inline DatasetManifest gen_dataset(const GenConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  require(cfg.count >= 1, "gen_dataset: count must be >= 1");
  cfg.burgers.validate();
  std::filesystem::create_directories(out_dir);

  DatasetManifest m;
  m.entries.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    DatasetEntry e;
    e.sample_id = i;
    e.seed = derive_seed(cfg.seed, "traj", i);
    e.u_path = detail::indexed_name("u", i);
    e.f_path = detail::indexed_name("f", i);
    const Trajectory t = gen_trajectory(cfg, e.seed);
    save_tensor(out_dir / e.u_path, t.u);
    save_tensor(out_dir / e.f_path, t.f);
    m.entries.push_back(std::move(e));
  }
  save_manifest(out_dir, m);
  return m;
}

}  // namespace wavediff

#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavediff/burgers.hpp"
#include "wavediff/dataset.hpp"
#include "wavediff/diffusion.hpp"
#include "wavediff/errors.hpp"

namespace wavediff {

// ============================================================================
// Command configuration: JSON files checked fail-closed (unknown keys are
// hard errors), layered as built-in defaults <- named preset <- user file.
// ============================================================================

inline nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

/// Reject keys outside the allowed set; typos must not silently no-op.
inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
  require(j.is_object(), context + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) throw ValidationError(context + ": unknown key '" + key + "'");
  }
}

/// Overlay wins; objects merge recursively, everything else replaces.
inline nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overlay) {
  if (!base.is_object() || !overlay.is_object()) return overlay;
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      base[key] = merge_config(base[key], value);
    else
      base[key] = value;
  }
  return base;
}

// ----------------------------------------------------------------------------
// Typed sub-configs
// ----------------------------------------------------------------------------

inline nlohmann::json sample_config_to_json(const SampleConfig& sc) {
  return {{"kind", sc.kind == SamplerKind::kDdim ? "ddim" : "ddpm"},
          {"ddim_steps", sc.ddim_steps},
          {"eta", sc.eta},
          {"cfg_weight", sc.cfg_weight},
          {"guidance_weight", sc.guidance_weight}};
}

inline SampleConfig sample_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"kind", "ddim_steps", "eta", "cfg_weight", "guidance_weight"}, "sampler");
  SampleConfig sc;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "ddpm")
    sc.kind = SamplerKind::kDdpm;
  else if (kind == "ddim")
    sc.kind = SamplerKind::kDdim;
  else
    throw ValidationError("sampler: unknown kind '" + kind + "'");
  sc.ddim_steps = j.at("ddim_steps").get<std::size_t>();
  sc.eta = j.at("eta").get<double>();
  sc.cfg_weight = j.at("cfg_weight").get<double>();
  sc.guidance_weight = j.at("guidance_weight").get<double>();
  return sc;
}

inline nlohmann::json burgers_config_to_json(const BurgersConfig& bc) {
  return {{"nu", bc.nu},           {"horizon", bc.horizon}, {"store_nx", bc.store_nx},
          {"store_nt", bc.store_nt}, {"fine_nx", bc.fine_nx}, {"fine_nt", bc.fine_nt}};
}

inline BurgersConfig burgers_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"nu", "horizon", "store_nx", "store_nt", "fine_nx", "fine_nt"}, "burgers");
  BurgersConfig bc;
  bc.nu = j.at("nu").get<double>();
  bc.horizon = j.at("horizon").get<double>();
  bc.store_nx = j.at("store_nx").get<std::size_t>();
  bc.store_nt = j.at("store_nt").get<std::size_t>();
  bc.fine_nx = j.at("fine_nx").get<std::size_t>();
  bc.fine_nt = j.at("fine_nt").get<std::size_t>();
  bc.validate();
  return bc;
}

inline nlohmann::json gen_config_to_json(const GenConfig& gc) {
  return {{"system", pde_system_name(gc.system)},
          {"count", gc.count},
          {"seed", gc.seed},
          {"advection_speed", gc.advection_speed},
          {"burgers", burgers_config_to_json(gc.burgers)}};
}

inline GenConfig gen_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"system", "count", "seed", "advection_speed", "burgers"}, "gen-data");
  GenConfig gc;
  gc.system = pde_system_from_name(j.at("system").get<std::string>());
  gc.count = j.at("count").get<std::size_t>();
  gc.seed = j.at("seed").get<std::uint64_t>();
  gc.advection_speed = j.at("advection_speed").get<double>();
  gc.burgers = burgers_config_from_json(j.at("burgers"));
  return gc;
}

// ----------------------------------------------------------------------------
// Presets
// ----------------------------------------------------------------------------

namespace detail {

inline nlohmann::json denoiser_json(std::size_t in, std::size_t cond, std::size_t width,
                                    std::size_t depth, std::vector<std::size_t> mult,
                                    std::size_t groups, std::size_t temb, bool attention) {
  return {{"in_channels", in},     {"cond_channels", cond}, {"base_width", width},
          {"depth", depth},        {"channel_mult", mult},  {"norm_groups", groups},
          {"time_embed_dim", temb}, {"attention", attention}};
}

inline nlohmann::json train_json(const char* task, std::vector<std::size_t> levels,
                                 std::size_t steps, std::size_t batch, double lr,
                                 nlohmann::json denoiser) {
  return {{"task", task},
          {"wavelet", "bior2.4"},
          {"mode", "periodization"},
          {"levels", levels},
          {"steps", steps},
          {"batch", batch},
          {"lr", lr},
          {"cond_drop_prob", 0.1},
          {"schedule_steps", 1000},
          {"beta_min", 1e-4},
          {"beta_max", 0.02},
          {"holdout_frac", 0.1},
          {"seed", 0},
          {"denoiser", std::move(denoiser)}};
}

inline nlohmann::json sampler_json(const char* kind, std::size_t ddim_steps, double eta,
                                   double cfg, double guidance) {
  return {{"kind", kind},
          {"ddim_steps", ddim_steps},
          {"eta", eta},
          {"cfg_weight", cfg},
          {"guidance_weight", guidance}};
}

}  // namespace detail

/// Built-in starting configurations. "default" is what a command uses when no
/// preset is named; desk presets run in minutes on one core, the paper-1d
/// presets mirror the published full-scale hyperparameters.
inline nlohmann::json preset_config(const std::string& command, const std::string& name) {
  using detail::denoiser_json;
  using detail::sampler_json;
  using detail::train_json;
  using nlohmann::json;

  if (command == "gen-data") {
    if (name == "default" || name == "desk-burgers")
      return gen_config_to_json(GenConfig{PdeSystem::kBurgers, 500, 0, BurgersConfig::desk(), 1.0});
    if (name == "desk-advection")
      return gen_config_to_json(
          GenConfig{PdeSystem::kAdvection, 500, 0, BurgersConfig::desk(), 1.0});
    if (name == "paper-burgers")
      return gen_config_to_json(GenConfig{PdeSystem::kBurgers, 1000, 0, BurgersConfig{}, 1.0});
  }
  if (command == "train") {
    if (name == "default" || name == "desk-sim")
      return train_json("simulate", {1}, 2000, 4, 3e-3, denoiser_json(4, 7, 16, 2, {1, 2}, 8, 32, false));
    if (name == "desk-control")
      return train_json("control", {1}, 2000, 4, 3e-3, denoiser_json(8, 5, 16, 2, {1, 2}, 8, 32, false));
    if (name == "desk-superres")
      return train_json("superres", {0}, 1200, 4, 3e-3, denoiser_json(4, 11, 16, 2, {1, 2}, 8, 32, false));
    if (name == "paper-1d")
      return train_json("simulate", {0}, 100000, 16, 1e-4,
                        denoiser_json(4, 7, 128, 4, {1, 2, 4, 8}, 32, 512, true));
  }
  if (command == "simulate") {
    if (name == "default" || name == "desk")
      return {{"count", 8}, {"level", 1}, {"seed", 0}, {"exclude_initial", true},
              {"sampler", sampler_json("ddim", 50, 1.0, 1.0, 0.0)}};
    if (name == "paper-1d")
      return {{"count", 50}, {"level", 0}, {"seed", 0}, {"exclude_initial", true},
              {"sampler", sampler_json("ddim", 50, 1.0, 1.0, 0.0)}};
  }
  if (command == "control") {
    if (name == "default" || name == "desk")
      return {{"count", 8},
              {"level", 1},
              {"seed", 0},
              {"alpha", 2e-5},
              {"recon_guidance_weight", 0.0},
              {"burgers", burgers_config_to_json(BurgersConfig::desk())},
              {"sampler", sampler_json("ddim", 50, 1.0, 1.0, 120000.0)}};
    if (name == "paper-1d")
      return {{"count", 50},
              {"level", 0},
              {"seed", 0},
              {"alpha", 2e-5},
              {"recon_guidance_weight", 0.0},
              {"burgers", burgers_config_to_json(BurgersConfig{})},
              {"sampler", sampler_json("ddim", 50, 1.0, 1.0, 120000.0)}};
  }
  if (command == "superres") {
    if (name == "default" || name == "desk")
      return {{"count", 8}, {"finest_level", 0}, {"stages", 1}, {"seed", 0},
              {"exclude_initial", true},
              {"sampler", sampler_json("ddim", 50, 1.0, 1.0, 0.0)}};
  }
  if (command == "eval") {
    if (name == "default")
      return {{"count", 8}, {"level", 1}, {"exclude_initial", true}};
  }
  if (command == "wavelet-check") {
    if (name == "default")
      return {{"lengths", json::array({8, 17, 60, 81, 120})}, {"tol", 1e-8}};
  }
  throw ValidationError("no preset '" + name + "' for command '" + command + "'");
}

/// defaults <- named preset <- user config file.
inline nlohmann::json resolve_config(const std::string& command, const std::string& preset,
                                     const std::filesystem::path& config_file) {
  nlohmann::json cfg = preset_config(command, "default");
  if (!preset.empty()) cfg = merge_config(cfg, preset_config(command, preset));
  if (!config_file.empty()) cfg = merge_config(cfg, load_json_file(config_file));
  return cfg;
}

}  // namespace wavediff

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavediff/checkpoint.hpp"
#include "wavediff/codec.hpp"
#include "wavediff/dataset.hpp"
#include "wavediff/denoiser.hpp"
#include "wavediff/diffusion.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/optim.hpp"
#include "wavediff/param_store.hpp"
#include "wavediff/rng.hpp"
#include "wavediff/schedule.hpp"
#include "wavediff/wavelet.hpp"

namespace wavediff {

// ============================================================================
// Training: load a trajectory dataset, encode it per resolution level,
// z-score with per-level statistics, and run the denoising objective.
//
// Reproducibility contract: one Rng stream ("train", derived from the seed)
// drives the whole loop, consumed per step as (level index, batch indices,
// then the per-sample draws of the denoising step). Equal configs and data
// give bitwise-equal checkpoints.
// ============================================================================

struct TrainConfig {
  TaskKind task = TaskKind::kSimulate;
  std::string wavelet = "bior2.4";
  BoundaryMode mode = BoundaryMode::kPeriodization;
  std::vector<std::size_t> levels = {1};
  std::size_t steps = 2000;
  std::size_t batch = 4;
  double lr = 1e-4;
  double cond_drop_prob = 0.1;
  std::size_t schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double holdout_frac = 0.1;
  std::uint64_t seed = 0;
  nn::DenoiserConfig denoiser;  // channel counts are overridden by the task

  void validate() const {
    require(!levels.empty(), "train config: need at least one level");
    for (std::size_t i = 1; i < levels.size(); ++i)
      require(levels[i] > levels[i - 1], "train config: levels must be strictly increasing");
    require(steps >= 1, "train config: steps must be positive");
    require(batch >= 1, "train config: batch must be positive");
    require(lr > 0.0, "train config: lr must be positive");
    require(cond_drop_prob >= 0.0 && cond_drop_prob < 1.0,
            "train config: cond_drop_prob must lie in [0,1)");
    require(holdout_frac >= 0.0 && holdout_frac < 1.0,
            "train config: holdout_frac must lie in [0,1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& tc) {
  return {{"task", task_name(tc.task)},
          {"wavelet", tc.wavelet},
          {"mode", boundary_mode_name(tc.mode)},
          {"levels", tc.levels},
          {"steps", tc.steps},
          {"batch", tc.batch},
          {"lr", tc.lr},
          {"cond_drop_prob", tc.cond_drop_prob},
          {"schedule_steps", tc.schedule_steps},
          {"beta_min", tc.beta_min},
          {"beta_max", tc.beta_max},
          {"holdout_frac", tc.holdout_frac},
          {"seed", tc.seed},
          {"denoiser", tc.denoiser.to_json()}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig tc;
  tc.task = task_from_name(j.at("task").get<std::string>());
  tc.wavelet = j.at("wavelet").get<std::string>();
  tc.mode = boundary_mode_from_name(j.at("mode").get<std::string>());
  tc.levels = j.at("levels").get<std::vector<std::size_t>>();
  tc.steps = j.at("steps").get<std::size_t>();
  tc.batch = j.at("batch").get<std::size_t>();
  tc.lr = j.at("lr").get<double>();
  tc.cond_drop_prob = j.at("cond_drop_prob").get<double>();
  tc.schedule_steps = j.at("schedule_steps").get<std::size_t>();
  tc.beta_min = j.at("beta_min").get<double>();
  tc.beta_max = j.at("beta_max").get<double>();
  tc.holdout_frac = j.at("holdout_frac").get<double>();
  tc.seed = j.at("seed").get<std::uint64_t>();
  tc.denoiser = nn::DenoiserConfig::from_json(j.at("denoiser"));
  tc.validate();
  return tc;
}

/// Deterministic split: the trailing fraction of the manifest is held out.
inline std::pair<std::vector<DatasetEntry>, std::vector<DatasetEntry>> split_manifest(
    const std::vector<DatasetEntry>& entries, double holdout_frac) {
  require(!entries.empty(), "split_manifest: empty manifest");
  std::size_t hold = static_cast<std::size_t>(
      std::llround(holdout_frac * static_cast<double>(entries.size())));
  if (hold >= entries.size()) hold = entries.size() - 1;
  const std::size_t train = entries.size() - hold;
  return {{entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(train)},
          {entries.begin() + static_cast<std::ptrdiff_t>(train), entries.end()}};
}

/// Encode a set of trajectories for one task at one resolution level.
inline std::vector<TaskTensors> encode_level_set(const std::filesystem::path& dir,
                                                 const std::vector<DatasetEntry>& entries,
                                                 TaskKind task, const WaveletSpec& w,
                                                 std::size_t level) {
  std::vector<TaskTensors> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    const Trajectory t = trajectory_at_level(load_trajectory(dir, e), level);
    out.push_back(encode_task(task, t.u, t.f, w));
  }
  return out;
}

struct TrainResult {
  nn::ParamStore store;
  nn::DenoiserConfig dcfg;
  NoiseSchedule schedule;
  std::vector<double> losses;  // one entry per optimizer step
};

/// Train a model on the dataset in `dir`. `on_step(step, loss)` is invoked
/// after every optimizer step when provided.
inline TrainResult train_model(
    const std::filesystem::path& dir, const TrainConfig& tc,
    const std::function<void(std::size_t, double)>& on_step = {}) {
  tc.validate();
  const WaveletSpec w = WaveletSpec::make(tc.wavelet, tc.mode);
  const DatasetManifest manifest = load_manifest(dir);
  const auto [train_entries, held] = split_manifest(manifest.entries, tc.holdout_frac);
  require(!train_entries.empty(), "train_model: no training trajectories");

  TrainResult r{nn::ParamStore{}, tc.denoiser,
                NoiseSchedule::linear(tc.schedule_steps, tc.beta_min, tc.beta_max), {}};
  r.dcfg.in_channels = gen_channels(tc.task);
  r.dcfg.cond_channels = cond_channels(tc.task);
  r.dcfg.validate();

  // Encode and z-score every level up front.
  std::map<std::size_t, std::vector<TaskTensors>> sets;
  std::map<std::size_t, nn::NormStats> stats;
  for (std::size_t lvl : tc.levels) {
    std::vector<TaskTensors> set = encode_level_set(dir, train_entries, tc.task, w, lvl);
    const nn::NormStats st = compute_norm_stats(set);
    for (TaskTensors& s : set) {
      normalize_gen(s.gen, st);
      normalize_cond(s.cond, st, s.gen.dims[0]);
    }
    stats[lvl] = st;
    sets[lvl] = std::move(set);
  }

  r.store = nn::init_denoiser(r.dcfg, derive_seed(tc.seed, "init", 0));
  r.store.stats = std::move(stats);
  r.store.meta["task"] = task_name(tc.task);
  r.store.meta["wavelet"] = {{"family", tc.wavelet}, {"mode", boundary_mode_name(tc.mode)}};
  r.store.meta["levels"] = tc.levels;
  r.store.meta["schedule"] = {{"steps", tc.schedule_steps},
                              {"beta_min", tc.beta_min},
                              {"beta_max", tc.beta_max}};
  r.store.meta["train_config"] = to_json(tc);

  Rng rng = Rng(tc.seed).stream("train");
  const nn::AdamConfig adam{tc.lr, 0.9, 0.999, 1e-8};
  r.losses.reserve(tc.steps);
  std::vector<nn::Tensor> x0s(tc.batch), conds(tc.batch);
  for (std::size_t step = 1; step <= tc.steps; ++step) {
    const auto& set = sets.at(tc.levels[rng.below(tc.levels.size())]);
    for (std::size_t b = 0; b < tc.batch; ++b) {
      const TaskTensors& s = set[rng.below(set.size())];
      x0s[b] = s.gen;
      conds[b] = s.cond;
    }
    const double loss =
        diffusion_train_step(r.schedule, r.dcfg, r.store, x0s, conds, tc.cond_drop_prob, rng);
    nn::adam_step(r.store, adam);
    r.losses.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  return r;
}

/// Rebuild the pieces needed for inference from a loaded checkpoint.
struct LoadedModel {
  nn::ParamStore store;
  nn::DenoiserConfig dcfg;
  NoiseSchedule schedule;
  TaskKind task = TaskKind::kSimulate;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
  LoadedModel m;
  m.store = nn::load_checkpoint(path);
  try {
    m.dcfg = nn::DenoiserConfig::from_json(m.store.meta.at("denoiser"));
    m.task = task_from_name(m.store.meta.at("task").get<std::string>());
    const auto& s = m.store.meta.at("schedule");
    m.schedule = NoiseSchedule::linear(s.at("steps").get<std::size_t>(),
                                       s.at("beta_min").get<double>(),
                                       s.at("beta_max").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": checkpoint metadata incomplete: " + e.what());
  }
  return m;
}

}  // namespace wavediff

#pragma once

#include <cstdio>
#include <limits>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavediff/config.hpp"
#include "wavediff/dataset.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/metrics.hpp"
#include "wavediff/multires.hpp"
#include "wavediff/report.hpp"
#include "wavediff/resample.hpp"
#include "wavediff/trainer.hpp"

namespace wavediff::cli {

// ============================================================================
// Command-line front end.
//
//   gen-data    solve trajectories and write a dataset directory
//   train-brm   train a base-resolution model (simulate or control task)
//   train-srm   train the refinement model (superres task)
//   simulate    sample trajectories conditioned on stored forces/profiles
//   control     sample steering forces and score them with the solver
//   superres    base sample + refinement chain toward a finer grid
//   eval        compare stored predictions against dataset truth
//   wavelet-check  transform round-trip self-test
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
// failure, 4 I/O failure. Every run writes run.json (configuration + hash,
// no timestamps) into its output directory so reruns are byte-comparable.
// ============================================================================

namespace fs = std::filesystem;

struct CommandArgs {
  std::string preset;
  fs::path config_file;
  bool overwrite = false;
};

namespace detail {

inline void add_common(CLI::App* cmd, CommandArgs& a) {
  cmd->add_option("--preset", a.preset, "named starting configuration");
  cmd->add_option("--config", a.config_file, "JSON config overlaying the preset");
  cmd->add_flag("--overwrite", a.overwrite, "replace existing outputs");
}

/// Output directories are claimed by their run.json; refuse reuse without
/// --overwrite so two runs can never interleave silently.
inline void claim_out_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir / "run.json") && !overwrite)
    throw ValidationError(dir.string() + " already holds a run (use --overwrite)");
  fs::create_directories(dir);
}

inline void claim_out_file(const fs::path& file, bool overwrite) {
  if (fs::exists(file) && !overwrite)
    throw ValidationError(file.string() + " already exists (use --overwrite)");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

/// Entries selected by an explicit "ids" list, else the first "count".
inline std::vector<DatasetEntry> select_entries(const DatasetManifest& m,
                                                const nlohmann::json& cfg) {
  std::vector<DatasetEntry> out;
  if (cfg.contains("ids") && !cfg.at("ids").is_null()) {
    for (const std::size_t id : cfg.at("ids").get<std::vector<std::size_t>>()) {
      bool found = false;
      for (const auto& e : m.entries)
        if (e.sample_id == id) {
          out.push_back(e);
          found = true;
          break;
        }
      require(found, "no sample with id " + std::to_string(id) + " in the manifest");
    }
  } else {
    const std::size_t count = cfg.at("count").get<std::size_t>();
    require(count >= 1, "count must be >= 1");
    require(count <= m.entries.size(), "count exceeds the manifest size");
    out.assign(m.entries.begin(), m.entries.begin() + static_cast<std::ptrdiff_t>(count));
  }
  return out;
}

inline std::size_t progress_stride(std::size_t steps) {
  return steps <= 20 ? 1 : steps / 20;
}

// ----------------------------------------------------------------------------
// gen-data
// ----------------------------------------------------------------------------

inline int cmd_gen_data(const fs::path& out, const CommandArgs& a) {
  const nlohmann::json cfg = resolve_config("gen-data", a.preset, a.config_file);
  const GenConfig gc = gen_config_from_json(cfg);
  claim_out_dir(out, a.overwrite);
  const DatasetManifest m = gen_dataset(gc, out);
  write_run_record(out / "run.json", "gen-data", cfg);
  std::fprintf(stderr, "gen-data: wrote %zu trajectories to %s\n", m.size(),
               out.string().c_str());
  return 0;
}

// ----------------------------------------------------------------------------
// train-brm / train-srm
// ----------------------------------------------------------------------------

inline int cmd_train(const fs::path& data, const fs::path& out, const CommandArgs& a,
                     bool refinement) {
  nlohmann::json cfg = resolve_config("train", a.preset, a.config_file);
  check_keys(cfg,
             {"task", "wavelet", "mode", "levels", "steps", "batch", "lr", "cond_drop_prob",
              "schedule_steps", "beta_min", "beta_max", "holdout_frac", "seed", "denoiser"},
             "train");
  const TrainConfig tc = train_config_from_json(cfg);
  if (refinement)
    require(tc.task == TaskKind::kSuperres, "train-srm requires task=superres");
  else
    require(tc.task != TaskKind::kSuperres, "train-brm trains simulate or control tasks");

  claim_out_file(out, a.overwrite);
  const std::size_t stride = progress_stride(tc.steps);
  const TrainResult r = train_model(data, tc, [&](std::size_t step, double loss) {
    if (step % stride == 0 || step == tc.steps)
      std::fprintf(stderr, "train: step %zu/%zu loss %.4f\n", step, tc.steps, loss);
  });
  nn::save_checkpoint(out, r.store);

  fs::path stem = out;
  stem.replace_extension();
  PlotSeries losses{"train_loss", {}};
  losses.points.reserve(r.losses.size());
  for (std::size_t i = 0; i < r.losses.size(); ++i)
    losses.points.emplace_back(static_cast<double>(i + 1), r.losses[i]);
  write_plot_csv(stem.string() + "_loss.csv", {losses});
  write_run_record(stem.string() + "_run.json", refinement ? "train-srm" : "train-brm", cfg);
  return 0;
}

// ----------------------------------------------------------------------------
// simulate
// ----------------------------------------------------------------------------

inline int cmd_simulate(const fs::path& model_path, const fs::path& data, const fs::path& out,
                        const CommandArgs& a) {
  const nlohmann::json cfg = resolve_config("simulate", a.preset, a.config_file);
  check_keys(cfg, {"count", "ids", "level", "sampler", "seed", "exclude_initial"}, "simulate");
  const SampleConfig sc = sample_config_from_json(cfg.at("sampler"));
  const int level = cfg.at("level").get<int>();
  require(level >= 0, "simulate: level must be >= 0 (conditions come from stored data)");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const bool exclude_initial = cfg.at("exclude_initial").get<bool>();

  const LoadedModel m = load_model(model_path);
  require(m.task == TaskKind::kSimulate, "simulate needs a model trained on the simulate task");
  const DatasetManifest man = load_manifest(data);
  const std::vector<DatasetEntry> picked = select_entries(man, cfg);

  claim_out_dir(out, a.overwrite);
  std::vector<std::pair<std::size_t, Metrics>> rows;
  for (const auto& e : picked) {
    const Trajectory t = trajectory_at_level(load_trajectory(data, e),
                                             static_cast<std::size_t>(level));
    Rng rng(derive_seed(seed, "sample", e.sample_id));
    const GridTensor u_hat = sample_simulate(m.schedule, m.dcfg, m.store, t.f,
                                             state_row(t.u, 0), level, sc, rng);
    save_tensor(out / wavediff::detail::indexed_name("u_hat", e.sample_id), u_hat);
    rows.emplace_back(e.sample_id, compute_metrics(u_hat, t.u, exclude_initial));
    std::fprintf(stderr, "simulate: sample %zu rel_l2 %.4f\n", e.sample_id,
                 rows.back().second.rel_l2);
  }
  write_metrics_csv(out / "metrics.csv", rows);
  write_run_record(out / "run.json", "simulate", cfg);
  return 0;
}

// ----------------------------------------------------------------------------
// control
// ----------------------------------------------------------------------------

inline int cmd_control(const fs::path& model_path, const fs::path& data, const fs::path& out,
                       const CommandArgs& a) {
  const nlohmann::json cfg = resolve_config("control", a.preset, a.config_file);
  check_keys(cfg,
             {"count", "ids", "level", "sampler", "seed", "alpha", "recon_guidance_weight",
              "burgers"},
             "control");
  const SampleConfig sc = sample_config_from_json(cfg.at("sampler"));
  const int level = cfg.at("level").get<int>();
  require(level >= 0, "control: level must be >= 0");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const double alpha = cfg.at("alpha").get<double>();
  const double recon_w = cfg.at("recon_guidance_weight").get<double>();
  const BurgersConfig base = burgers_config_from_json(cfg.at("burgers"));

  const LoadedModel m = load_model(model_path);
  require(m.task == TaskKind::kControl, "control needs a model trained on the control task");
  const DatasetManifest man = load_manifest(data);
  const std::vector<DatasetEntry> picked = select_entries(man, cfg);

  claim_out_dir(out, a.overwrite);
  std::ofstream scores(out / "control_scores.csv");
  if (!scores) throw IoError("cannot open control_scores.csv for writing");
  scores << "sample_id,terminal,energy,total\n";

  const std::size_t factor = std::size_t{1} << level;
  for (const auto& e : picked) {
    const Trajectory t0 = load_trajectory(data, e);
    const Trajectory t = trajectory_at_level(t0, static_cast<std::size_t>(level));
    const std::vector<double> u0 = state_row(t.u, 0);
    const std::vector<double> target = state_row(t.u, t.u.dim(0) - 1);
    const std::vector<std::size_t> state_dims = {t.u.dim(0), t.u.dim(1)};

    ObjectiveGrad objective;
    if (sc.guidance_weight > 0.0)
      objective = make_control_objective(m.store, state_dims, level, target, alpha,
                                         base.horizon, recon_w, u0);
    Rng rng(derive_seed(seed, "control", e.sample_id));
    auto [u_hat, f_hat] = sample_control(m.schedule, m.dcfg, m.store, u0, target, state_dims,
                                         level, sc, rng, objective);

    // Score on the base grid with the ground-truth solver; coarser forces are
    // linearly interpolated up first.
    GridTensor f_base = level == 0 ? f_hat
                                   : upsample(f_hat, {factor, factor},
                                              UpsampleScheme::kLinear, {false, false});
    GridTensor u0_base({t0.u.dim(1)}, {AxisRole::kSpace});
    GridTensor tgt_base({t0.u.dim(1)}, {AxisRole::kSpace});
    const std::vector<double> u0_fine = state_row(t0.u, 0);
    const std::vector<double> tgt_fine = state_row(t0.u, t0.u.dim(0) - 1);
    std::copy(u0_fine.begin(), u0_fine.end(), u0_base.data().begin());
    std::copy(tgt_fine.begin(), tgt_fine.end(), tgt_base.data().begin());
    // A force the solver cannot integrate scores as infinitely bad rather
    // than aborting the remaining samples.
    ControlScore score;
    try {
      score = eval_control_objective(f_base, u0_base, tgt_base, alpha, base);
    } catch (const NumericalError& err) {
      std::fprintf(stderr, "control: sample %zu unsolvable (%s)\n", e.sample_id, err.what());
      score.terminal = score.energy = score.total = std::numeric_limits<double>::infinity();
    }

    save_tensor(out / wavediff::detail::indexed_name("f_hat", e.sample_id), f_hat);
    save_tensor(out / wavediff::detail::indexed_name("u_hat", e.sample_id), u_hat);
    scores << e.sample_id << ',' << wavediff::detail::num17(score.terminal) << ','
           << wavediff::detail::num17(score.energy) << ','
           << wavediff::detail::num17(score.total) << '\n';
    std::fprintf(stderr, "control: sample %zu J %.6f (terminal %.6f)\n", e.sample_id,
                 score.total, score.terminal);
  }
  if (!scores.good()) throw IoError("failed writing control_scores.csv");
  scores.close();
  write_run_record(out / "run.json", "control", cfg);
  return 0;
}

// ----------------------------------------------------------------------------
// superres
// ----------------------------------------------------------------------------

inline int cmd_superres(const fs::path& base_model, const fs::path& refine_model,
                        const fs::path& data, const fs::path& out, const CommandArgs& a) {
  const nlohmann::json cfg = resolve_config("superres", a.preset, a.config_file);
  check_keys(cfg, {"count", "ids", "finest_level", "stages", "sampler", "seed",
                   "exclude_initial"},
             "superres");
  const SampleConfig sc = sample_config_from_json(cfg.at("sampler"));
  const int finest = cfg.at("finest_level").get<int>();
  const std::size_t stages = cfg.at("stages").get<std::size_t>();
  require(stages >= 1, "superres: stages must be >= 1");
  const std::uint64_t seed = cfg.at("seed").get<std::uint64_t>();
  const bool exclude_initial = cfg.at("exclude_initial").get<bool>();

  const LoadedModel mb = load_model(base_model);
  require(mb.task == TaskKind::kSimulate, "superres base model must be a simulate model");
  const LoadedModel mr = load_model(refine_model);
  require(mr.task == TaskKind::kSuperres, "superres refine model must be a superres model");
  const DatasetManifest man = load_manifest(data);
  const std::vector<DatasetEntry> picked = select_entries(man, cfg);

  claim_out_dir(out, a.overwrite);
  std::vector<std::pair<std::size_t, Metrics>> rows;
  for (const auto& e : picked) {
    const Trajectory t0 = load_trajectory(data, e);
    GridTensor f = t0.f;
    std::vector<double> u0;
    GridTensor truth = t0.u;
    bool have_truth = true;
    if (finest >= 0) {
      const Trajectory t = trajectory_at_level(t0, static_cast<std::size_t>(finest));
      f = t.f;
      u0 = state_row(t.u, 0);
      truth = t.u;
    } else {
      // Finer than the stored grid: replicate inputs up to the virtual level.
      const std::size_t factor = std::size_t{1} << static_cast<std::size_t>(-finest);
      f = upsample(t0.f, {factor, factor}, UpsampleScheme::kNearest, {false, false});
      GridTensor row({1, t0.u.dim(1)}, {AxisRole::kTime, AxisRole::kSpace});
      std::copy_n(t0.u.data().begin(), t0.u.dim(1), row.data().begin());
      const GridTensor up =
          upsample(row, {1, factor}, UpsampleScheme::kNearest, {false, false});
      u0.assign(up.data().begin(), up.data().end());
      have_truth = false;
    }

    Rng rng(derive_seed(seed, "superres", e.sample_id));
    const GridTensor u_hat =
        superres_rollout(mb.schedule, mb.dcfg, mb.store, mr.schedule, mr.dcfg, mr.store, f,
                         u0, finest, stages, sc, rng);
    save_tensor(out / wavediff::detail::indexed_name("u_hat", e.sample_id), u_hat);
    if (have_truth) {
      rows.emplace_back(e.sample_id, compute_metrics(u_hat, truth, exclude_initial));
      std::fprintf(stderr, "superres: sample %zu rel_l2 %.4f\n", e.sample_id,
                   rows.back().second.rel_l2);
    } else {
      std::fprintf(stderr, "superres: sample %zu -> %zux%zu (no stored truth)\n",
                   e.sample_id, u_hat.dim(0), u_hat.dim(1));
    }
  }
  if (!rows.empty()) write_metrics_csv(out / "metrics.csv", rows);
  write_run_record(out / "run.json", "superres", cfg);
  return 0;
}

// ----------------------------------------------------------------------------
// eval
// ----------------------------------------------------------------------------

inline int cmd_eval(const fs::path& data, const fs::path& pred, const fs::path& out,
                    const CommandArgs& a) {
  const nlohmann::json cfg = resolve_config("eval", a.preset, a.config_file);
  check_keys(cfg, {"count", "ids", "level", "exclude_initial"}, "eval");
  const int level = cfg.at("level").get<int>();
  require(level >= 0, "eval: level must be >= 0");
  const bool exclude_initial = cfg.at("exclude_initial").get<bool>();

  const DatasetManifest man = load_manifest(data);
  const std::vector<DatasetEntry> picked = select_entries(man, cfg);

  claim_out_dir(out, a.overwrite);
  std::vector<std::pair<std::size_t, Metrics>> rows;
  PlotSeries series{"rel_l2", {}};
  for (const auto& e : picked) {
    const Trajectory t = trajectory_at_level(load_trajectory(data, e),
                                             static_cast<std::size_t>(level));
    const GridTensor u_hat =
        load_tensor(pred / wavediff::detail::indexed_name("u_hat", e.sample_id));
    rows.emplace_back(e.sample_id, compute_metrics(u_hat, t.u, exclude_initial));
    series.points.emplace_back(static_cast<double>(e.sample_id), rows.back().second.rel_l2);
  }
  write_metrics_csv(out / "metrics.csv", rows);
  write_plot_csv(out / "rel_l2.csv", {series});
  write_run_record(out / "run.json", "eval", cfg);
  std::fprintf(stderr, "eval: wrote metrics for %zu samples\n", rows.size());
  return 0;
}

// ----------------------------------------------------------------------------
// wavelet-check
// ----------------------------------------------------------------------------

inline int cmd_wavelet_check(const CommandArgs& a) {
  const nlohmann::json cfg = resolve_config("wavelet-check", a.preset, a.config_file);
  check_keys(cfg, {"lengths", "tol"}, "wavelet-check");
  const auto lengths = cfg.at("lengths").get<std::vector<std::size_t>>();
  const double tol = cfg.at("tol").get<double>();

  double worst = 0.0;
  Rng rng(12345);
  for (const char* family : {"bior1.3", "bior2.4", "db4", "sym4"})
    for (const BoundaryMode mode : {BoundaryMode::kPeriodization, BoundaryMode::kZero}) {
      const WaveletSpec w = WaveletSpec::make(family, mode);
      for (const std::size_t n : lengths) {
        GridTensor x({n}, {AxisRole::kSpace});
        for (auto& v : x.data()) v = rng.normal();
        const GridTensor y = idwt_nd(dwt_nd(x, w, {0}));
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          num += (y[i] - x[i]) * (y[i] - x[i]);
          den += x[i] * x[i];
        }
        const double err = std::sqrt(num / den);
        worst = std::max(worst, err);
        std::printf("%-8s %-13s n=%-4zu rel_l2=%.3e\n", family, boundary_mode_name(mode), n,
                    err);
      }
    }
  if (worst > tol)
    throw NumericalError("wavelet-check: worst round-trip error " + std::to_string(worst) +
                         " exceeds tolerance");
  std::printf("wavelet-check: all round trips within %.3e\n", tol);
  return 0;
}

}  // namespace detail

inline int run(int argc, char** argv) {
  CLI::App app{"wavelet-domain generative PDE simulation and control"};
  app.require_subcommand(1);

  CommandArgs ga, gt, gs, gsim, gctl, gsr, gev, gwc;
  fs::path out, data, model, base_model, refine_model, pred;

  CLI::App* gen = app.add_subcommand("gen-data", "solve trajectories into a dataset");
  gen->add_option("--out", out, "dataset directory")->required();
  detail::add_common(gen, ga);

  CLI::App* brm = app.add_subcommand("train-brm", "train a base-resolution model");
  brm->alias("train");
  brm->add_option("--data", data, "dataset directory")->required();
  brm->add_option("--out", out, "checkpoint file to write")->required();
  detail::add_common(brm, gt);

  CLI::App* srm = app.add_subcommand("train-srm", "train the refinement model");
  srm->add_option("--data", data, "dataset directory")->required();
  srm->add_option("--out", out, "checkpoint file to write")->required();
  detail::add_common(srm, gs);

  CLI::App* sim = app.add_subcommand("simulate", "sample trajectories from stored conditions");
  sim->add_option("--model", model, "simulate-task checkpoint")->required();
  sim->add_option("--data", data, "dataset directory")->required();
  sim->add_option("--out", out, "output directory")->required();
  detail::add_common(sim, gsim);

  CLI::App* ctl = app.add_subcommand("control", "sample steering forces and score them");
  ctl->add_option("--model", model, "control-task checkpoint")->required();
  ctl->add_option("--data", data, "dataset directory")->required();
  ctl->add_option("--out", out, "output directory")->required();
  detail::add_common(ctl, gctl);

  CLI::App* sr = app.add_subcommand("superres", "refine base samples toward finer grids");
  sr->add_option("--base-model", base_model, "simulate-task checkpoint")->required();
  sr->add_option("--refine-model", refine_model, "superres-task checkpoint")->required();
  sr->add_option("--data", data, "dataset directory")->required();
  sr->add_option("--out", out, "output directory")->required();
  detail::add_common(sr, gsr);

  CLI::App* ev = app.add_subcommand("eval", "score stored predictions against truth");
  ev->add_option("--data", data, "dataset directory with ground truth")->required();
  ev->add_option("--pred", pred, "directory holding u_hat_*.wdt")->required();
  ev->add_option("--out", out, "output directory")->required();
  detail::add_common(ev, gev);

  CLI::App* wc = app.add_subcommand("wavelet-check", "transform round-trip self-test");
  detail::add_common(wc, gwc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return detail::cmd_gen_data(out, ga);
    if (brm->parsed()) return detail::cmd_train(data, out, gt, false);
    if (srm->parsed()) return detail::cmd_train(data, out, gs, true);
    if (sim->parsed()) return detail::cmd_simulate(model, data, out, gsim);
    if (ctl->parsed()) return detail::cmd_control(model, data, out, gctl);
    if (sr->parsed()) return detail::cmd_superres(base_model, refine_model, data, out, gsr);
    if (ev->parsed()) return detail::cmd_eval(data, pred, out, gev);
    if (wc->parsed()) return detail::cmd_wavelet_check(gwc);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 4;
  }
  return 2;
}

}  // namespace wavediff::cli

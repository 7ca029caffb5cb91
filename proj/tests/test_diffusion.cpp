#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "wavediff/diffusion.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/metrics.hpp"
#include "wavediff/optim.hpp"
#include "wavediff/rng.hpp"
#include "wavediff/schedule.hpp"

using wavediff::cfg_epsilon;
using wavediff::NoiseSchedule;
using wavediff::Rng;
using wavediff::SampleConfig;
using wavediff::SamplerKind;
using wavediff::ValidationError;
namespace nn = wavediff::nn;

namespace {

nn::Tensor rand_tensor(std::vector<std::size_t> dims, std::uint64_t seed,
                       double spread = 1.0) {
  nn::Tensor t(std::move(dims));
  Rng rng(seed);
  for (auto& x : t.v) x = spread * rng.normal();
  return t;
}

nn::DenoiserConfig tiny_config() {
  nn::DenoiserConfig cfg;
  cfg.in_channels = 1;
  cfg.cond_channels = 2;
  cfg.base_width = 8;
  cfg.depth = 1;
  cfg.channel_mult = {1};
  cfg.norm_groups = 4;
  cfg.time_embed_dim = 8;
  return cfg;
}

/// A model whose predictions are nonzero everywhere (head randomized).
nn::ParamStore live_model(const nn::DenoiserConfig& cfg, std::uint64_t seed) {
  nn::ParamStore store = nn::init_denoiser(cfg, seed);
  Rng rng(seed + 1);
  for (const char* name : {"head.w", "head.b"}) {
    for (auto& x : store.entry(name).value.v) x = 0.3 * rng.normal();
  }
  return store;
}

double dist2(const nn::Tensor& a, const nn::Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

}  // namespace

// ----------------------------------------------------------------------------
// Schedule
// ----------------------------------------------------------------------------

TEST_CASE("linear schedule endpoints and invariants", "[schedule]") {
  const NoiseSchedule ns = NoiseSchedule::linear();
  REQUIRE(ns.steps() == 1000);
  REQUIRE(ns.beta(1) == Catch::Approx(1e-4).margin(0.0));
  REQUIRE(ns.beta(1000) == Catch::Approx(0.02).margin(0.0));
  REQUIRE(ns.alpha_bar(0) == 1.0);
  REQUIRE(ns.sigma(1) == 0.0);
  REQUIRE_NOTHROW(ns.validate());

  // alpha_bar decreases strictly; sigma matches the posterior formula.
  for (std::size_t k = 1; k <= 1000; k += 111) {
    REQUIRE(ns.alpha_bar(k) < ns.alpha_bar(k - 1));
    const double want =
        std::sqrt(ns.beta(k) * (1.0 - ns.alpha_bar(k - 1)) / (1.0 - ns.alpha_bar(k)));
    REQUIRE(ns.sigma(k) == Catch::Approx(want).margin(1e-15));
  }
}

TEST_CASE("schedule rejects bad parameters and bad indices", "[schedule]") {
  REQUIRE_THROWS_AS(NoiseSchedule::linear(0), ValidationError);
  REQUIRE_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.02), ValidationError);
  REQUIRE_THROWS_AS(NoiseSchedule::linear(10, 0.03, 0.02), ValidationError);
  REQUIRE_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 1.0), ValidationError);

  const NoiseSchedule ns = NoiseSchedule::linear(10);
  REQUIRE_THROWS_AS(ns.beta(0), ValidationError);
  REQUIRE_THROWS_AS(ns.beta(11), ValidationError);
  REQUIRE_THROWS_AS(ns.alpha_bar(11), ValidationError);
  REQUIRE_NOTHROW(NoiseSchedule::linear(1).validate());
}

// ----------------------------------------------------------------------------
// Forward process
// ----------------------------------------------------------------------------

TEST_CASE("x0 estimation inverts forward noising", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(200);
  const nn::Tensor x0 = rand_tensor({2, 5, 7}, 1);
  const nn::Tensor eps = rand_tensor({2, 5, 7}, 2);
  for (const std::size_t k : {std::size_t{1}, std::size_t{37}, std::size_t{200}}) {
    const nn::Tensor xk = forward_noise(ns, x0, eps, k);
    const nn::Tensor back = estimate_x0(ns, xk, eps, k);
    double worst = 0.0;
    for (std::size_t i = 0; i < x0.numel(); ++i)
      worst = std::max(worst, std::abs(back[i] - x0[i]));
    CAPTURE(k, worst);
    REQUIRE(worst <= 1e-12);
  }
}

TEST_CASE("forward marginals hit the scheduled mean and variance", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(1000);
  const std::size_t k = 600;
  const nn::Tensor x0 = rand_tensor({8}, 3);
  const double a = std::sqrt(ns.alpha_bar(k));
  const double var_want = 1.0 - ns.alpha_bar(k);

  const std::size_t N = 20000;
  Rng rng(4);
  std::vector<double> mean(8, 0.0), m2(8, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    nn::Tensor eps({8});
    for (auto& e : eps.v) e = rng.normal();
    const nn::Tensor xk = forward_noise(ns, x0, eps, k);
    for (std::size_t i = 0; i < 8; ++i) {
      mean[i] += xk[i];
      m2[i] += xk[i] * xk[i];
    }
  }
  for (std::size_t i = 0; i < 8; ++i) {
    mean[i] /= static_cast<double>(N);
    const double var = m2[i] / static_cast<double>(N) - mean[i] * mean[i];
    // 3-sigma bands for the MC estimates of mean and variance.
    const double mean_band = 3.0 * std::sqrt(var_want / static_cast<double>(N));
    const double var_band = 3.0 * var_want * std::sqrt(2.0 / static_cast<double>(N));
    REQUIRE(std::abs(mean[i] - a * x0[i]) <= mean_band);
    REQUIRE(std::abs(var - var_want) <= var_band);
  }
}

// ----------------------------------------------------------------------------
// Classifier-free mixing
// ----------------------------------------------------------------------------

TEST_CASE("classifier-free mixing endpoints and linear midpoint", "[diffusion]") {
  const nn::DenoiserConfig cfg = tiny_config();
  const nn::ParamStore store = live_model(cfg, 10);
  const nn::Tensor x = rand_tensor({1, 7, 9}, 5);
  const nn::Tensor cond = rand_tensor({2, 7, 9}, 6);
  const nn::Tensor null_cond({2, 7, 9});
  const std::size_t k = 13;

  const nn::Tensor with = nn::denoiser_infer(cfg, store, x, cond, k);
  const nn::Tensor without = nn::denoiser_infer(cfg, store, x, null_cond, k);
  const nn::Tensor at1 = cfg_epsilon(cfg, store, x, cond, k, 1.0);
  const nn::Tensor at0 = cfg_epsilon(cfg, store, x, cond, k, 0.0);
  const nn::Tensor mid = cfg_epsilon(cfg, store, x, cond, k, 0.5);

  double d_with = 0.0, d_without = 0.0, d_mid = 0.0, span = 0.0;
  for (std::size_t i = 0; i < with.numel(); ++i) {
    d_with = std::max(d_with, std::abs(at1[i] - with[i]));
    d_without = std::max(d_without, std::abs(at0[i] - without[i]));
    d_mid = std::max(d_mid, std::abs(mid[i] - 0.5 * (with[i] + without[i])));
    span = std::max(span, std::abs(with[i] - without[i]));
  }
  REQUIRE(d_with == 0.0);
  REQUIRE(d_without == 0.0);
  REQUIRE(d_mid <= 1e-14);
  REQUIRE(span > 1e-8);  // conditioning actually reaches the output

  REQUIRE_THROWS_AS(cfg_epsilon(cfg, store, x, cond, k, 1.5), ValidationError);
  REQUIRE_THROWS_AS(cfg_epsilon(cfg, store, x, cond, k, -0.1), ValidationError);
}

// ----------------------------------------------------------------------------
// Training objective
// ----------------------------------------------------------------------------

TEST_CASE("zero predictor training loss averages the element count", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(100);
  const nn::DenoiserConfig cfg = tiny_config();
  nn::ParamStore store = nn::init_denoiser(cfg, 20);  // zero head => eps_hat == 0

  const std::vector<nn::Tensor> x0s = {rand_tensor({1, 7, 9}, 30),
                                       rand_tensor({1, 7, 9}, 31),
                                       rand_tensor({1, 7, 9}, 32),
                                       rand_tensor({1, 7, 9}, 33)};
  const std::vector<nn::Tensor> conds = {rand_tensor({2, 7, 9}, 40),
                                         rand_tensor({2, 7, 9}, 41),
                                         rand_tensor({2, 7, 9}, 42),
                                         rand_tensor({2, 7, 9}, 43)};
  Rng rng(50);
  double acc = 0.0;
  const int steps = 100;
  for (int it = 0; it < steps; ++it) {
    acc += diffusion_train_step(ns, cfg, store, x0s, conds, 0.1, rng);
    store.zero_grads();
  }
  const double expect = 63.0;  // 1 channel x 7 x 9
  REQUIRE(acc / steps == Catch::Approx(expect).epsilon(0.05));

  REQUIRE_THROWS_AS(diffusion_train_step(ns, cfg, store, x0s, {}, 0.1, rng),
                    ValidationError);
  REQUIRE_THROWS_AS(diffusion_train_step(ns, cfg, store, x0s, conds, 1.0, rng),
                    ValidationError);
}

TEST_CASE("a few optimizer steps reduce the denoising loss", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(100);
  const nn::DenoiserConfig cfg = tiny_config();
  nn::ParamStore store = nn::init_denoiser(cfg, 21);
  const std::vector<nn::Tensor> x0s = {rand_tensor({1, 7, 9}, 60),
                                       rand_tensor({1, 7, 9}, 61)};
  const std::vector<nn::Tensor> conds = {rand_tensor({2, 7, 9}, 62),
                                         rand_tensor({2, 7, 9}, 63)};
  Rng rng(70);
  nn::AdamConfig opt;
  opt.lr = 2e-3;
  double first_window = 0.0, last_window = 0.0;
  const int steps = 120;
  for (int it = 0; it < steps; ++it) {
    const double loss = diffusion_train_step(ns, cfg, store, x0s, conds, 0.1, rng);
    nn::adam_step(store, opt);
    if (it < 20) first_window += loss;
    if (it >= steps - 20) last_window += loss;
  }
  REQUIRE(last_window < first_window);
}

// ----------------------------------------------------------------------------
// Samplers
// ----------------------------------------------------------------------------

TEST_CASE("full-length subsampled sampling at eta 1 matches ancestral sampling",
          "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(40);
  const nn::DenoiserConfig cfg = tiny_config();
  const nn::ParamStore store = live_model(cfg, 80);
  const nn::Tensor cond = rand_tensor({2, 7, 9}, 81);

  SampleConfig ddpm;
  ddpm.kind = SamplerKind::kDdpm;
  SampleConfig ddim;
  ddim.kind = SamplerKind::kDdim;
  ddim.ddim_steps = 40;
  ddim.eta = 1.0;

  Rng r1(90), r2(90);
  const nn::Tensor a = sample(ns, cfg, store, cond, {1, 7, 9}, ddpm, r1);
  const nn::Tensor b = sample(ns, cfg, store, cond, {1, 7, 9}, ddim, r2);
  REQUIRE(wavediff::rel_l2(a.v, b.v) <= 1e-10);
}

TEST_CASE("sampling is reproducible and eta changes the path", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(40);
  const nn::DenoiserConfig cfg = tiny_config();
  const nn::ParamStore store = live_model(cfg, 82);
  const nn::Tensor cond = rand_tensor({2, 7, 9}, 83);

  SampleConfig det;
  det.kind = SamplerKind::kDdim;
  det.ddim_steps = 10;
  det.eta = 0.0;
  Rng r1(91), r2(91), r3(91);
  const nn::Tensor a = sample(ns, cfg, store, cond, {1, 7, 9}, det, r1);
  const nn::Tensor b = sample(ns, cfg, store, cond, {1, 7, 9}, det, r2);
  REQUIRE(std::equal(a.v.begin(), a.v.end(), b.v.begin()));

  SampleConfig noisy = det;
  noisy.eta = 1.0;
  const nn::Tensor c = sample(ns, cfg, store, cond, {1, 7, 9}, noisy, r3);
  REQUIRE(wavediff::rel_l2(a.v, c.v) > 1e-6);
}

TEST_CASE("sampler configuration is validated", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(40);
  const nn::DenoiserConfig cfg = tiny_config();
  const nn::ParamStore store = nn::init_denoiser(cfg, 84);
  const nn::Tensor cond({2, 7, 9});
  Rng rng(92);

  SampleConfig sc;
  sc.eta = 1.5;
  REQUIRE_THROWS_AS(sample(ns, cfg, store, cond, {1, 7, 9}, sc, rng), ValidationError);
  sc = SampleConfig{};
  sc.cfg_weight = 2.0;
  REQUIRE_THROWS_AS(sample(ns, cfg, store, cond, {1, 7, 9}, sc, rng), ValidationError);
  sc = SampleConfig{};
  sc.kind = SamplerKind::kDdim;
  sc.ddim_steps = 1;
  REQUIRE_THROWS_AS(sample(ns, cfg, store, cond, {1, 7, 9}, sc, rng), ValidationError);
  sc = SampleConfig{};
  sc.kind = SamplerKind::kDdim;
  sc.ddim_steps = 41;
  REQUIRE_THROWS_AS(sample(ns, cfg, store, cond, {1, 7, 9}, sc, rng), ValidationError);
  sc = SampleConfig{};
  sc.guidance_weight = 1.0;  // no objective supplied
  REQUIRE_THROWS_AS(sample(ns, cfg, store, cond, {1, 7, 9}, sc, rng), ValidationError);
}

TEST_CASE("objective guidance pulls samples toward the target", "[diffusion]") {
  const NoiseSchedule ns = NoiseSchedule::linear(30);
  const nn::DenoiserConfig cfg = tiny_config();
  // Zero predictor: the reverse process is pure noise shaping, so the
  // objective gradient is the only systematic drift.
  const nn::ParamStore store = nn::init_denoiser(cfg, 85);
  const nn::Tensor cond = rand_tensor({2, 7, 9}, 86);
  const nn::Tensor target = rand_tensor({1, 7, 9}, 87, 0.5);

  const wavediff::ObjectiveGrad pull = [&target](const nn::Tensor& x0_hat) {
    nn::Tensor g(x0_hat.dims);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] = 2.0 * (x0_hat[i] - target[i]);
    return g;
  };

  for (const SamplerKind kind : {SamplerKind::kDdpm, SamplerKind::kDdim}) {
    SampleConfig plain;
    plain.kind = kind;
    plain.ddim_steps = 15;
    SampleConfig guided = plain;
    guided.guidance_weight = 0.4;

    Rng r1(93), r2(93);
    const nn::Tensor free_run = sample(ns, cfg, store, cond, {1, 7, 9}, plain, r1);
    const nn::Tensor pulled = sample(ns, cfg, store, cond, {1, 7, 9}, guided, r2, pull);
    CAPTURE(static_cast<int>(kind));
    REQUIRE(dist2(pulled, target) < dist2(free_run, target));
  }
}

TEST_CASE("guidance strength ramps from zero with a cosine profile", "[diffusion]") {
  const std::size_t K = 100;
  REQUIRE(wavediff::detail::guidance_scale(2.0, K, K) == 0.0);
  const double near_end = wavediff::detail::guidance_scale(2.0, 1, K);
  REQUIRE(near_end > 1.99);
  REQUIRE(near_end <= 2.0);
  // Monotone increase as k runs down.
  double prev = 0.0;
  for (std::size_t k = K; k >= 1; --k) {
    const double s = wavediff::detail::guidance_scale(2.0, k, K);
    REQUIRE(s >= prev);
    prev = s;
  }
}

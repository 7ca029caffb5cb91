#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavediff/autodiff.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/param_store.hpp"
#include "wavediff/rng.hpp"

namespace wavediff::nn {

// ============================================================================
// Convolutional encoder-decoder noise predictor.
//
// Input is the channel concatenation of the noisy target and the condition
// tensor; the diffusion step k enters through a sinusoidal embedding, an MLP,
// and a per-resblock channel bias. Stage i runs at width base_width *
// channel_mult[i]; stages are joined by stride-2 convolutions down and
// nearest-2x upsampling (cropped to the skip's odd sizes) up, with skip
// concatenation. The conv output is centered per channel and a global-mean
// bypass supplies each channel's mean from the input channel means and the
// step embedding. The output head and the bypass output layer are
// zero-initialized so training starts from the zero predictor.
// ============================================================================

struct DenoiserConfig {
  std::size_t in_channels = 4;   // generated channels (noise prediction target)
  std::size_t cond_channels = 7; // conditioning channels, incl. the realness flag
  std::size_t base_width = 32;
  std::size_t depth = 2;
  std::vector<std::size_t> channel_mult = {1, 2};
  std::size_t norm_groups = 8;
  std::size_t time_embed_dim = 64;
  bool attention = false;

  void validate() const {
    require(in_channels >= 1 && cond_channels >= 1, "denoiser: need data and cond channels");
    require(depth >= 1, "denoiser: depth must be >= 1");
    require(channel_mult.size() == depth, "denoiser: one channel multiplier per stage");
    for (std::size_t m : channel_mult) require(m >= 1, "denoiser: multipliers must be >= 1");
    require(norm_groups >= 1 && base_width % norm_groups == 0,
            "denoiser: base width must divide into norm groups");
    require(time_embed_dim >= 4 && time_embed_dim % 2 == 0,
            "denoiser: time embedding dim must be even and >= 4");
  }

  [[nodiscard]] std::size_t width(std::size_t stage) const {
    return base_width * channel_mult[stage];
  }

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"in_channels", in_channels},   {"cond_channels", cond_channels},
            {"base_width", base_width},     {"depth", depth},
            {"channel_mult", channel_mult}, {"norm_groups", norm_groups},
            {"time_embed_dim", time_embed_dim}, {"attention", attention}};
  }

  static DenoiserConfig from_json(const nlohmann::json& j) {
    DenoiserConfig c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.cond_channels = j.at("cond_channels").get<std::size_t>();
    c.base_width = j.at("base_width").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.channel_mult = j.at("channel_mult").get<std::vector<std::size_t>>();
    c.norm_groups = j.at("norm_groups").get<std::size_t>();
    c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
    c.attention = j.at("attention").get<bool>();
    c.validate();
    return c;
  }
};

// ----------------------------------------------------------------------------
// Initialization
// ----------------------------------------------------------------------------

namespace detail {

inline Tensor random_tensor(std::vector<std::size_t> dims, double stdev, Rng rng) {
  Tensor t(std::move(dims));
  for (auto& x : t.v) x = stdev * rng.normal();
  return t;
}

inline Tensor const_tensor(std::vector<std::size_t> dims, double value) {
  Tensor t(std::move(dims));
  std::fill(t.v.begin(), t.v.end(), value);
  return t;
}

/// Each parameter draws from its own named stream, so init is independent of
/// registration order.
struct ParamInit {
  ParamStore& store;
  Rng master;

  void conv(const std::string& name, std::size_t co, std::size_t ci, std::size_t k) {
    const double stdev = std::sqrt(2.0 / static_cast<double>(ci * k * k));
    store.add(name + ".w", random_tensor({co, ci, k, k}, stdev, master.stream(name + ".w")));
    store.add(name + ".b", Tensor({co}));
  }
  void conv_zero(const std::string& name, std::size_t co, std::size_t ci, std::size_t k) {
    store.add(name + ".w", Tensor({co, ci, k, k}));
    store.add(name + ".b", Tensor({co}));
  }
  void norm(const std::string& name, std::size_t c) {
    store.add(name + ".g", const_tensor({c}, 1.0));
    store.add(name + ".b", Tensor({c}));
  }
  void dense(const std::string& name, std::size_t m, std::size_t n) {
    const double stdev = std::sqrt(1.0 / static_cast<double>(n));
    store.add(name + ".w", random_tensor({m, n}, stdev, master.stream(name + ".w")));
    store.add(name + ".b", Tensor({m}));
  }
  void dense_zero(const std::string& name, std::size_t m, std::size_t n) {
    store.add(name + ".w", Tensor({m, n}));
    store.add(name + ".b", Tensor({m}));
  }
  void res_block(const std::string& p, std::size_t cin, std::size_t cout,
                 std::size_t temb_dim) {
    norm(p + ".n1", cin);
    conv(p + ".c1", cout, cin, 3);
    dense(p + ".emb", cout, temb_dim);
    norm(p + ".n2", cout);
    conv(p + ".c2", cout, cout, 3);
    if (cin != cout) conv(p + ".sc", cout, cin, 1);
  }
};

}  // namespace detail

inline ParamStore init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  detail::ParamInit init{store, Rng(seed)};
  const std::size_t D = cfg.time_embed_dim;

  init.dense("temb.fc1", D, D);
  init.dense("temb.fc2", D, D);
  init.conv("stem", cfg.width(0), cfg.in_channels + cfg.cond_channels, 3);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::size_t cin = i == 0 ? cfg.width(0) : cfg.width(i - 1);
    init.res_block("enc" + std::to_string(i), cin, cfg.width(i), D);
    if (i + 1 < cfg.depth)
      init.conv("down" + std::to_string(i), cfg.width(i), cfg.width(i), 3);
  }
  const std::size_t wmid = cfg.width(cfg.depth - 1);
  init.res_block("mid", wmid, wmid, D);
  if (cfg.attention) {
    init.norm("attn.n", wmid);
    init.conv("attn.q", wmid, wmid, 1);
    init.conv("attn.k", wmid, wmid, 1);
    init.conv("attn.v", wmid, wmid, 1);
    init.conv("attn.o", wmid, wmid, 1);
  }
  for (std::size_t i = cfg.depth - 1; i-- > 0;) {
    init.conv("dec" + std::to_string(i) + ".up", cfg.width(i), cfg.width(i + 1), 3);
    init.res_block("dec" + std::to_string(i), 2 * cfg.width(i), cfg.width(i), D);
  }
  init.norm("head.n", cfg.width(0));
  init.conv_zero("head", cfg.in_channels, cfg.width(0), 3);
  // Global-mean bypass (see denoiser_forward); the zero-initialized output
  // layer keeps the whole net starting as the zero predictor.
  init.dense("gmp.fc1", D, cfg.in_channels + cfg.cond_channels + D);
  init.dense_zero("gmp.fc2", cfg.in_channels, D);

  store.meta["denoiser"] = cfg.to_json();
  store.meta["init_seed"] = seed;
  return store;
}

// ----------------------------------------------------------------------------
// Forward graph
// ----------------------------------------------------------------------------

/// Graph leaves for one training step; shared across the batch so gradients
/// accumulate in sample order.
struct ParamLeaves {
  std::vector<std::pair<std::string, NodePtr>> leaves;

  [[nodiscard]] const NodePtr& at(const std::string& name) const {
    for (const auto& [n, node] : leaves)
      if (n == name) return node;
    throw ValidationError("param leaves: no parameter '" + name + "'");
  }
};

inline ParamLeaves make_leaves(Tape& tape, const ParamStore& store, bool trainable) {
  ParamLeaves l;
  l.leaves.reserve(store.entries().size());
  for (const auto& [name, e] : store.entries())
    l.leaves.emplace_back(name, tape.leaf(e.value, trainable));
  return l;
}

/// Add the leaves' accumulated gradients into the store's buffers.
inline void accumulate_grads(ParamStore& store, const ParamLeaves& l) {
  for (const auto& [name, node] : l.leaves) {
    auto& g = store.entry(name).grad;
    require(g.same_dims(node->grad), "accumulate_grads: shape drift");
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += node->grad[i];
  }
  store.grads_ready = true;
}

namespace detail {

inline Tensor sinusoidal_embedding(std::size_t k, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor e({dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double exponent =
        half > 1 ? static_cast<double>(i) / static_cast<double>(half - 1) : 0.0;
    const double freq = std::exp(-std::log(10000.0) * exponent);
    e[i] = std::sin(static_cast<double>(k) * freq);
    e[half + i] = std::cos(static_cast<double>(k) * freq);
  }
  return e;
}

inline NodePtr res_block(Tape& tape, const ParamLeaves& p, const std::string& prefix,
                         const NodePtr& x, const NodePtr& temb_act, std::size_t groups) {
  NodePtr h = group_norm(tape, x, p.at(prefix + ".n1.g"), p.at(prefix + ".n1.b"), groups);
  h = silu(tape, h);
  h = conv2d(tape, h, p.at(prefix + ".c1.w"), p.at(prefix + ".c1.b"), 1, 1);
  const NodePtr bias = linear(tape, temb_act, p.at(prefix + ".emb.w"), p.at(prefix + ".emb.b"));
  h = add_channel_bias(tape, h, bias);
  h = group_norm(tape, h, p.at(prefix + ".n2.g"), p.at(prefix + ".n2.b"), groups);
  h = silu(tape, h);
  h = conv2d(tape, h, p.at(prefix + ".c2.w"), p.at(prefix + ".c2.b"), 1, 1);
  const bool projected = x->val.dims[0] != h->val.dims[0];
  const NodePtr shortcut =
      projected ? conv2d(tape, x, p.at(prefix + ".sc.w"), p.at(prefix + ".sc.b"), 1, 0) : x;
  return add(tape, h, shortcut);
}

inline NodePtr attention_block(Tape& tape, const ParamLeaves& p, const NodePtr& x,
                               std::size_t groups) {
  const std::size_t C = x->val.dims[0], H = x->val.dims[1], W = x->val.dims[2];
  NodePtr a = group_norm(tape, x, p.at("attn.n.g"), p.at("attn.n.b"), groups);
  const NodePtr q = reshape(tape, conv2d(tape, a, p.at("attn.q.w"), p.at("attn.q.b"), 1, 0), {C, H * W});
  const NodePtr k = reshape(tape, conv2d(tape, a, p.at("attn.k.w"), p.at("attn.k.b"), 1, 0), {C, H * W});
  const NodePtr v = reshape(tape, conv2d(tape, a, p.at("attn.v.w"), p.at("attn.v.b"), 1, 0), {C, H * W});
  const NodePtr scores = scale(tape, matmul_tn(tape, q, k), 1.0 / std::sqrt(static_cast<double>(C)));
  const NodePtr weights = softmax_rows(tape, scores);
  NodePtr o = reshape(tape, matmul_nt(tape, v, weights), {C, H, W});
  o = conv2d(tape, o, p.at("attn.o.w"), p.at("attn.o.b"), 1, 0);
  return add(tape, x, o);
}

}  // namespace detail

/// Build the prediction graph for one sample. x_noisy [in_channels,H,W] and
/// cond [cond_channels,H,W] must agree spatially; k >= 1 (its upper bound is
/// the noise schedule's business).
inline NodePtr denoiser_forward(Tape& tape, const DenoiserConfig& cfg,
                                const ParamLeaves& params, const Tensor& x_noisy,
                                const Tensor& cond, std::size_t k) {
  require(x_noisy.dims.size() == 3 && x_noisy.dims[0] == cfg.in_channels,
          "denoiser: x_noisy must be [in_channels,H,W]");
  require(cond.dims.size() == 3 && cond.dims[0] == cfg.cond_channels,
          "denoiser: cond must be [cond_channels,H,W]");
  require(cond.dims[1] == x_noisy.dims[1] && cond.dims[2] == x_noisy.dims[2],
          "denoiser: cond and x_noisy must agree spatially");
  require(k >= 1, "denoiser: diffusion step k must be >= 1");

  NodePtr temb = tape.leaf(detail::sinusoidal_embedding(k, cfg.time_embed_dim), false);
  temb = linear(tape, temb, params.at("temb.fc1.w"), params.at("temb.fc1.b"));
  temb = silu(tape, temb);
  temb = linear(tape, temb, params.at("temb.fc2.w"), params.at("temb.fc2.b"));
  const NodePtr temb_act = silu(tape, temb);

  const NodePtr xin = concat_channels(tape, tape.leaf(x_noisy, false), tape.leaf(cond, false));
  NodePtr h = conv2d(tape, xin, params.at("stem.w"), params.at("stem.b"), 1, 1);

  std::vector<NodePtr> skips;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    h = detail::res_block(tape, params, "enc" + std::to_string(i), h, temb_act,
                          cfg.norm_groups);
    if (i + 1 < cfg.depth) {
      skips.push_back(h);
      h = conv2d(tape, h, params.at("down" + std::to_string(i) + ".w"),
                 params.at("down" + std::to_string(i) + ".b"), 2, 1);
    }
  }

  h = detail::res_block(tape, params, "mid", h, temb_act, cfg.norm_groups);
  if (cfg.attention) h = detail::attention_block(tape, params, h, cfg.norm_groups);

  for (std::size_t i = cfg.depth - 1; i-- > 0;) {
    const NodePtr& skip = skips[i];
    h = upsample_nearest2x(tape, h, skip->val.dims[1], skip->val.dims[2]);
    h = conv2d(tape, h, params.at("dec" + std::to_string(i) + ".up.w"),
               params.at("dec" + std::to_string(i) + ".up.b"), 1, 1);
    h = concat_channels(tape, h, skip);
    h = detail::res_block(tape, params, "dec" + std::to_string(i), h, temb_act,
                          cfg.norm_groups);
  }

  h = group_norm(tape, h, params.at("head.n.g"), params.at("head.n.b"), cfg.norm_groups);
  h = silu(tape, h);
  h = conv2d(tape, h, params.at("head.w"), params.at("head.b"), 1, 1);

  // Global-mean bypass. The normalization layers attenuate each field's
  // spatial mean, yet reversing the diffusion must track that mean exactly or
  // samples drift. The conv output is centered per channel and the mean is
  // owned exclusively by a small MLP fed the input channel means and the step
  // embedding, so the mean path never fights the texture path.
  h = add_channel_bias(tape, h, scale(tape, channel_means(tape, h), -1.0));
  NodePtr dc = concat_vec(tape, channel_means(tape, xin), temb_act);
  dc = linear(tape, dc, params.at("gmp.fc1.w"), params.at("gmp.fc1.b"));
  dc = silu(tape, dc);
  dc = linear(tape, dc, params.at("gmp.fc2.w"), params.at("gmp.fc2.b"));
  return add_channel_bias(tape, h, dc);
}

/// Gradient-free convenience forward.
inline Tensor denoiser_infer(const DenoiserConfig& cfg, const ParamStore& store,
                             const Tensor& x_noisy, const Tensor& cond, std::size_t k) {
  Tape tape;
  const ParamLeaves leaves = make_leaves(tape, store, false);
  return denoiser_forward(tape, cfg, leaves, x_noisy, cond, k)->val;
}

}  // namespace wavediff::nn

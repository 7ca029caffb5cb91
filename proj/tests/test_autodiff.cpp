#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "wavediff/autodiff.hpp"
#include "wavediff/errors.hpp"
#include "wavediff/rng.hpp"

using wavediff::Rng;
using wavediff::ValidationError;
using namespace wavediff::nn;

namespace {

Tensor rand_tensor(std::vector<std::size_t> dims, std::uint64_t seed, double spread = 1.0) {
  Tensor t(std::move(dims));
  Rng rng(seed);
  for (auto& x : t.v) x = spread * rng.normal();
  return t;
}

template <typename Build>
double eval_loss(const std::vector<Tensor>& inputs, const Build& build) {
  Tape tape;
  std::vector<NodePtr> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, false));
  const NodePtr loss = build(tape, leaves);
  return loss->val[0];
}

/// Central-difference check of every input coordinate against the tape sweep.
template <typename Build>
double gradcheck(std::vector<Tensor> inputs, const Build& build, double h = 1e-5) {
  Tape tape;
  std::vector<NodePtr> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, true));
  const NodePtr loss = build(tape, leaves);
  REQUIRE(loss->val.numel() == 1);
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double keep = inputs[i][j];
      inputs[i][j] = keep + h;
      const double up = eval_loss(inputs, build);
      inputs[i][j] = keep - h;
      const double dn = eval_loss(inputs, build);
      inputs[i][j] = keep;
      const double numeric = (up - dn) / (2.0 * h);
      const double analytic = leaves[i]->grad[j];
      const double err = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(analytic), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

// ----------------------------------------------------------------------------
// Elementwise and shape ops
// ----------------------------------------------------------------------------

TEST_CASE("add, scale, silu, reshape gradients match finite differences", "[autodiff]") {
  const Tensor target = rand_tensor({4, 6}, 99);
  const double worst = gradcheck(
      {rand_tensor({2, 3, 4}, 1), rand_tensor({2, 3, 4}, 2)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        NodePtr s = add(t, in[0], silu(t, scale(t, in[1], 0.7)));
        s = reshape(t, s, {4, 6});
        return sum_squared_diff(t, s, target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("channel bias and concat gradients match finite differences", "[autodiff]") {
  const Tensor target = rand_tensor({5, 3, 3}, 98);
  const double worst = gradcheck(
      {rand_tensor({2, 3, 3}, 3), rand_tensor({2}, 4), rand_tensor({3, 3, 3}, 5)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        const NodePtr biased = add_channel_bias(t, in[0], in[1]);
        return sum_squared_diff(t, concat_channels(t, biased, in[2]), target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("channel means reduce exactly and backpropagate", "[autodiff]") {
  Tape tape;
  Tensor x({2, 1, 3}, {1.0, 2.0, 3.0, -4.0, 0.0, 1.0});
  const NodePtr m = channel_means(tape, tape.leaf(x, false));
  REQUIRE(m->val.dims == std::vector<std::size_t>{2});
  REQUIRE(m->val[0] == Catch::Approx(2.0));
  REQUIRE(m->val[1] == Catch::Approx(-1.0));

  const Tensor target = rand_tensor({5}, 95);
  const double worst = gradcheck(
      {rand_tensor({3, 2, 4}, 9), rand_tensor({2}, 10)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        const NodePtr v = concat_vec(t, channel_means(t, in[0]), in[1]);
        return sum_squared_diff(t, v, target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("vector concat preserves order and rejects higher ranks", "[autodiff]") {
  Tape tape;
  const NodePtr a = tape.leaf(Tensor({2}, {1.0, 2.0}), false);
  const NodePtr b = tape.leaf(Tensor({3}, {5.0, 6.0, 7.0}), false);
  const NodePtr c = concat_vec(tape, a, b);
  REQUIRE(c->val.dims == std::vector<std::size_t>{5});
  REQUIRE(c->val[0] == 1.0);
  REQUIRE(c->val[2] == 5.0);
  REQUIRE(c->val[4] == 7.0);

  const NodePtr mat = tape.leaf(rand_tensor({2, 2}, 11), false);
  REQUIRE_THROWS_AS(concat_vec(tape, a, mat), ValidationError);
  REQUIRE_THROWS_AS(channel_means(tape, mat), ValidationError);
}

TEST_CASE("nearest-2x upsampling replicates values and backpropagates", "[autodiff]") {
  Tape tape;
  Tensor x({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  const NodePtr up = upsample_nearest2x(tape, tape.leaf(x, false), 4, 4);
  REQUIRE(up->val.dims == std::vector<std::size_t>{1, 4, 4});
  REQUIRE(up->val[0] == 1.0);
  REQUIRE(up->val[1] == 1.0);
  REQUIRE(up->val[2] == 2.0);
  REQUIRE(up->val[5] == 1.0);
  REQUIRE(up->val[15] == 4.0);

  for (const std::size_t ht : {std::size_t{6}, std::size_t{5}}) {
    const Tensor target = rand_tensor({2, ht, 5}, 97 + ht);
    const double worst = gradcheck(
        {rand_tensor({2, 3, 3}, 6)},
        [&target, ht](Tape& t, const std::vector<NodePtr>& in) {
          return sum_squared_diff(t, upsample_nearest2x(t, in[0], ht, 5), target);
        });
    CAPTURE(ht, worst);
    REQUIRE(worst <= 1e-6);
  }
}

TEST_CASE("rejects rank or size violations", "[autodiff]") {
  Tape tape;
  const NodePtr a = tape.leaf(rand_tensor({2, 3, 3}, 7), false);
  const NodePtr b = tape.leaf(rand_tensor({2, 3, 4}, 8), false);
  REQUIRE_THROWS_AS(add(tape, a, b), ValidationError);
  REQUIRE_THROWS_AS(reshape(tape, a, {5, 4}), ValidationError);
  REQUIRE_THROWS_AS(upsample_nearest2x(tape, a, 9, 6), ValidationError);
  REQUIRE_THROWS_AS(tape.backward(a), ValidationError);
}

// ----------------------------------------------------------------------------
// Dense, convolution, normalization
// ----------------------------------------------------------------------------

TEST_CASE("linear layer gradients match finite differences", "[autodiff]") {
  const Tensor target = rand_tensor({4}, 96);
  const double worst = gradcheck(
      {rand_tensor({5}, 9), rand_tensor({4, 5}, 10), rand_tensor({4}, 11)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        return sum_squared_diff(t, linear(t, in[0], in[1], in[2]), target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("1x1 convolution reproduces an affine map", "[autodiff]") {
  Tape tape;
  Tensor x({1, 2, 2}, {1.0, -2.0, 0.5, 3.0});
  Tensor w({1, 1, 1, 1}, {2.0});
  Tensor b({1}, {0.25});
  const NodePtr out = conv2d(tape, tape.leaf(x, false), tape.leaf(w, false),
                             tape.leaf(b, false), 1, 0);
  REQUIRE(out->val.dims == std::vector<std::size_t>{1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i)
    REQUIRE(out->val[i] == Catch::Approx(2.0 * x[i] + 0.25).margin(1e-14));
}

TEST_CASE("convolution gradients match finite differences", "[autodiff]") {
  struct Case {
    std::size_t stride, pad, h, w, oh, ow;
  };
  for (const Case c : {Case{1, 1, 5, 4, 5, 4}, Case{2, 1, 5, 5, 3, 3}}) {
    const Tensor target = rand_tensor({3, c.oh, c.ow}, 95 + c.stride);
    const double worst = gradcheck(
        {rand_tensor({2, c.h, c.w}, 12), rand_tensor({3, 2, 3, 3}, 13, 0.4),
         rand_tensor({3}, 14)},
        [&target, c](Tape& t, const std::vector<NodePtr>& in) {
          return sum_squared_diff(t, conv2d(t, in[0], in[1], in[2], c.stride, c.pad),
                                  target);
        });
    CAPTURE(c.stride, worst);
    REQUIRE(worst <= 1e-6);
  }

  // 1x1 projection path (shortcuts, attention projections).
  const Tensor target = rand_tensor({2, 4, 4}, 94);
  const double worst = gradcheck(
      {rand_tensor({3, 4, 4}, 15), rand_tensor({2, 3, 1, 1}, 16), rand_tensor({2}, 17)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        return sum_squared_diff(t, conv2d(t, in[0], in[1], in[2], 1, 0), target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-6);
}

TEST_CASE("group norm standardizes each group and backpropagates", "[autodiff]") {
  Tape tape;
  const Tensor x = rand_tensor({4, 3, 5}, 18, 2.5);
  Tensor gamma({4});
  std::fill(gamma.v.begin(), gamma.v.end(), 1.0);
  Tensor beta({4});
  const NodePtr out = group_norm(tape, tape.leaf(x, false), tape.leaf(gamma, false),
                                 tape.leaf(beta, false), 2);
  const std::size_t group_elems = 2 * 3 * 5;
  for (std::size_t g = 0; g < 2; ++g) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < group_elems; ++i) mean += out->val[g * group_elems + i];
    mean /= static_cast<double>(group_elems);
    for (std::size_t i = 0; i < group_elems; ++i) {
      const double d = out->val[g * group_elems + i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(group_elems);
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(var == Catch::Approx(1.0).epsilon(1e-3));
  }

  const Tensor target = rand_tensor({4, 2, 3}, 93);
  const double worst = gradcheck(
      {rand_tensor({4, 2, 3}, 19), rand_tensor({4}, 20), rand_tensor({4}, 21)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        return sum_squared_diff(t, group_norm(t, in[0], in[1], in[2], 2), target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-5);

  Tape bad;
  REQUIRE_THROWS_AS(group_norm(bad, bad.leaf(rand_tensor({3, 2, 2}, 22), false),
                               bad.leaf(Tensor({3}), false), bad.leaf(Tensor({3}), false),
                               2),
                    ValidationError);
}

// ----------------------------------------------------------------------------
// Attention building blocks
// ----------------------------------------------------------------------------

TEST_CASE("softmax rows are normalized and the attention chain backpropagates",
          "[autodiff]") {
  Tape tape;
  const NodePtr sm = softmax_rows(tape, tape.leaf(rand_tensor({3, 5}, 23, 3.0), false));
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 5; ++c) s += sm->val[r * 5 + c];
    REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
  }

  const Tensor target = rand_tensor({2, 5}, 92);
  const double worst = gradcheck(
      {rand_tensor({2, 5}, 24), rand_tensor({2, 4}, 25), rand_tensor({2, 4}, 26)},
      [&target](Tape& t, const std::vector<NodePtr>& in) {
        const NodePtr scores = scale(t, matmul_tn(t, in[0], in[1]), 1.0 / std::sqrt(2.0));
        const NodePtr weights = softmax_rows(t, scores);
        return sum_squared_diff(t, matmul_nt(t, in[2], weights), target);
      });
  CAPTURE(worst);
  REQUIRE(worst <= 1e-6);
}

// ----------------------------------------------------------------------------
// Reductions and graph mechanics
// ----------------------------------------------------------------------------

TEST_CASE("sum reductions backpropagate", "[autodiff]") {
  const double worst_sum = gradcheck(
      {rand_tensor({3, 4}, 27)}, [](Tape& t, const std::vector<NodePtr>& in) {
        return sum_all(t, silu(t, in[0]));
      });
  REQUIRE(worst_sum <= 1e-6);

  const Tensor target = rand_tensor({3, 4}, 91);
  const double worst_sq = gradcheck(
      {rand_tensor({3, 4}, 28)}, [&target](Tape& t, const std::vector<NodePtr>& in) {
        return sum_squared_diff(t, in[0], target);
      });
  REQUIRE(worst_sq <= 1e-6);
}

TEST_CASE("gradients accumulate across a shared-leaf batch graph", "[autodiff]") {
  const Tensor w0 = rand_tensor({3, 5}, 29);
  const Tensor b0 = rand_tensor({3}, 30);
  const std::vector<Tensor> xs = {rand_tensor({5}, 31), rand_tensor({5}, 32)};
  const std::vector<Tensor> targets = {rand_tensor({3}, 33), rand_tensor({3}, 34)};

  // Separate single-sample runs.
  std::vector<double> separate(w0.numel(), 0.0);
  for (std::size_t s = 0; s < 2; ++s) {
    Tape tape;
    const NodePtr w = tape.leaf(w0, true);
    const NodePtr b = tape.leaf(b0, true);
    const NodePtr loss =
        sum_squared_diff(tape, linear(tape, tape.leaf(xs[s], false), w, b), targets[s]);
    tape.backward(loss);
    for (std::size_t i = 0; i < separate.size(); ++i) separate[i] += w->grad[i];
  }

  // One graph with both samples sharing the parameter leaves.
  Tape tape;
  const NodePtr w = tape.leaf(w0, true);
  const NodePtr b = tape.leaf(b0, true);
  NodePtr total;
  for (std::size_t s = 0; s < 2; ++s) {
    const NodePtr loss =
        sum_squared_diff(tape, linear(tape, tape.leaf(xs[s], false), w, b), targets[s]);
    total = total ? add(tape, total, loss) : loss;
  }
  tape.backward(total);

  for (std::size_t i = 0; i < separate.size(); ++i)
    REQUIRE(w->grad[i] == Catch::Approx(separate[i]).margin(1e-12));
}

TEST_CASE("constant leaves and detached branches receive no gradient", "[autodiff]") {
  Tape tape;
  const NodePtr x = tape.leaf(rand_tensor({4}, 35), false);
  const NodePtr w = tape.leaf(rand_tensor({4}, 36), true);
  const NodePtr unused = tape.leaf(rand_tensor({4}, 37), true);
  const NodePtr loss = sum_squared_diff(tape, add(tape, x, w), Tensor({4}));
  tape.backward(loss);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(x->grad[i] == 0.0);
    REQUIRE(unused->grad[i] == 0.0);
    REQUIRE(w->grad[i] != 0.0);
  }
}

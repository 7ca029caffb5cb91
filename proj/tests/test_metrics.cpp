#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "test_support.hpp"
#include "wavediff/metrics.hpp"

using namespace wavediff;

TEST_CASE("hand-checkable metric values", "[metrics]") {
  GridTensor pred({4}, {AxisRole::kSpace});
  GridTensor truth({4}, {AxisRole::kSpace});
  for (std::size_t i = 0; i < 4; ++i) truth[i] = 1.0;
  pred[0] = 1.0;
  pred[1] = 2.0;   // err 1
  pred[2] = 0.5;   // err -0.5
  pred[3] = 1.0;

  const Metrics m = compute_metrics(pred, truth);
  CHECK(m.mse == Catch::Approx((1.0 + 0.25) / 4.0));
  CHECK(m.mae == Catch::Approx(1.5 / 4.0));
  CHECK(m.linf == Catch::Approx(1.0));
  CHECK(m.rel_l2 == Catch::Approx(std::sqrt(1.25 / 4.0)));
}

TEST_CASE("metrics agree with a naive double loop on a 81x120 pair", "[metrics]") {
  auto pred = testsupport::random_tensor({81, 120}, {AxisRole::kTime, AxisRole::kSpace}, 5);
  auto truth = testsupport::random_tensor({81, 120}, {AxisRole::kTime, AxisRole::kSpace}, 6);

  for (bool exclude : {false, true}) {
    double sq = 0, ab = 0, mx = 0, ref = 0;
    std::size_t count = 0;
    for (std::size_t t = exclude ? 1 : 0; t < 81; ++t)
      for (std::size_t x = 0; x < 120; ++x) {
        const double d = pred.at({t, x}) - truth.at({t, x});
        sq += d * d;
        ab += std::abs(d);
        mx = std::max(mx, std::abs(d));
        ref += truth.at({t, x}) * truth.at({t, x});
        ++count;
      }
    const Metrics m = compute_metrics(pred, truth, exclude);
    CHECK(m.mse == Catch::Approx(sq / count).epsilon(1e-12));
    CHECK(m.mae == Catch::Approx(ab / count).epsilon(1e-12));
    CHECK(m.linf == Catch::Approx(mx).epsilon(1e-12));
    CHECK(m.rel_l2 == Catch::Approx(std::sqrt(sq / ref)).epsilon(1e-12));
  }
}

TEST_CASE("identical tensors give identically zero metrics", "[metrics]") {
  auto t = testsupport::random_tensor({5, 6}, {AxisRole::kTime, AxisRole::kSpace}, 7);
  const Metrics m = compute_metrics(t, t, true);
  CHECK(m.mse == 0.0);
  CHECK(m.mae == 0.0);
  CHECK(m.linf == 0.0);
  CHECK(m.rel_l2 == 0.0);
}

TEST_CASE("metric reductions are layout-uniform", "[metrics]") {
  // Permuting paired entries must not change any metric: no entry is weighted
  // differently from another.
  auto pred = testsupport::random_tensor({3, 8}, {AxisRole::kTime, AxisRole::kSpace}, 8);
  auto truth = testsupport::random_tensor({3, 8}, {AxisRole::kTime, AxisRole::kSpace}, 9);
  const Metrics base = compute_metrics(pred, truth);

  GridTensor pred2 = pred, truth2 = truth;
  std::swap(pred2[3], pred2[20]);
  std::swap(truth2[3], truth2[20]);
  const Metrics perm = compute_metrics(pred2, truth2);
  CHECK(perm.mse == Catch::Approx(base.mse).epsilon(1e-15));
  CHECK(perm.mae == Catch::Approx(base.mae).epsilon(1e-15));
  CHECK(perm.linf == base.linf);
  CHECK(perm.rel_l2 == Catch::Approx(base.rel_l2).epsilon(1e-15));
}

TEST_CASE("exclude_initial requirements", "[metrics]") {
  GridTensor no_time({4}, {AxisRole::kSpace});
  CHECK_THROWS_AS(compute_metrics(no_time, no_time, true), ValidationError);

  GridTensor one_step({1, 4}, {AxisRole::kTime, AxisRole::kSpace});
  CHECK_THROWS_AS(compute_metrics(one_step, one_step, true), ValidationError);

  // The t=0 slice must not contribute: corrupt it and check invariance.
  auto pred = testsupport::random_tensor({4, 5}, {AxisRole::kTime, AxisRole::kSpace}, 10);
  auto truth = testsupport::random_tensor({4, 5}, {AxisRole::kTime, AxisRole::kSpace}, 11);
  const Metrics before = compute_metrics(pred, truth, true);
  for (std::size_t x = 0; x < 5; ++x) pred.at({0, x}) = 1e9;
  const Metrics after = compute_metrics(pred, truth, true);
  CHECK(after.mse == before.mse);
  CHECK(after.linf == before.linf);
}

TEST_CASE("shape mismatch and degenerate references are rejected", "[metrics]") {
  GridTensor a({3}, {AxisRole::kSpace});
  GridTensor b({4}, {AxisRole::kSpace});
  CHECK_THROWS_AS(compute_metrics(a, b), ValidationError);

  GridTensor zero({3}, {AxisRole::kSpace});
  GridTensor pred({3}, {AxisRole::kSpace});
  pred[0] = 1.0;
  CHECK_THROWS_AS(compute_metrics(pred, zero), NumericalError);
  CHECK(compute_metrics(zero, zero).rel_l2 == 0.0);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "wavediff/errors.hpp"
#include "wavediff/grid_tensor.hpp"

namespace wavediff {

// ============================================================================
// Error metrics between a prediction and a reference on identical grids.
//
// All reductions weight every non-excluded entry uniformly. exclude_initial
// drops the time-index-0 slice (simulation states at t=0 are handed to the
// model, so scoring them would flatter every method equally).
// ============================================================================

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  double linf = 0.0;
  double rel_l2 = 0.0;
};

inline Metrics compute_metrics(const GridTensor& pred, const GridTensor& truth,
                               bool exclude_initial = false) {
  require(pred.same_shape(truth), "metrics: shape mismatch");
  std::size_t time_axis = GridTensor::npos;
  std::size_t time_stride = 0;
  if (exclude_initial) {
    time_axis = pred.time_axis();
    require(time_axis != GridTensor::npos,
            "metrics: exclude_initial requires a time axis");
    require(pred.dim(time_axis) >= 2,
            "metrics: exclude_initial requires >= 2 time slices");
    time_stride = pred.strides()[time_axis];
  }

  const std::size_t total = pred.element_count();
  double sum_sq = 0.0, sum_abs = 0.0, max_abs = 0.0, ref_sq = 0.0;
  std::size_t counted = 0;
  const std::size_t block = exclude_initial ? time_stride * pred.dim(time_axis) : total;
  for (std::size_t i = 0; i < total; ++i) {
    if (exclude_initial && (i % block) < time_stride) continue;  // t = 0 slice
    const double d = pred[i] - truth[i];
    sum_sq += d * d;
    sum_abs += std::abs(d);
    max_abs = std::max(max_abs, std::abs(d));
    ref_sq += truth[i] * truth[i];
    ++counted;
  }
  require(counted > 0, "metrics: nothing to reduce");
  Metrics m;
  m.mse = sum_sq / static_cast<double>(counted);
  m.mae = sum_abs / static_cast<double>(counted);
  m.linf = max_abs;
  if (ref_sq <= 0.0) {
    if (sum_sq == 0.0) {
      m.rel_l2 = 0.0;  // exact match of an all-zero reference
    } else {
      throw NumericalError("metrics: rel_l2 reference has zero norm");
    }
  } else {
    m.rel_l2 = std::sqrt(sum_sq / ref_sq);
  }
  return m;
}

/// rel_l2 between raw buffers (helper for non-GridTensor call sites).
inline double rel_l2(const std::vector<double>& pred, const std::vector<double>& truth) {
  require(pred.size() == truth.size(), "rel_l2: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  if (den <= 0.0) {
    if (num == 0.0) return 0.0;
    throw NumericalError("rel_l2: reference has zero norm");
  }
  return std::sqrt(num / den);
}

}  // namespace wavediff

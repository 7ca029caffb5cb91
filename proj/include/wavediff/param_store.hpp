#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavediff/autodiff.hpp"
#include "wavediff/errors.hpp"

namespace wavediff::nn {

// ============================================================================
// Ordered parameter container: values, gradient buffers, Adam moments, and
// per-level coefficient normalization statistics. Iteration order is
// registration order everywhere (updates, serialization), which keeps whole
// training runs bit-reproducible.
// ============================================================================

struct ParamEntry {
  Tensor value, grad, m, v;
};

/// Per-channel z-scoring statistics for one resolution level.
struct NormStats {
  std::vector<double> mean, stdev;

  void validate() const {
    require(mean.size() == stdev.size(), "norm stats: mean/std length mismatch");
    for (double s : stdev) require(s > 0.0, "norm stats: std entries must be positive");
  }
};

class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init) {
    require(!has(name), "param store: duplicate parameter '" + name + "'");
    ParamEntry e;
    e.grad = Tensor(init.dims);
    e.m = Tensor(init.dims);
    e.v = Tensor(init.dims);
    e.value = std::move(init);
    entries_.emplace_back(name, std::move(e));
    return entries_.back().second.value;
  }

  [[nodiscard]] bool has(const std::string& name) const {
    for (const auto& [n, e] : entries_)
      if (n == name) return true;
    return false;
  }

  ParamEntry& entry(const std::string& name) {
    for (auto& [n, e] : entries_)
      if (n == name) return e;
    throw ValidationError("param store: no parameter '" + name + "'");
  }

  [[nodiscard]] const ParamEntry& entry(const std::string& name) const {
    for (const auto& [n, e] : entries_)
      if (n == name) return e;
    throw ValidationError("param store: no parameter '" + name + "'");
  }

  [[nodiscard]] std::vector<std::pair<std::string, ParamEntry>>& entries() {
    return entries_;
  }
  [[nodiscard]] const std::vector<std::pair<std::string, ParamEntry>>& entries() const {
    return entries_;
  }

  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, e] : entries_) std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
    grads_ready = false;
  }

  /// Model configuration and bookkeeping carried into checkpoints.
  nlohmann::json meta = nlohmann::json::object();
  /// Per-level coefficient normalization statistics.
  std::map<std::size_t, NormStats> stats;
  /// Adam step counter (shared across parameters).
  std::uint64_t adam_t = 0;
  /// Set by gradient accumulation, consumed by the optimizer.
  bool grads_ready = false;

 private:
  std::vector<std::pair<std::string, ParamEntry>> entries_;
};

}  // namespace wavediff::nn

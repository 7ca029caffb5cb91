#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "wavediff/errors.hpp"

namespace wavediff {

// ============================================================================
// Variance schedule for the denoising diffusion process.
//
// Steps are 1-based: k in [1, K]. alpha_bar(0) == 1 by definition, which makes
// the posterior standard deviation sigma(1) == 0 — the final denoising update
// is deterministic.
// ============================================================================

class NoiseSchedule {
 public:
  /// Linearly spaced betas from beta_min (k=1) to beta_max (k=K).
  static NoiseSchedule linear(std::size_t steps = 1000, double beta_min = 1e-4,
                              double beta_max = 0.02) {
    require(steps >= 1, "schedule: need at least one step");
    require(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0,
            "schedule: betas must satisfy 0 < beta_min <= beta_max < 1");
    NoiseSchedule ns;
    ns.beta_.resize(steps);
    for (std::size_t i = 0; i < steps; ++i)
      ns.beta_[i] = steps == 1 ? beta_min
                               : beta_min + (beta_max - beta_min) *
                                                static_cast<double>(i) /
                                                static_cast<double>(steps - 1);
    ns.finish();
    return ns;
  }

  [[nodiscard]] std::size_t steps() const { return beta_.size(); }

  [[nodiscard]] double beta(std::size_t k) const {
    check_step(k);
    return beta_[k - 1];
  }
  [[nodiscard]] double alpha(std::size_t k) const { return 1.0 - beta(k); }

  /// Cumulative signal retention; defined for k in [0, K] with alpha_bar(0)=1.
  [[nodiscard]] double alpha_bar(std::size_t k) const {
    require(k <= steps(), "schedule: step index out of range");
    return alpha_bar_[k];
  }

  /// Posterior standard deviation sqrt(beta_k (1-abar_{k-1}) / (1-abar_k)).
  [[nodiscard]] double sigma(std::size_t k) const {
    check_step(k);
    return sigma_[k - 1];
  }

  void validate(double tol = 1e-12) const {
    require(!beta_.empty(), "schedule: empty");
    require(alpha_bar_.size() == beta_.size() + 1 && sigma_.size() == beta_.size(),
            "schedule: inconsistent table sizes");
    require(alpha_bar_[0] == 1.0, "schedule: alpha_bar(0) must be 1");
    for (std::size_t k = 1; k <= steps(); ++k) {
      require(beta_[k - 1] > 0.0 && beta_[k - 1] < 1.0, "schedule: beta out of (0,1)");
      require(alpha_bar_[k] > 0.0 && alpha_bar_[k] < alpha_bar_[k - 1],
              "schedule: alpha_bar must decrease and stay positive");
      const double recur = alpha_bar_[k - 1] * (1.0 - beta_[k - 1]);
      require(std::abs(alpha_bar_[k] - recur) <= tol,
              "schedule: alpha_bar recurrence violated");
      const double want =
          std::sqrt(beta_[k - 1] * (1.0 - alpha_bar_[k - 1]) / (1.0 - alpha_bar_[k]));
      require(std::abs(sigma_[k - 1] - want) <= tol, "schedule: sigma table corrupt");
    }
    require(sigma_[0] == 0.0, "schedule: sigma(1) must be 0");
  }

 private:
  void finish() {
    const std::size_t K = beta_.size();
    alpha_bar_.assign(K + 1, 1.0);
    sigma_.assign(K, 0.0);
    for (std::size_t k = 1; k <= K; ++k) {
      alpha_bar_[k] = alpha_bar_[k - 1] * (1.0 - beta_[k - 1]);
      sigma_[k - 1] =
          std::sqrt(beta_[k - 1] * (1.0 - alpha_bar_[k - 1]) / (1.0 - alpha_bar_[k]));
    }
    validate();
  }

  void check_step(std::size_t k) const {
    require(k >= 1 && k <= steps(), "schedule: step index out of range");
  }

  std::vector<double> beta_, alpha_bar_, sigma_;
};

}  // namespace wavediff

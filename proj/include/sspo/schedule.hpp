#pragma once

#include <string_view>
#include <vector>

#include "sspo/numerics.hpp"

namespace sspo {

enum class WeightingMode { kConstant, kExact };

std::string_view to_string(WeightingMode mode);
WeightingMode parse_weighting_mode(std::string_view text);

/// Forward diffusion with a single retention factor alpha per step, so the
/// cumulative coefficient after t steps is alpha^t.
///
/// sigma_t_sq() and weight_w_t() evaluate the closed forms exactly as
/// written for this schedule, including the half-power alpha^((t-1)/2) in
/// the variance. That expression is not the usual DDPM posterior variance
/// (1 - abar_{t-1}) / (1 - abar_t) * (1 - alpha); it is kept verbatim and
/// the sampler uses it too.
class NoiseSchedule {
 public:
  NoiseSchedule(double alpha, int steps, WeightingMode mode = WeightingMode::kConstant);

  double alpha() const noexcept { return alpha_; }
  int steps() const noexcept { return steps_; }
  WeightingMode weighting() const noexcept { return mode_; }

  /// alpha^t for 1 <= t <= T.
  double alpha_bar(int t) const;
  /// sqrt(alpha^t) * x0 + sqrt(1 - alpha^t) * eps.
  Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& eps) const;
  void forward_diffuse(std::span<const double> x0, int t, std::span<const double> eps,
                       std::span<double> out) const;
  /// (1 - alpha)(1 - alpha^((t-1)/2)) / (1 - alpha^t); zero at t = 1.
  double sigma_t_sq(int t) const;
  /// 1 in constant mode; (1-alpha)^2 alpha^(t-1) / (2 sigma_t^2 (1-alpha^t)^2)
  /// in exact mode, which is undefined at t = 1.
  double weight_w_t(int t) const;

  /// Smallest timestep the training loss may draw (2 in exact mode).
  int min_train_timestep() const noexcept { return mode_ == WeightingMode::kExact ? 2 : 1; }

 private:
  void check_timestep(int t) const;

  double alpha_;
  int steps_;
  WeightingMode mode_;
  std::vector<double> alpha_bar_;  // alpha_bar_[t] = alpha^t, index 0..T
};

}  // namespace sspo

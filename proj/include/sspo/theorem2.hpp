#pragma once

#include <span>
#include <vector>

#include "sspo/schedule.hpp"

namespace sspo {

/// Bias-predictor check of the KL / MSE correspondence used to justify the
/// sign criterion. For eps_theta(x_t) = eps + b the recovered x0 has mean
/// shift -sqrt((1 - abar)/abar) * b, so with source variance sigma0^2
///   KL = |shift|^2 / (2 sigma0^2) = (1 - abar) / (2 sigma0^2 abar) * |b|^2
/// and the expected MSE of the predictor is exactly |b|^2.
struct Theorem2Report {
  double kl1 = 0.0;              // via the closed form
  double kl2 = 0.0;
  double kl1_from_means = 0.0;   // via the mean-shift route
  double kl2_from_means = 0.0;
  double mse_gap = 0.0;          // |b1|^2 - |b2|^2
  double kl_gap = 0.0;           // kl1 - kl2
  double coefficient = 0.0;      // (1 - abar) / (2 sigma0^2 abar)
  double identity_residual = 0.0;
  bool ordering_agrees = false;
};

Theorem2Report theorem2_bias_check(const NoiseSchedule& schedule, int t, double sigma0_sq,
                                   std::span<const double> bias1, std::span<const double> bias2);

}  // namespace sspo
